//! Manifest-driven evaluation: load detections (or probability maps to
//! extract from) and ground-truth masks, match candidates to lesions, and
//! summarize AUROC / AP with bootstrap intervals.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bootstrap::{bootstrap_ci, Metric};
use super::components::{label_components, GtLesion};
use super::matching::{match_candidates, CandidateMatch, DEFAULT_MIN_IOU};
use super::{auroc_cases, average_precision_cases};
use crate::candidates::{
    candidates_from_detection_map, extract_candidates, patient_score, Candidate, ExtractionParams,
};
use crate::neighborhood::Connectivity;
use crate::numfmt::sig_digits;
use crate::splits::Label;
use crate::volume::mha::read_mha;
use crate::volume::ProbabilityMap;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEval {
    pub case_id: String,
    pub label: Label,
    pub patient_score: f64,
    pub candidate_matches: Vec<CandidateMatch>,
    pub num_gt_lesions: usize,
}

impl CaseEval {
    pub fn true_positives(&self) -> usize {
        self.candidate_matches
            .iter()
            .filter(|m| m.is_true_positive())
            .count()
    }

    pub fn false_positives(&self) -> usize {
        self.candidate_matches.len() - self.true_positives()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub ap: f64,
    /// `None` when bootstrapping was disabled.
    pub auroc_ci: Option<(f64, f64)>,
    pub ap_ci: Option<(f64, f64)>,
    pub n_cases: usize,
    pub n_lesions: usize,
    pub per_case: Vec<CaseEval>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub min_iou: f64,
    /// Bootstrap resamples; 0 disables the intervals.
    pub bootstrap: usize,
    pub seed: u64,
    pub level: f64,
    /// Used for manifest entries that supply a probability map.
    pub extraction: ExtractionParams,
    pub gt_connectivity: Connectivity,
    /// Adjacency used to split a detection map back into candidates.
    pub detection_connectivity: Connectivity,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            min_iou: DEFAULT_MIN_IOU,
            bootstrap: 1000,
            seed: 42,
            level: 0.95,
            extraction: ExtractionParams::default(),
            gt_connectivity: Connectivity::TwentySix,
            detection_connectivity: Connectivity::TwentySix,
        }
    }
}

/// One row of an evaluation manifest. Exactly one of `detection` and
/// `probability` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<PathBuf>,
    #[serde(default)]
    pub gt: Option<PathBuf>,
}

/// Reads a manifest; relative paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    let mut entries: Vec<ManifestEntry> =
        serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for e in &mut entries {
        for p in [&mut e.detection, &mut e.probability, &mut e.gt]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    validate_manifest(&entries)?;
    Ok(entries)
}

pub fn validate_manifest(entries: &[ManifestEntry]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for e in entries {
        if !seen.insert(e.case_id.as_str()) {
            return Err(Error::Manifest(format!("duplicate case_id {}", e.case_id)));
        }
        match (&e.detection, &e.probability) {
            (Some(_), Some(_)) => {
                return Err(Error::Manifest(format!(
                    "case {} gives both detection and probability",
                    e.case_id
                )))
            }
            (None, None) => {
                return Err(Error::Manifest(format!(
                    "case {} gives neither detection nor probability",
                    e.case_id
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum CaseSource {
    Detection(ProbabilityMap),
    Probability(ProbabilityMap),
}

/// A manifest case with its volumes read and ground truth labeled.
#[derive(Debug, Clone)]
pub struct LoadedCase {
    pub case_id: String,
    pub label: Label,
    pub source: CaseSource,
    pub lesions: Vec<GtLesion>,
}

fn read_probability(path: &Path) -> Result<ProbabilityMap> {
    let v = read_mha(path).map_err(|e| Error::from(e).at(path))?;
    ProbabilityMap::new(v).map_err(|e| Error::from(e).at(path))
}

pub fn load_case(entry: &ManifestEntry, gt_connectivity: Connectivity) -> Result<LoadedCase> {
    let source = match (&entry.detection, &entry.probability) {
        (Some(p), None) => CaseSource::Detection(read_probability(p)?),
        (None, Some(p)) => CaseSource::Probability(read_probability(p)?),
        _ => {
            validate_manifest(std::slice::from_ref(entry))?;
            unreachable!("validation rejects this entry")
        }
    };
    let geometry = match &source {
        CaseSource::Detection(m) | CaseSource::Probability(m) => *m.geometry(),
    };
    let lesions = match &entry.gt {
        None => Vec::new(),
        Some(path) => {
            let mask = read_mha(path).map_err(|e| Error::from(e).at(path))?;
            if !mask.geometry().is_compatible(&geometry) {
                return Err(Error::Manifest(format!(
                    "case {}: ground truth geometry {:?} does not match detection geometry {:?}",
                    entry.case_id,
                    mask.geometry(),
                    geometry
                )));
            }
            label_components(&mask, gt_connectivity)
        }
    };
    if !entry.label.is_positive() && !lesions.is_empty() {
        return Err(Error::Manifest(format!(
            "negative case {} has {} ground-truth lesions",
            entry.case_id,
            lesions.len()
        )));
    }
    Ok(LoadedCase {
        case_id: entry.case_id.clone(),
        label: entry.label,
        source,
        lesions,
    })
}

pub fn case_eval_from_candidates(
    case_id: &str,
    label: Label,
    candidates: &[Candidate],
    patient_score: f64,
    lesions: &[GtLesion],
    min_iou: f64,
) -> Result<CaseEval> {
    Ok(CaseEval {
        case_id: case_id.to_string(),
        label,
        patient_score,
        candidate_matches: match_candidates(candidates, lesions, min_iou)?,
        num_gt_lesions: lesions.len(),
    })
}

/// Evaluates one loaded case. Probability sources are extracted with
/// `extraction`; detection maps are split into candidates.
pub fn evaluate_loaded(
    case: &LoadedCase,
    extraction: &ExtractionParams,
    min_iou: f64,
    detection_connectivity: Connectivity,
) -> Result<CaseEval> {
    let (candidates, score) = match &case.source {
        CaseSource::Probability(p) => {
            let r = extract_candidates(p, extraction)?;
            let score = patient_score(&r);
            (r.candidates, score)
        }
        CaseSource::Detection(d) => (
            candidates_from_detection_map(d, detection_connectivity),
            d.max() as f64,
        ),
    };
    case_eval_from_candidates(
        &case.case_id,
        case.label,
        &candidates,
        score,
        &case.lesions,
        min_iou,
    )
}

/// Point estimates and, if enabled, bootstrap intervals over per-case results.
pub fn summarize(per_case: Vec<CaseEval>, opts: &EvalOptions) -> Result<EvalReport> {
    let auroc = auroc_cases(&per_case)?;
    let ap = average_precision_cases(&per_case)?;
    let (auroc_ci, ap_ci) = if opts.bootstrap > 0 {
        (
            Some(bootstrap_ci(
                &per_case,
                Metric::Auroc,
                opts.bootstrap,
                opts.seed,
                opts.level,
            )?),
            Some(bootstrap_ci(
                &per_case,
                Metric::Ap,
                opts.bootstrap,
                opts.seed,
                opts.level,
            )?),
        )
    } else {
        (None, None)
    };
    Ok(EvalReport {
        auroc,
        ap,
        auroc_ci,
        ap_ci,
        n_cases: per_case.len(),
        n_lesions: per_case.iter().map(|c| c.num_gt_lesions).sum(),
        per_case,
    })
}

/// Loads and evaluates every manifest entry (in parallel, order preserved).
pub fn evaluate_manifest(entries: &[ManifestEntry], opts: &EvalOptions) -> Result<EvalReport> {
    opts.extraction.validate()?;
    validate_manifest(entries)?;
    let per_case = entries
        .par_iter()
        .map(|e| {
            let case = load_case(e, opts.gt_connectivity)?;
            evaluate_loaded(
                &case,
                &opts.extraction,
                opts.min_iou,
                opts.detection_connectivity,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(per_case, opts)
}

/// One CSV row per case.
pub fn per_case_csv(report: &EvalReport) -> String {
    let mut out = String::from(
        "case_id,label,patient_score,num_candidates,num_gt_lesions,true_positives,false_positives\n",
    );
    for c in &report.per_case {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.case_id,
            c.label.as_str(),
            sig_digits(c.patient_score, 9),
            c.candidate_matches.len(),
            c.num_gt_lesions,
            c.true_positives(),
            c.false_positives()
        ));
    }
    out
}
