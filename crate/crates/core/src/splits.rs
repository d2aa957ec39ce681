//! Lesion-size stratified K-fold assignment.
//!
//! Positive cases are binned by lesion-size quartile and dealt to folds by
//! one continuous round-robin that walks the bins in order, each bin
//! shuffled first. Negatives are shuffled and dealt by the same round-robin,
//! continuing where the positives stopped. Every bin, the positive totals,
//! the negative totals and the overall totals therefore differ by at most
//! one case between folds.
//!
//! Shuffles use [`crate::rng::Stream`]: bin `b` draws from stream `b`
//! (0..=3), negatives from stream [`NEGATIVE_STREAM`]. Cases are sorted by
//! `case_id` before anything else, so input order never matters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;

/// Stream id for shuffling negative cases (ASCII "neg").
pub const NEGATIVE_STREAM: u64 = 0x006E_6567;
pub const NUM_BINS: usize = 4;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("no lesion sizes to bin")]
    EmptySizes,
    #[error("lesion size must be finite and positive, got {0}")]
    InvalidSize(f64),
    #[error("positive case {0} is missing a lesion size")]
    MissingLesionSize(String),
    #[error("number of folds must be at least 2, got {0}")]
    TooFewFolds(usize),
    #[error("duplicate case_id {0}")]
    DuplicateCase(String),
    #[error("case {0} has no fold assignment")]
    Unassigned(String),
    #[error("assignment names unknown case {0}")]
    UnknownCase(String),
    #[error("case {case} assigned to fold {fold}, but there are only {num_folds} folds")]
    FoldOutOfRange {
        case: String,
        fold: usize,
        num_folds: usize,
    },
    #[error("invalid case table row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "PDAC")]
    Positive,
    #[serde(rename = "non-PDAC")]
    Negative,
}

impl Label {
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim() {
            "PDAC" => Some(Label::Positive),
            "non-PDAC" => Some(Label::Negative),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "PDAC",
            Label::Negative => "non-PDAC",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: String,
    pub label: Label,
    /// Lesion size in mm; required for positive cases.
    pub lesion_size: Option<f64>,
    pub age: Option<f64>,
    pub sex: Option<Sex>,
}

impl CaseRecord {
    pub fn positive(case_id: impl Into<String>, lesion_size: f64) -> Self {
        CaseRecord {
            case_id: case_id.into(),
            label: Label::Positive,
            lesion_size: Some(lesion_size),
            age: None,
            sex: None,
        }
    }

    pub fn negative(case_id: impl Into<String>) -> Self {
        CaseRecord {
            case_id: case_id.into(),
            label: Label::Negative,
            lesion_size: None,
            age: None,
            sex: None,
        }
    }
}

/// Nearest-rank quartiles and the bin of each input size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileBins {
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
    /// Bin (0..4) of each input, in input order.
    pub bins: Vec<usize>,
}

impl QuartileBins {
    /// Bins are `[min, q25]`, `(q25, q50]`, `(q50, q75]`, `(q75, max]`.
    pub fn bin_of(&self, size: f64) -> usize {
        if size <= self.q25 {
            0
        } else if size <= self.q50 {
            1
        } else if size <= self.q75 {
            2
        } else {
            3
        }
    }
}

/// Value at 1-based rank `ceil(p/100 * n)` of the ascending sort.
fn nearest_rank(sorted: &[f64], percent: usize) -> f64 {
    let n = sorted.len();
    let rank = (percent * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

pub fn quartile_bins(sizes: &[f64]) -> Result<QuartileBins, SplitError> {
    if sizes.is_empty() {
        return Err(SplitError::EmptySizes);
    }
    if let Some(&bad) = sizes.iter().find(|s| !s.is_finite() || **s <= 0.0) {
        return Err(SplitError::InvalidSize(bad));
    }
    let mut sorted = sizes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut q = QuartileBins {
        min: sorted[0],
        q25: nearest_rank(&sorted, 25),
        q50: nearest_rank(&sorted, 50),
        q75: nearest_rank(&sorted, 75),
        max: sorted[sorted.len() - 1],
        bins: Vec::new(),
    };
    q.bins = sizes.iter().map(|&s| q.bin_of(s)).collect();
    Ok(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub num_folds: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
    /// Non-fatal notes, e.g. fewer cases of a class than folds.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl FoldAssignment {
    /// Case ids per fold, each list sorted.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut folds = vec![Vec::new(); self.num_folds];
        for (case, &f) in &self.assignment {
            if f < self.num_folds {
                folds[f].push(case.clone());
            }
        }
        folds
    }
}

fn check_cases(cases: &[CaseRecord]) -> Result<(), SplitError> {
    let mut ids = HashSet::new();
    for c in cases {
        if !ids.insert(c.case_id.as_str()) {
            return Err(SplitError::DuplicateCase(c.case_id.clone()));
        }
        if c.label.is_positive() {
            match c.lesion_size {
                None => return Err(SplitError::MissingLesionSize(c.case_id.clone())),
                Some(s) if !s.is_finite() || s <= 0.0 => return Err(SplitError::InvalidSize(s)),
                _ => {}
            }
        }
    }
    Ok(())
}

/// Positive cases sorted by id, paired with their quartile bin.
fn positive_bins(
    cases: &[CaseRecord],
) -> Result<(Vec<&CaseRecord>, Option<QuartileBins>), SplitError> {
    let mut positives: Vec<&CaseRecord> = cases.iter().filter(|c| c.label.is_positive()).collect();
    positives.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    if positives.is_empty() {
        return Ok((positives, None));
    }
    let sizes: Vec<f64> = positives
        .iter()
        .map(|c| c.lesion_size.expect("checked"))
        .collect();
    let q = quartile_bins(&sizes)?;
    Ok((positives, Some(q)))
}

pub fn stratified_kfold(
    cases: &[CaseRecord],
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, SplitError> {
    if k < 2 {
        return Err(SplitError::TooFewFolds(k));
    }
    check_cases(cases)?;
    let (positives, quartiles) = positive_bins(cases)?;
    let mut negatives: Vec<&CaseRecord> = cases.iter().filter(|c| !c.label.is_positive()).collect();
    negatives.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let mut warnings = Vec::new();
    if positives.len() < k {
        warnings.push(format!(
            "only {} positive cases for {k} folds",
            positives.len()
        ));
    }
    if negatives.len() < k {
        warnings.push(format!(
            "only {} negative cases for {k} folds",
            negatives.len()
        ));
    }

    let mut assignment = BTreeMap::new();
    let mut next_fold = 0usize;
    let mut deal = |ids: Vec<&str>, assignment: &mut BTreeMap<String, usize>| {
        for id in ids {
            assignment.insert(id.to_string(), next_fold);
            next_fold = (next_fold + 1) % k;
        }
    };

    if let Some(q) = &quartiles {
        let mut by_bin: Vec<Vec<&str>> = vec![Vec::new(); NUM_BINS];
        for (case, &bin) in positives.iter().zip(&q.bins) {
            by_bin[bin].push(case.case_id.as_str());
        }
        for (bin, mut ids) in by_bin.into_iter().enumerate() {
            Stream::new(seed, bin as u64).shuffle(&mut ids);
            deal(ids, &mut assignment);
        }
    }
    let mut neg_ids: Vec<&str> = negatives.iter().map(|c| c.case_id.as_str()).collect();
    Stream::new(seed, NEGATIVE_STREAM).shuffle(&mut neg_ids);
    deal(neg_ids, &mut assignment);

    Ok(FoldAssignment {
        num_folds: k,
        seed,
        assignment,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub positives: usize,
    pub negatives: usize,
    pub positive_ratio: f64,
    pub bin_counts: [usize; NUM_BINS],
    pub mean_age: Option<f64>,
    pub male: usize,
    pub female: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub quartiles: Option<[f64; 3]>,
    pub folds: Vec<FoldSummary>,
    pub violations: Vec<String>,
}

impl SplitReport {
    pub fn is_balanced(&self) -> bool {
        self.violations.is_empty()
    }
}

fn spread(values: impl Iterator<Item = usize>) -> usize {
    let (lo, hi) = values.fold((usize::MAX, 0), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi.saturating_sub(lo)
}

/// Per-fold composition and any balance violations (spread > 1).
pub fn validate_split(
    cases: &[CaseRecord],
    fa: &FoldAssignment,
) -> Result<SplitReport, SplitError> {
    if fa.num_folds < 2 {
        return Err(SplitError::TooFewFolds(fa.num_folds));
    }
    check_cases(cases)?;
    let by_id: HashMap<&str, &CaseRecord> = cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
    for (id, &fold) in &fa.assignment {
        if !by_id.contains_key(id.as_str()) {
            return Err(SplitError::UnknownCase(id.clone()));
        }
        if fold >= fa.num_folds {
            return Err(SplitError::FoldOutOfRange {
                case: id.clone(),
                fold,
                num_folds: fa.num_folds,
            });
        }
    }
    for c in cases {
        if !fa.assignment.contains_key(&c.case_id) {
            return Err(SplitError::Unassigned(c.case_id.clone()));
        }
    }

    let (positives, quartiles) = positive_bins(cases)?;
    let mut folds: Vec<FoldSummary> = (0..fa.num_folds)
        .map(|fold| FoldSummary {
            fold,
            positives: 0,
            negatives: 0,
            positive_ratio: 0.0,
            bin_counts: [0; NUM_BINS],
            mean_age: None,
            male: 0,
            female: 0,
        })
        .collect();
    if let Some(q) = &quartiles {
        for (case, &bin) in positives.iter().zip(&q.bins) {
            folds[fa.assignment[&case.case_id]].bin_counts[bin] += 1;
        }
    }
    let mut age_sums = vec![(0.0f64, 0usize); fa.num_folds];
    for c in cases {
        let f = &mut folds[fa.assignment[&c.case_id]];
        if c.label.is_positive() {
            f.positives += 1;
        } else {
            f.negatives += 1;
        }
        match c.sex {
            Some(Sex::M) => f.male += 1,
            Some(Sex::F) => f.female += 1,
            None => {}
        }
        if let Some(age) = c.age {
            let s = &mut age_sums[f.fold];
            s.0 += age;
            s.1 += 1;
        }
    }
    for (f, (sum, n)) in folds.iter_mut().zip(age_sums) {
        let total = f.positives + f.negatives;
        f.positive_ratio = if total == 0 {
            0.0
        } else {
            f.positives as f64 / total as f64
        };
        f.mean_age = (n > 0).then(|| sum / n as f64);
    }

    let mut violations = Vec::new();
    for bin in 0..NUM_BINS {
        let s = spread(folds.iter().map(|f| f.bin_counts[bin]));
        if s > 1 {
            violations.push(format!(
                "quartile bin {bin} counts differ by {s} across folds"
            ));
        }
    }
    let s = spread(folds.iter().map(|f| f.positives));
    if s > 1 {
        violations.push(format!("positive counts differ by {s} across folds"));
    }
    let s = spread(folds.iter().map(|f| f.negatives));
    if s > 1 {
        violations.push(format!("negative counts differ by {s} across folds"));
    }

    Ok(SplitReport {
        quartiles: quartiles.map(|q| [q.q25, q.q50, q.q75]),
        folds,
        violations,
    })
}

#[derive(Debug, Deserialize)]
struct RawRow {
    case_id: String,
    label: String,
    lesion_size_mm: Option<String>,
    age: Option<String>,
    sex: Option<String>,
}

fn parse_opt_f64(raw: &Option<String>, what: &str, row: usize) -> Result<Option<f64>, SplitError> {
    match raw.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse::<f64>()
            .map(Some)
            .map_err(|_| SplitError::InvalidRow {
                row,
                reason: format!("cannot parse {what} `{s}`"),
            }),
    }
}

/// Reads `case_id,label,lesion_size_mm,age,sex` rows.
pub fn read_cases_csv(reader: impl Read) -> Result<Vec<CaseRecord>, SplitError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<RawRow>().enumerate() {
        let row_no = i + 2;
        let raw = row?;
        if raw.case_id.is_empty() {
            return Err(SplitError::InvalidRow {
                row: row_no,
                reason: "empty case_id".into(),
            });
        }
        let label = Label::parse(&raw.label).ok_or_else(|| SplitError::InvalidRow {
            row: row_no,
            reason: format!("label must be PDAC or non-PDAC, got `{}`", raw.label),
        })?;
        let lesion_size = parse_opt_f64(&raw.lesion_size_mm, "lesion_size_mm", row_no)?;
        let age = parse_opt_f64(&raw.age, "age", row_no)?;
        let sex = match raw.sex.as_deref().map(str::trim) {
            None | Some("") => None,
            Some("M") => Some(Sex::M),
            Some("F") => Some(Sex::F),
            Some(other) => {
                return Err(SplitError::InvalidRow {
                    row: row_no,
                    reason: format!("sex must be M or F, got `{other}`"),
                })
            }
        };
        if label.is_positive() && lesion_size.is_none() {
            return Err(SplitError::MissingLesionSize(raw.case_id));
        }
        out.push(CaseRecord {
            case_id: raw.case_id,
            label,
            lesion_size,
            age,
            sex,
        });
    }
    Ok(out)
}

pub fn read_cases_csv_path(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>, SplitError> {
    read_cases_csv(std::fs::File::open(path)?)
}

/// The JSON document written by the `split` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutput {
    pub num_folds: usize,
    pub seed: u64,
    pub folds: BTreeMap<String, Vec<String>>,
    pub report: SplitReport,
}

impl SplitOutput {
    pub fn new(fa: &FoldAssignment, report: SplitReport) -> Self {
        SplitOutput {
            num_folds: fa.num_folds,
            seed: fa.seed,
            folds: fa
                .folds()
                .into_iter()
                .enumerate()
                .map(|(i, ids)| (i.to_string(), ids))
                .collect(),
            report,
        }
    }
}
