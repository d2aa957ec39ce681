//! Threshold grid search: re-extract every case of every fold at each
//! `1/alpha` (and optionally a fixed tau) and record AUROC and AP.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{ConfidenceRule, ExtractionParams, ThresholdMode};
use crate::fsutil::atomic_write;
use crate::metrics::eval::{evaluate_loaded, load_case, load_manifest, LoadedCase};
use crate::metrics::{auroc_cases, average_precision_cases, DEFAULT_MIN_IOU};
use crate::neighborhood::Connectivity;
use crate::numfmt::sig_digits;
use crate::{Error, Result};

pub const DEFAULT_INVERSE_ALPHAS: [f64; 8] = [2.5, 5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0];

fn default_inverse_alphas() -> Vec<f64> {
    DEFAULT_INVERSE_ALPHAS.to_vec()
}

fn default_fixed_tau() -> Option<f64> {
    Some(ExtractionParams::BASELINE_TAU)
}

fn default_min_iou() -> f64 {
    DEFAULT_MIN_IOU
}

/// Extraction settings shared by every sweep setting; unset fields keep the
/// caller's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionOverrides {
    pub max_candidates: Option<usize>,
    pub min_seed_prob: Option<f64>,
    pub min_voxels: Option<usize>,
    pub connectivity: Option<Connectivity>,
    pub confidence: Option<ConfidenceRule>,
}

impl ExtractionOverrides {
    pub fn apply(&self, mut base: ExtractionParams) -> ExtractionParams {
        if let Some(v) = self.max_candidates {
            base.max_candidates = v;
        }
        if let Some(v) = self.min_seed_prob {
            base.min_seed_prob = v;
        }
        if let Some(v) = self.min_voxels {
            base.min_voxels = v;
        }
        if let Some(v) = self.connectivity {
            base.connectivity = v;
        }
        if let Some(v) = self.confidence {
            base.confidence = v;
        }
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_inverse_alphas")]
    pub inverse_alphas: Vec<f64>,
    /// Baseline fixed-threshold series; `null` disables it.
    #[serde(default = "default_fixed_tau")]
    pub include_fixed_tau: Option<f64>,
    /// Fold index to evaluation manifest.
    pub folds: BTreeMap<usize, PathBuf>,
    #[serde(default = "default_min_iou")]
    pub min_iou: f64,
    #[serde(default)]
    pub extraction: ExtractionOverrides,
}

impl SweepConfig {
    pub fn new(folds: BTreeMap<usize, PathBuf>) -> Self {
        SweepConfig {
            inverse_alphas: default_inverse_alphas(),
            include_fixed_tau: default_fixed_tau(),
            folds,
            min_iou: DEFAULT_MIN_IOU,
            extraction: ExtractionOverrides::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for &inv in &self.inverse_alphas {
            // alpha = 1/inv must lie in (0, 1]
            if !inv.is_finite() || inv < 1.0 {
                return Err(Error::SweepConfig(format!(
                    "inverse alpha must be finite and at least 1, got {inv}"
                )));
            }
            if !seen.insert(inv.to_bits()) {
                return Err(Error::SweepConfig(format!("duplicate inverse alpha {inv}")));
            }
        }
        if let Some(tau) = self.include_fixed_tau {
            if !(tau.is_finite() && tau > 0.0 && tau <= 1.0) {
                return Err(Error::SweepConfig(format!(
                    "fixed tau must be in (0, 1], got {tau}"
                )));
            }
        }
        if self.inverse_alphas.is_empty() && self.include_fixed_tau.is_none() {
            return Err(Error::SweepConfig("no settings to sweep".into()));
        }
        if self.folds.is_empty() {
            return Err(Error::SweepConfig("no folds given".into()));
        }
        if !(0.0..=1.0).contains(&self.min_iou) {
            return Err(Error::SweepConfig(format!(
                "min_iou must be in [0, 1], got {}",
                self.min_iou
            )));
        }
        Ok(())
    }

    pub fn settings(&self) -> Vec<Setting> {
        self.inverse_alphas
            .iter()
            .map(|&v| Setting::InverseAlpha(v))
            .chain(self.include_fixed_tau.map(Setting::FixedTau))
            .collect()
    }
}

/// Reads a sweep config; relative manifest paths resolve against its directory.
pub fn load_sweep_config(path: impl AsRef<Path>) -> Result<SweepConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    let mut cfg: SweepConfig = serde_json::from_str(&text).map_err(|e| Error::from(e).at(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in cfg.folds.values_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Setting {
    InverseAlpha(f64),
    FixedTau(f64),
}

impl Setting {
    pub fn descriptor(&self) -> String {
        match self {
            Setting::InverseAlpha(v) => format!("inv_alpha={}", sig_digits(*v, 6)),
            Setting::FixedTau(t) => format!("tau={}", sig_digits(*t, 6)),
        }
    }

    pub fn inverse_alpha(&self) -> Option<f64> {
        match self {
            Setting::InverseAlpha(v) => Some(*v),
            Setting::FixedTau(_) => None,
        }
    }

    pub fn params(&self, base: &ExtractionParams) -> ExtractionParams {
        let threshold = match *self {
            Setting::InverseAlpha(v) => ThresholdMode::Adaptive { alpha: 1.0 / v },
            Setting::FixedTau(tau) => ThresholdMode::Fixed { tau },
        };
        ExtractionParams { threshold, ..*base }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fold: usize,
    pub setting: Setting,
    pub auroc: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Evaluates one fold's loaded cases at each setting.
pub fn sweep_fold(
    fold: usize,
    cases: &[LoadedCase],
    settings: &[Setting],
    base: &ExtractionParams,
    min_iou: f64,
) -> Result<Vec<SweepRow>> {
    settings
        .iter()
        .map(|setting| {
            let params = setting.params(base);
            params.validate()?;
            let per_case = cases
                .par_iter()
                .map(|c| evaluate_loaded(c, &params, min_iou, Connectivity::TwentySix))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                fold,
                setting: *setting,
                auroc: auroc_cases(&per_case)?,
                ap: average_precision_cases(&per_case)?,
            })
        })
        .collect()
}

/// Runs the grid over every fold. Each case is read and its ground truth
/// labeled once per fold; extraction is redone for every setting.
pub fn run_sweep(cfg: &SweepConfig, defaults: &ExtractionParams) -> Result<SweepResult> {
    cfg.validate()?;
    let base = cfg.extraction.apply(*defaults);
    let settings = cfg.settings();
    for s in &settings {
        s.params(&base).validate()?;
    }
    let mut rows = Vec::new();
    for (&fold, manifest) in &cfg.folds {
        let entries = load_manifest(manifest)?;
        if let Some(e) = entries.iter().find(|e| e.probability.is_none()) {
            return Err(Error::Manifest(format!(
                "fold {fold}: case {} has no probability map; detection maps cannot be re-thresholded",
                e.case_id
            )));
        }
        let cases = entries
            .par_iter()
            .map(|e| load_case(e, Connectivity::TwentySix))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(sweep_fold(fold, &cases, &settings, &base, cfg.min_iou)?);
    }
    Ok(SweepResult { rows })
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("fold,setting,inverse_alpha,auroc,ap\n");
    for r in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.fold,
            r.setting.descriptor(),
            r.setting
                .inverse_alpha()
                .map(|v| sig_digits(v, 6))
                .unwrap_or_default(),
            sig_digits(r.auroc, 6),
            sig_digits(r.ap, 6)
        );
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::SweepConfig("empty sweep result".into()));
    }
    atomic_write(path.as_ref(), sweep_csv(result).as_bytes())?;
    Ok(())
}

pub fn emit_svg(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::SweepConfig("empty sweep result".into()));
    }
    atomic_write(path.as_ref(), sweep_svg(result).as_bytes())?;
    Ok(())
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Two panels (AUROC, AP) against `1/alpha`, one polyline per fold per
/// panel. Fixed-tau rows are drawn as crosses in an extra slot right of the
/// grid.
pub fn sweep_svg(result: &SweepResult) -> String {
    const WIDTH: f64 = 900.0;
    const HEIGHT: f64 = 380.0;
    const PANEL_W: f64 = 340.0;
    const PANEL_H: f64 = 260.0;
    const TOP: f64 = 50.0;
    const LEFTS: [f64; 2] = [70.0, 520.0];

    let folds: Vec<usize> = {
        let mut f: Vec<usize> = result.rows.iter().map(|r| r.fold).collect();
        f.sort_unstable();
        f.dedup();
        f
    };
    let mut xs: Vec<f64> = result
        .rows
        .iter()
        .filter_map(|r| r.setting.inverse_alpha())
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let has_fixed = result
        .rows
        .iter()
        .any(|r| r.setting.inverse_alpha().is_none());
    let (mut x_min, mut x_max) = match (xs.first(), xs.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 1.0, a + 1.0),
        _ => (0.0, 1.0),
    };
    let step = if xs.len() > 1 {
        (x_max - x_min) / (xs.len() - 1) as f64
    } else {
        1.0
    };
    let fixed_x = x_max + step;
    if has_fixed {
        x_max = fixed_x;
    }
    if xs.is_empty() {
        x_min = fixed_x - 1.0;
        x_max = fixed_x + 1.0;
    }
    let px = |left: f64, x: f64| left + (x - x_min) / (x_max - x_min) * PANEL_W;
    let py = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * PANEL_H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        s,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    for (panel, (title, left)) in ["AUROC", "AP"].iter().zip(LEFTS).enumerate() {
        let _ = writeln!(s, "<g id=\"panel-{}\">", title.to_lowercase());
        let _ = writeln!(
            s,
            "<rect x=\"{left:.2}\" y=\"{TOP:.2}\" width=\"{PANEL_W:.2}\" height=\"{PANEL_H:.2}\" fill=\"none\" stroke=\"black\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{title}</text>",
            left + PANEL_W / 2.0,
            TOP - 15.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">1/alpha</text>",
            left + PANEL_W / 2.0,
            TOP + PANEL_H + 38.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">{title}</text>",
            left - 45.0,
            TOP + PANEL_H / 2.0,
            left - 45.0,
            TOP + PANEL_H / 2.0
        );
        for i in 0..=4 {
            let y = i as f64 / 4.0;
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{left:.2}\" y2=\"{:.2}\" stroke=\"black\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{y:.2}</text>",
                left - 4.0,
                py(y),
                py(y),
                left - 6.0,
                py(y) + 4.0
            );
        }
        for &x in &xs {
            let _ = writeln!(
                s,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/><text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                px(left, x),
                TOP + PANEL_H,
                px(left, x),
                TOP + PANEL_H + 4.0,
                px(left, x),
                TOP + PANEL_H + 18.0,
                sig_digits(x, 6)
            );
        }
        if has_fixed {
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">fixed</text>",
                px(left, fixed_x),
                TOP + PANEL_H + 18.0
            );
        }
        for (fi, &fold) in folds.iter().enumerate() {
            let color = PALETTE[fi % PALETTE.len()];
            let value = |r: &SweepRow| if panel == 0 { r.auroc } else { r.ap };
            let mut pts: Vec<(f64, f64)> = result
                .rows
                .iter()
                .filter(|r| r.fold == fold)
                .filter_map(|r| r.setting.inverse_alpha().map(|x| (x, value(r))))
                .collect();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            if !pts.is_empty() {
                let coords: Vec<String> = pts
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", px(left, x), py(y)))
                    .collect();
                let _ = writeln!(
                    s,
                    "<polyline data-fold=\"{fold}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
                    coords.join(" ")
                );
            }
            for r in result
                .rows
                .iter()
                .filter(|r| r.fold == fold && r.setting.inverse_alpha().is_none())
            {
                let (cx, cy) = (px(left, fixed_x), py(value(r)));
                let _ = writeln!(
                    s,
                    "<path data-fold=\"{fold}\" d=\"M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
                    cx - 5.0,
                    cy - 5.0,
                    cx + 5.0,
                    cy + 5.0,
                    cx - 5.0,
                    cy + 5.0,
                    cx + 5.0,
                    cy - 5.0
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }
    for (fi, &fold) in folds.iter().enumerate() {
        let color = PALETTE[fi % PALETTE.len()];
        let x = 70.0 + fi as f64 * 80.0;
        let y = HEIGHT - 12.0;
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"{:.2}\" y=\"{y:.2}\">fold {fold}</text>",
            y - 4.0,
            x + 20.0,
            y - 4.0,
            x + 25.0
        );
    }
    s.push_str("</svg>\n");
    s
}
