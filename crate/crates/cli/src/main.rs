use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lesiondet::candidates::CandidateReport;
use lesiondet::fsutil::atomic_write;
use lesiondet::metrics::eval::{evaluate_manifest, load_manifest, per_case_csv, EvalOptions};
use lesiondet::metrics::DEFAULT_MIN_IOU;
use lesiondet::roi::{compute_crop_box, crop, mask_bbox_physical, uncrop, CropBox, MarginMm};
use lesiondet::splits::{read_cases_csv_path, stratified_kfold, validate_split, SplitOutput};
use lesiondet::sweep::{emit_csv, emit_svg, load_sweep_config, run_sweep};
use lesiondet::{
    extract_candidates, mean_volumes, read_mha, write_mha, ConfidenceRule, Connectivity, Error,
    ExtractionParams, ProbabilityMap, ThresholdMode,
};
use rayon::prelude::*;

#[derive(Parser)]
#[command(
    name = "lesiondet",
    version,
    about = "Lesion detection post-processing and evaluation"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress informational messages.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract lesion candidates from a probability map.
    Extract(ExtractCmd),
    /// Print the patient-level score (maximum) of a detection map.
    Score {
        #[arg(long)]
        det: PathBuf,
    },
    /// Average probability maps voxelwise.
    Ensemble {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Crop an image to the mask's bounding box plus a physical margin.
    Crop {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Per-side margin in mm as X,Y,Z.
        #[arg(long, default_value = "100,50,15")]
        margin: MarginMm,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        out_box: PathBuf,
    },
    /// Paste a cropped detection map back into the full grid.
    Uncrop {
        #[arg(long)]
        det: PathBuf,
        #[arg(long = "box")]
        box_path: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lesion-size stratified K-fold assignment.
    Split {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate AUROC and AP over a manifest.
    Eval(EvalCmd),
    /// Grid search over the adaptive threshold factor.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_svg: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExtractCmd {
    #[arg(long)]
    prob: PathBuf,
    #[arg(long)]
    out_det: PathBuf,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Adaptive threshold factor: tau = alpha * seed probability.
    #[arg(long, required_unless_present = "tau", conflicts_with = "tau")]
    alpha: Option<f64>,
    /// Fixed growth threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    opts: GrowthOpts,
}

#[derive(Args)]
struct GrowthOpts {
    #[arg(long, default_value_t = 5)]
    max_candidates: usize,
    #[arg(long, default_value_t = 10)]
    min_voxels: usize,
    #[arg(long, default_value_t = 1e-6)]
    min_seed_prob: f64,
    #[arg(long, default_value = "26")]
    connectivity: Connectivity,
    #[arg(long, default_value = "seed")]
    confidence: ConfidenceRule,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MIN_IOU)]
    min_iou: f64,
    /// Bootstrap resamples; 0 skips the intervals.
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    per_case: Option<PathBuf>,
    /// Threshold factor for manifest entries that give a probability map.
    #[arg(long, conflicts_with = "tau")]
    alpha: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[command(flatten)]
    opts: GrowthOpts,
}

fn params(alpha: Option<f64>, tau: Option<f64>, o: &GrowthOpts) -> ExtractionParams {
    let threshold = match (alpha, tau) {
        (_, Some(tau)) => ThresholdMode::Fixed { tau },
        (alpha, None) => ThresholdMode::Adaptive {
            alpha: alpha.unwrap_or(ExtractionParams::DEFAULT_ALPHA),
        },
    };
    ExtractionParams {
        threshold,
        max_candidates: o.max_candidates,
        min_seed_prob: o.min_seed_prob,
        min_voxels: o.min_voxels,
        connectivity: o.connectivity,
        confidence: o.confidence,
    }
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn read_volume(path: &Path) -> Result<lesiondet::Volume, Error> {
    read_mha(path).map_err(|e| Error::from(e).at(path))
}

fn read_prob(path: &Path) -> Result<ProbabilityMap, Error> {
    ProbabilityMap::new(read_volume(path)?).map_err(|e| Error::from(e).at(path))
}

fn write_volume(v: &lesiondet::Volume, path: &Path) -> Result<(), Error> {
    write_mha(v, path).map_err(|e| Error::from(e).at(path))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes()).map_err(|e| Error::from(e).at(path))
}

fn run(cli: Cli) -> CmdResult {
    let quiet = cli.quiet;
    let info = |msg: String| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Extract(cmd) => {
            let p = params(cmd.alpha, cmd.tau, &cmd.opts);
            p.validate().map_err(usage)?;
            let map = read_prob(&cmd.prob)?;
            let result = extract_candidates(&map, &p)?;
            let case_id = cmd
                .prob
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            write_volume(result.detection_map.volume(), &cmd.out_det)?;
            if let Some(json) = &cmd.out_json {
                write_json(&CandidateReport::new(case_id, p, &result), json)?;
            }
            info(format!("{} candidates", result.candidates.len()));
        }
        Command::Score { det } => {
            println!("{}", read_prob(&det)?.max());
        }
        Command::Ensemble { out, inputs } => {
            let maps = inputs
                .par_iter()
                .map(|p| read_prob(p))
                .collect::<Result<Vec<_>, _>>()?;
            let mean = mean_volumes(&maps)?;
            write_volume(mean.volume(), &out)?;
            info(format!("averaged {} maps", maps.len()));
        }
        Command::Crop {
            mask,
            image,
            margin,
            out,
            out_box,
        } => {
            let mask_vol = read_volume(&mask)?;
            let image_vol = read_volume(&image)?;
            let (lo, hi) = mask_bbox_physical(&mask_vol).map_err(|e| Error::from(e).at(&mask))?;
            let bx = compute_crop_box(lo, hi, image_vol.geometry(), margin)?;
            let cropped = crop(&image_vol, &bx)?;
            write_volume(&cropped, &out)?;
            write_json(&bx, &out_box)?;
            info(format!("crop box {:?}..{:?}", bx.lo, bx.hi));
        }
        Command::Uncrop { det, box_path, out } => {
            let text =
                std::fs::read_to_string(&box_path).map_err(|e| Error::from(e).at(&box_path))?;
            let bx: CropBox =
                serde_json::from_str(&text).map_err(|e| Error::from(e).at(&box_path))?;
            bx.validate().map_err(|e| Error::from(e).at(&box_path))?;
            let full = uncrop(&read_volume(&det)?, &bx)?;
            write_volume(&full, &out)?;
        }
        Command::Split {
            cases,
            folds,
            seed,
            out,
        } => {
            if folds < 2 {
                return Err(usage(format!("--folds must be at least 2, got {folds}")));
            }
            let records = read_cases_csv_path(&cases).map_err(|e| Error::from(e).at(&cases))?;
            let fa = stratified_kfold(&records, folds, seed)?;
            for w in &fa.warnings {
                info(format!("warning: {w}"));
            }
            let report = validate_split(&records, &fa)?;
            for v in &report.violations {
                info(format!("warning: {v}"));
            }
            write_json(&SplitOutput::new(&fa, report), &out)?;
        }
        Command::Eval(cmd) => {
            if !(0.0..=1.0).contains(&cmd.min_iou) {
                return Err(usage(format!(
                    "--min-iou must be in [0, 1], got {}",
                    cmd.min_iou
                )));
            }
            let opts = EvalOptions {
                min_iou: cmd.min_iou,
                bootstrap: cmd.bootstrap,
                seed: cmd.seed,
                extraction: params(cmd.alpha, cmd.tau, &cmd.opts),
                ..EvalOptions::default()
            };
            opts.extraction.validate().map_err(usage)?;
            let entries = load_manifest(&cmd.manifest)?;
            let report = evaluate_manifest(&entries, &opts)?;
            let csv = cmd.per_case.as_ref().map(|_| per_case_csv(&report));
            write_json(&report, &cmd.out)?;
            if let (Some(path), Some(csv)) = (&cmd.per_case, csv) {
                atomic_write(path, csv.as_bytes()).map_err(|e| Error::from(e).at(path))?;
            }
            info(format!(
                "AUROC {:.4}  AP {:.4}  ({} cases, {} lesions)",
                report.auroc, report.ap, report.n_cases, report.n_lesions
            ));
        }
        Command::Sweep {
            config,
            out_csv,
            out_svg,
        } => {
            let cfg = load_sweep_config(&config)?;
            let result = run_sweep(&cfg, &ExtractionParams::default())?;
            emit_csv(&result, &out_csv)?;
            if let Some(svg) = &out_svg {
                emit_svg(&result, svg)?;
            }
            info(format!("{} sweep rows", result.rows.len()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
