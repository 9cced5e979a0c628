use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snowkit_core::evaluation::OverlapCriterion;
use snowkit_core::stopping::DEFAULT_SAVGOL_WINDOW;
use snowkit_core::{SegmentationNoise, StopMode, StopPolicy};

#[derive(Debug, Parser)]
#[command(
    name = "snowkit",
    version,
    about = "Annotation-noise injection, evaluation and early stopping for nuclei datasets"
)]
pub struct Cli {
    /// Worker threads for per-image work (default: available parallelism).
    /// Results do not depend on it.
    #[arg(long, global = true, env = "SNOWKIT_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inject detection, segmentation and classification noise into a dataset.
    Corrupt(CorruptArgs),
    /// Cut every image of a dataset into square tiles.
    Tile(TileArgs),
    /// Evaluate predictions against annotations.
    Eval(EvalArgs),
    /// Run the early-stopping controller over a loss trace.
    Monitor(MonitorArgs),
    /// Re-render report tables from a full-precision metrics file.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Corrupt(_) => "corrupt",
            Command::Tile(_) => "tile",
            Command::Eval(_) => "eval",
            Command::Monitor(_) => "monitor",
            Command::Report(_) => "report",
        }
    }
}

fn rho(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err("must be in [0, 1)".into())
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be a finite number >= 0".into())
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be a finite number > 0".into())
    }
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    /// Clean dataset manifest.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Manifest of the corrupted dataset; containers go next to it.
    #[arg(
        long,
        short,
        default_value = "corrupted/manifest.json",
        env = "SNOWKIT_CORRUPT_OUTPUT"
    )]
    pub output: PathBuf,
    /// Corruption log (default: corruption_log.jsonl next to the output manifest).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Fraction of annotations removed per class.
    #[arg(long, default_value_t = 0.0, value_parser = rho)]
    pub detection_rho: f64,
    /// Fraction of annotations relabelled per class.
    #[arg(long, default_value_t = 0.0, value_parser = rho)]
    pub classification_rho: f64,
    /// Replace contours by simplified fitted ellipses.
    #[arg(long)]
    pub segmentation: bool,
    /// Douglas-Peucker tolerance in pixels.
    #[arg(long, default_value_t = SegmentationNoise::default().epsilon_px, value_parser = non_negative, requires = "segmentation")]
    pub epsilon: f64,
    /// Factor applied to both fitted semi-axes.
    #[arg(long, default_value_t = SegmentationNoise::default().ellipse_scale, value_parser = positive, requires = "segmentation")]
    pub ellipse_scale: f64,
    /// Vertices sampled on each fitted ellipse.
    #[arg(long, default_value_t = SegmentationNoise::default().ellipse_samples, requires = "segmentation")]
    pub ellipse_samples: usize,
    /// Also merge touching instances of the same class.
    #[arg(long, requires = "segmentation")]
    pub merge: bool,
    /// Closing radius applied to merged masks.
    #[arg(long, default_value_t = SegmentationNoise::default().smooth_radius_px, requires = "segmentation")]
    pub smooth_radius: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl CorruptArgs {
    pub fn segmentation_noise(&self) -> Option<SegmentationNoise> {
        self.segmentation.then_some(SegmentationNoise {
            epsilon_px: self.epsilon,
            ellipse_scale: self.ellipse_scale,
            ellipse_samples: self.ellipse_samples,
            merge_enabled: self.merge,
            smooth_radius_px: self.smooth_radius,
        })
    }
}

#[derive(Debug, Args)]
pub struct TileArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short, default_value = "tiles/manifest.json", env = "SNOWKIT_TILE_OUTPUT")]
    pub output: PathBuf,
    /// Tile side in pixels.
    #[arg(long, default_value_t = snowkit_core::io::DEFAULT_TILE_SIZE)]
    pub size: u32,
    /// Overlap between neighbouring tiles in pixels; must be smaller than the size.
    #[arg(long, default_value_t = snowkit_core::io::DEFAULT_TILE_OVERLAP)]
    pub overlap: u32,
    /// Do not store per-tile sampling weights.
    #[arg(long)]
    pub no_weights: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CriterionArg {
    /// Overlap relative to the smaller of the two objects.
    Coverage,
    Iou,
}

impl From<CriterionArg> for OverlapCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Coverage => OverlapCriterion::Coverage,
            CriterionArg::Iou => OverlapCriterion::Iou,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Annotation manifest.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction manifest.
    #[arg(long)]
    pub pred: PathBuf,
    /// Output directory for the report files.
    #[arg(long, short, default_value = "eval", env = "SNOWKIT_EVAL_OUT")]
    pub out: PathBuf,
    /// Overlap reading used to flag over- and under-segmentation.
    #[arg(long, value_enum, default_value_t = CriterionArg::Coverage)]
    pub overseg_criterion: CriterionArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Improvement means loss < l_min + delta.
    #[value(alias = "verbatim")]
    PaperVerbatim,
    /// Improvement means loss < l_min - delta.
    Conventional,
}

impl From<ModeArg> for StopMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PaperVerbatim => StopMode::PaperVerbatim,
            ModeArg::Conventional => StopMode::Conventional,
        }
    }
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Line-delimited loss records: {"stage":1,"epoch":0,"loss":0.93}.
    #[arg(long)]
    pub trace: PathBuf,
    /// Stop summary file.
    #[arg(long, short, default_value = "stop_summary.json", env = "SNOWKIT_MONITOR_OUT")]
    pub out: PathBuf,
    #[arg(long, default_value_t = StopPolicy::default().patience)]
    pub patience: u32,
    #[arg(long, default_value_t = StopPolicy::default().min_delta, value_parser = non_negative)]
    pub min_delta: f64,
    #[arg(long, default_value_t = StopPolicy::default().max_epochs)]
    pub max_epochs: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::PaperVerbatim)]
    pub mode: ModeArg,
    /// Stage-2 patience (default: same as stage 1).
    #[arg(long)]
    pub stage2_patience: Option<u32>,
    #[arg(long, value_parser = non_negative)]
    pub stage2_min_delta: Option<f64>,
    #[arg(long)]
    pub stage2_max_epochs: Option<u32>,
    /// Keep reading records appended to the trace and answer each with a
    /// decision line.
    #[arg(long)]
    pub follow: bool,
    /// Decision lines written in follow mode.
    #[arg(long, default_value = "decisions.jsonl", env = "SNOWKIT_MONITOR_DECISIONS")]
    pub decisions: PathBuf,
    /// Stages expected in follow mode.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2), requires = "follow")]
    pub stages: u8,
    /// Polling interval in follow mode.
    #[arg(long, default_value_t = 200, requires = "follow")]
    pub poll_ms: u64,
    /// Give up after this many seconds without new records (follow mode).
    #[arg(long, value_parser = positive, requires = "follow")]
    pub timeout_secs: Option<f64>,
    /// Also write Savitzky-Golay smoothed traces here.
    #[arg(long)]
    pub smoothed_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SAVGOL_WINDOW, requires = "smoothed_out")]
    pub smooth_window: usize,
    #[arg(long, default_value_t = snowkit_core::stopping::DEFAULT_SAVGOL_ORDER, requires = "smoothed_out")]
    pub smooth_order: usize,
}

impl MonitorArgs {
    pub fn policies(&self) -> [StopPolicy; 2] {
        let stage1 = StopPolicy {
            patience: self.patience,
            min_delta: self.min_delta,
            max_epochs: self.max_epochs,
            mode: self.mode.into(),
        };
        let stage2 = StopPolicy {
            patience: self.stage2_patience.unwrap_or(stage1.patience),
            min_delta: self.stage2_min_delta.unwrap_or(stage1.min_delta),
            max_epochs: self.stage2_max_epochs.unwrap_or(stage1.max_epochs),
            mode: stage1.mode,
        };
        [stage1, stage2]
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Full-precision metrics file written by `eval`.
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long, short, default_value = "report", env = "SNOWKIT_REPORT_OUT")]
    pub out: PathBuf,
    /// Class names in class-id order, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub class_names: Vec<String>,
}
