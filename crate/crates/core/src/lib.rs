//! Annotation-noise injection, task-separated instance evaluation and
//! patience-based early stopping for nuclei instance segmentation datasets.
//!
//! Masks are instance maps: one `u32` per pixel, `0` for background. Every
//! randomized operation takes an explicit seed and is deterministic
//! regardless of thread count.

pub mod corruption;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod stopping;
pub mod types;

pub use corruption::{apply_noise_pipeline, replay, CorruptionError, CorruptionLog, LogRecord};
pub use evaluation::{evaluate_dataset, EvalConfig, EvalError, Evaluation, MetricsReport, PredictedImage};
pub use geometry::{GeometryError, Pixel, PixelSet, Point, Polygon};
pub use io::IoError;
pub use stopping::{run_early_stop, two_stage_run, LossTrace, SessionState, StopError, StopMode, StopPolicy};
pub use types::{
    AnnotatedImage, ClassAssignment, ClassId, Dataset, DatasetManifest, InstanceMap, ManifestEntry, NoiseSpec,
    PredictedClass, Provenance, SegmentationNoise,
};
