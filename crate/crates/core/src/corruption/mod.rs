//! Seeded, reproducible annotation corruption.
//!
//! Three noise families are applied in a fixed order: detection (instances
//! removed to background), segmentation (contours replaced by simplified
//! fitted ellipses, then adjacent same-class instances merged), and
//! classification (labels exchanged uniformly among the other classes).
//! Every stage selects exactly `round(ρ·n_i)` instances per class `i`,
//! stratified over the whole dataset, and every change is recorded in a
//! [`CorruptionLog`] that can be replayed against the clean data.

mod classification;
mod detection;
mod log;
mod seed;
mod segmentation;

use thiserror::Error;

use crate::types::{Dataset, NoiseSpec, NoiseSpecError};

pub use classification::{apply_classification_noise, classification_transition_matrix};
pub use detection::{apply_detection_noise, detection_transition_matrix};
pub use log::{replay, CorruptionLog, DistortionOutcome, EllipseSource, LogRecord};
pub use seed::{derive_seed, round_half_up, Stage};
pub use segmentation::{distort_contours, merge_adjacent, DistortionSummary, MergeSummary};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorruptionError {
    #[error(transparent)]
    InvalidSpec(#[from] NoiseSpecError),
    #[error("classification noise needs at least 2 classes, dataset has {0}")]
    TooFewClasses(u16),
    #[error("log replay failed: {0}")]
    Replay(String),
    #[error("malformed log: {0}")]
    MalformedLog(String),
}

/// Runs detection → segmentation (distortion, then merging when enabled) →
/// classification. Classification percentages apply to the post-merge
/// instance counts.
pub fn apply_noise_pipeline(dataset: &Dataset, spec: &NoiseSpec) -> Result<(Dataset, CorruptionLog), CorruptionError> {
    spec.validate()?;
    if spec.classification_rho > 0.0 && dataset.num_classes() < 2 {
        return Err(CorruptionError::TooFewClasses(dataset.num_classes()));
    }
    let mut log = CorruptionLog::new(*spec);
    let mut current = dataset.clone();

    if spec.detection_rho > 0.0 {
        let (next, stage) = apply_detection_noise(&current, spec.detection_rho, spec.seed)?;
        current = next;
        log.records.extend(stage.records);
    }
    if let Some(seg) = &spec.segmentation {
        let (next, records) = segmentation::apply_segmentation_noise(&current, seg);
        current = next;
        log.records.extend(records);
    }
    if spec.classification_rho > 0.0 {
        let (next, stage) = apply_classification_noise(&current, spec.classification_rho, spec.seed)?;
        current = next;
        log.records.extend(stage.records);
    }
    Ok((current, log))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use std::collections::BTreeMap;

    use crate::types::{AnnotatedImage, ClassId, Dataset, InstanceMap};

    /// Dataset with `counts[i]` instances of class `i + 1`, packed as 2×2
    /// squares on a grid, `per_image` instances per image.
    pub fn synthetic(counts: &[u64], per_image: usize) -> Dataset {
        let labels: Vec<ClassId> = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(ClassId(i as u16 + 1), n as usize))
            .collect();
        let side = (per_image as f64).sqrt().ceil() as u32;
        let images = labels
            .chunks(per_image)
            .enumerate()
            .map(|(k, chunk)| {
                let mut map = InstanceMap::new(side * 3, side * 3);
                let mut classes = BTreeMap::new();
                for (j, &c) in chunk.iter().enumerate() {
                    let id = j as u32 + 1;
                    let (gx, gy) = (j as u32 % side, j as u32 / side);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            map.set(gx * 3 + dx, gy * 3 + dy, id);
                        }
                    }
                    classes.insert(id, c);
                }
                AnnotatedImage::new(format!("img{k:05}"), map, classes)
            })
            .collect();
        Dataset {
            name: "synthetic".into(),
            class_names: (1..=counts.len()).map(|i| format!("c{i}")).collect(),
            images,
        }
    }
}
