use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::log::{CorruptionLog, LogRecord};
use super::seed::{stratified_selection, Stage};
use super::CorruptionError;
use crate::types::{check_rho, AnnotatedImage, Dataset, NoiseSpec};

/// The 2×2 detection-noise transition matrix `Q[observed][true]`, rows and
/// columns ordered (background, class).
pub fn detection_transition_matrix(rho: f64) -> [[f64; 2]; 2] {
    [[1.0, rho], [0.0, 1.0 - rho]]
}

/// Removes exactly `round(rho · n_i)` instances of every class `i`.
///
/// Removed instances become background; no background pixel ever gains a
/// label.
pub fn apply_detection_noise(
    dataset: &Dataset,
    rho: f64,
    seed: u64,
) -> Result<(Dataset, CorruptionLog), CorruptionError> {
    check_rho("detection_rho", rho)?;
    let mut log = CorruptionLog::new(NoiseSpec {
        detection_rho: rho,
        seed,
        ..Default::default()
    });
    if rho == 0.0 {
        return Ok((dataset.clone(), log));
    }

    let mut per_image: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    for (_, (chosen, _)) in stratified_selection(dataset, rho, seed, Stage::Detection) {
        for (idx, id) in chosen {
            per_image.entry(idx).or_default().insert(id);
        }
    }

    let images: Vec<AnnotatedImage> = dataset
        .images
        .par_iter()
        .enumerate()
        .map(|(idx, img)| match per_image.get(&idx) {
            Some(ids) => remove_instances(img, ids),
            None => img.clone(),
        })
        .collect();

    for (idx, ids) in &per_image {
        let img = &dataset.images[*idx];
        for &id in ids {
            log.records.push(LogRecord::Removed {
                image_id: img.image_id.clone(),
                id,
                class: img.classes[&id],
            });
        }
    }
    Ok((
        Dataset {
            images,
            ..dataset.clone()
        },
        log,
    ))
}

pub(crate) fn remove_instances(img: &AnnotatedImage, ids: &BTreeSet<u32>) -> AnnotatedImage {
    let mut out = img.clone();
    out.instance_map.remap(|v| if ids.contains(&v) { 0 } else { v });
    out.classes.retain(|id, _| !ids.contains(id));
    out
}
