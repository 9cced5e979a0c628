use std::collections::BTreeMap;

use rand::Rng;

use super::log::{CorruptionLog, LogRecord};
use super::seed::{stratified_selection, Stage};
use super::CorruptionError;
use crate::types::{check_rho, ClassId, Dataset, NoiseSpec};

/// The K×K symmetric classification-noise matrix: `1 − ρ` on the diagonal,
/// `ρ / (K − 1)` elsewhere.
pub fn classification_transition_matrix(rho: f64, num_classes: u16) -> Vec<Vec<f64>> {
    let k = num_classes as usize;
    let off = if k > 1 { rho / (k - 1) as f64 } else { 0.0 };
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 - rho } else { off }).collect())
        .collect()
}

/// Relabels exactly `round(rho · n_i)` instances of every class `i`, each to a
/// class drawn uniformly from the other `K − 1`. Geometry is untouched.
pub fn apply_classification_noise(
    dataset: &Dataset,
    rho: f64,
    seed: u64,
) -> Result<(Dataset, CorruptionLog), CorruptionError> {
    check_rho("classification_rho", rho)?;
    let k = dataset.num_classes();
    if k < 2 {
        return Err(CorruptionError::TooFewClasses(k));
    }
    let mut log = CorruptionLog::new(NoiseSpec {
        classification_rho: rho,
        seed,
        ..Default::default()
    });
    if rho == 0.0 {
        return Ok((dataset.clone(), log));
    }

    let mut changes: BTreeMap<(usize, u32), (ClassId, ClassId)> = BTreeMap::new();
    for (class, (chosen, mut rng)) in stratified_selection(dataset, rho, seed, Stage::Classification) {
        for (idx, id) in chosen {
            let step = rng.random_range(1..k);
            let new = ClassId((class.0 - 1 + step) % k + 1);
            changes.insert((idx, id), (class, new));
        }
    }

    let mut out = dataset.clone();
    for (&(idx, id), &(old, new)) in &changes {
        let img = &mut out.images[idx];
        img.classes.insert(id, new);
        log.records.push(LogRecord::Relabeled {
            image_id: img.image_id.clone(),
            id,
            old,
            new,
        });
    }
    Ok((out, log))
}
