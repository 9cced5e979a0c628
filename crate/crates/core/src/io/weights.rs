use std::collections::BTreeMap;

use crate::types::{AnnotatedImage, ClassId};

/// Sampling weight per tile: the largest inverse class frequency
/// `total / count_c` over the classes present in the tile. Tiles without
/// instances get the smallest class weight. Weights are scaled to mean 1.
pub fn sampling_weights(tiles: &[AnnotatedImage], class_counts: &BTreeMap<ClassId, u64>) -> Vec<f64> {
    let total: u64 = class_counts.values().sum();
    let inv: BTreeMap<ClassId, f64> = class_counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(&c, &n)| (c, total as f64 / n as f64))
        .collect();
    let floor = inv.values().copied().fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return vec![1.0; tiles.len()];
    }
    let raw: Vec<f64> = tiles
        .iter()
        .map(|t| {
            t.classes
                .values()
                .filter_map(|c| inv.get(c).copied())
                .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))))
                .unwrap_or(floor)
        })
        .collect();
    if raw.is_empty() {
        return raw;
    }
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    raw.into_iter().map(|w| w / mean).collect()
}
