//! Fixtures shared by the benchmarks.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowkit_core::{AnnotatedImage, ClassId, Dataset, InstanceMap, PredictedImage};

fn paint_ellipse(map: &mut InstanceMap, id: u32, cx: f64, cy: f64, a: f64, b: f64) {
    let x0 = (cx - a).floor().max(0.0) as u32;
    let y0 = (cy - b).floor().max(0.0) as u32;
    let x1 = ((cx + a).ceil() as u32).min(map.width().saturating_sub(1));
    let y1 = ((cy + b).ceil() as u32).min(map.height().saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = ((x as f64 - cx) / a, (y as f64 - cy) / b);
            if dx * dx + dy * dy <= 1.0 && map.get(x, y) == 0 {
                map.set(x, y, id);
            }
        }
    }
}

/// A `side`×`side` image tiled with jittered elliptical nuclei on a 22 px grid.
pub fn nuclei_image(seed: u64, side: u32, k: u16) -> AnnotatedImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = InstanceMap::new(side, side);
    let mut classes = BTreeMap::new();
    let cells = side / 22;
    let mut id = 0;
    for gy in 0..cells {
        for gx in 0..cells {
            if rng.random_bool(0.15) {
                continue;
            }
            id += 1;
            let cx = 11.0 + gx as f64 * 22.0 + rng.random_range(-2.0..2.0);
            let cy = 11.0 + gy as f64 * 22.0 + rng.random_range(-2.0..2.0);
            paint_ellipse(
                &mut map,
                id,
                cx,
                cy,
                rng.random_range(5.0..11.0),
                rng.random_range(5.0..11.0),
            );
            classes.insert(id, ClassId(rng.random_range(1..=k)));
        }
    }
    let present = map.ids();
    classes.retain(|id, _| present.contains(id));
    AnnotatedImage::new(format!("img{seed:04}"), map, classes)
}

pub fn nuclei_dataset(images: usize, side: u32, k: u16) -> Dataset {
    Dataset {
        name: "bench".into(),
        class_names: (1..=k).map(|i| format!("c{i}")).collect(),
        images: (0..images as u64).map(|s| nuclei_image(s, side, k)).collect(),
    }
}

/// Predictions shifted by a couple of pixels, so matching does real work.
pub fn shifted_predictions(ds: &Dataset, dx: u32, dy: u32) -> Vec<PredictedImage> {
    ds.images
        .iter()
        .map(|img| {
            let m = &img.instance_map;
            let mut shifted = InstanceMap::new(m.width(), m.height());
            for y in dy..m.height() {
                for x in dx..m.width() {
                    shifted.set(x, y, m.get(x - dx, y - dy));
                }
            }
            let moved = AnnotatedImage::new(img.image_id.clone(), shifted, img.classes.clone());
            PredictedImage::from_annotation(&moved)
        })
        .collect()
}
