#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowkit_core::{AnnotatedImage, ClassId, Dataset, InstanceMap};

/// `counts[i]` instances of class `i + 1` as 2×2 squares, `per_image` per image.
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

/// Paints an axis-aligned ellipse with id `id` where the map is background.
pub fn paint_ellipse(map: &mut InstanceMap, id: u32, cx: f64, cy: f64, a: f64, b: f64) {
    for y in 0..map.height() {
        for x in 0..map.width() {
            let (dx, dy) = ((x as f64 - cx) / a, (y as f64 - cy) / b);
            if dx * dx + dy * dy <= 1.0 && map.get(x, y) == 0 {
                map.set(x, y, id);
            }
        }
    }
}

/// Image of nucleus-like blobs, some touching, with `k` classes.
pub fn blob_image(seed: u64, name: &str, k: u16) -> AnnotatedImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = InstanceMap::new(96, 96);
    let mut classes = BTreeMap::new();
    let mut id = 0;
    for gy in 0..4 {
        for gx in 0..4 {
            if rng.random_bool(0.2) {
                continue;
            }
            id += 1;
            let cx = 12.0 + gx as f64 * 22.0 + rng.random_range(-2.0..2.0);
            let cy = 12.0 + gy as f64 * 22.0 + rng.random_range(-2.0..2.0);
            let a = rng.random_range(5.0..11.5);
            let b = rng.random_range(5.0..11.5);
            paint_ellipse(&mut map, id, cx, cy, a, b);
            classes.insert(id, ClassId(rng.random_range(1..=k)));
        }
    }
    // Drop ids that lost every pixel to earlier blobs.
    let present = map.ids();
    classes.retain(|id, _| present.contains(id));
    AnnotatedImage::new(name, map, classes)
}

pub fn blob_dataset(seed: u64, images: usize, k: u16) -> Dataset {
    Dataset {
        name: "blobs".into(),
        class_names: (1..=k).map(|i| format!("c{i}")).collect(),
        images: (0..images)
            .map(|i| blob_image(seed.wrapping_mul(1000) + i as u64, &format!("b{i:03}"), k))
            .collect(),
    }
}

/// Up to `max` random rectangles on a small grid; later ones overwrite.
pub fn random_rect_map(rng: &mut impl Rng, w: u32, h: u32, max: u32) -> InstanceMap {
    let mut map = InstanceMap::new(w, h);
    let n = rng.random_range(0..=max);
    for id in 1..=n {
        let x0 = rng.random_range(0..w);
        let y0 = rng.random_range(0..h);
        let x1 = (x0 + rng.random_range(1..8)).min(w);
        let y1 = (y0 + rng.random_range(1..8)).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                map.set(x, y, id);
            }
        }
    }
    // Renumber densely so every id in 1..=n is present.
    let ids: Vec<u32> = map.ids().into_iter().collect();
    let dense: BTreeMap<u32, u32> = ids.iter().enumerate().map(|(i, &v)| (v, i as u32 + 1)).collect();
    map.remap(|v| if v == 0 { 0 } else { dense[&v] });
    map
}
