#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowkit_core::io::{write_dataset, write_predictions};
use snowkit_core::{AnnotatedImage, ClassId, Dataset, InstanceMap, PredictedImage};

pub fn snowkit() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_snowkit"));
    for var in [
        "SNOWKIT_THREADS",
        "SNOWKIT_CORRUPT_OUTPUT",
        "SNOWKIT_TILE_OUTPUT",
        "SNOWKIT_EVAL_OUT",
        "SNOWKIT_MONITOR_OUT",
        "SNOWKIT_MONITOR_DECISIONS",
        "SNOWKIT_REPORT_OUT",
    ] {
        c.env_remove(var);
    }
    c
}

pub fn run(args: &[&str]) -> Output {
    snowkit().args(args).output().expect("binary runs")
}

pub fn stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "expected one summary line, got {text:?}");
    serde_json::from_str(lines[0]).expect("summary is JSON")
}

pub fn ok(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout_json(out)
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Every file under `dir`, relative path to bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

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

/// One nucleus of class 1 cut in two along a vertical line, and an isolated
/// nucleus of class 2.
pub fn three_nuclei() -> Dataset {
    let mut map = InstanceMap::new(64, 64);
    paint_ellipse(&mut map, 1, 32.0, 38.0, 14.0, 9.0);
    for y in 0..64 {
        for x in 32..64 {
            if map.get(x, y) == 1 {
                map.set(x, y, 2);
            }
        }
    }
    paint_ellipse(&mut map, 3, 32.0, 12.0, 6.0, 5.0);
    let classes = [(1, ClassId(1)), (2, ClassId(1)), (3, ClassId(2))].into();
    Dataset {
        name: "toy".into(),
        class_names: vec!["epithelial".into(), "lymphocyte".into()],
        images: vec![AnnotatedImage::new("toy", map, classes)],
    }
}

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

/// Square image of side `side` with a grid of 20×20 nuclei.
pub fn large_image(side: u32) -> Dataset {
    let mut map = InstanceMap::new(side, side);
    let mut classes = BTreeMap::new();
    let mut id = 0;
    for y0 in (5..side.saturating_sub(25)).step_by(45) {
        for x0 in (7..side.saturating_sub(25)).step_by(51) {
            id += 1;
            for y in y0..y0 + 20 {
                for x in x0..x0 + 20 {
                    map.set(x, y, id);
                }
            }
            classes.insert(id, ClassId(1 + (id % 3) as u16));
        }
    }
    Dataset {
        name: "large".into(),
        class_names: vec!["a".into(), "b".into(), "c".into()],
        images: vec![AnnotatedImage::new("slide", map, classes)],
    }
}

pub fn write(dir: &Path, name: &str, ds: &Dataset) -> PathBuf {
    let p = dir.join(name).join("manifest.json");
    write_dataset(&p, ds, None, None).unwrap();
    p
}

pub fn write_pred(dir: &Path, name: &str, class_names: &[String], preds: &[PredictedImage]) -> PathBuf {
    let p = dir.join(name).join("manifest.json");
    write_predictions(&p, name, class_names, preds).unwrap();
    p
}

pub fn perfect_predictions(ds: &Dataset) -> Vec<PredictedImage> {
    ds.images.iter().map(PredictedImage::from_annotation).collect()
}

/// A 10×10 annotation matched by its left 6 columns, with a fragment on
/// the right 4 columns: coverage 1.0 but IoU 0.4.
pub fn fragment_pair() -> (Dataset, Vec<PredictedImage>) {
    let mut g = InstanceMap::new(20, 10);
    let mut p = InstanceMap::new(20, 10);
    for y in 0..10 {
        for x in 0..10 {
            g.set(x, y, 1);
            p.set(x, y, if x < 6 { 1 } else { 2 });
        }
    }
    let ds = Dataset {
        name: "frag".into(),
        class_names: vec!["c1".into()],
        images: vec![AnnotatedImage::new("a", g, [(1, ClassId(1))].into())],
    };
    let pred = vec![PredictedImage::new(
        "a",
        p,
        [(1, ClassId(1).into()), (2, ClassId(1).into())].into(),
    )];
    (ds, pred)
}

pub fn trace_text(stage: Option<u8>, losses: &[f64]) -> String {
    losses
        .iter()
        .enumerate()
        .map(|(e, l)| match stage {
            Some(s) => format!("{{\"stage\":{s},\"epoch\":{e},\"loss\":{l}}}\n"),
            None => format!("{{\"epoch\":{e},\"loss\":{l}}}\n"),
        })
        .collect()
}

/// Falls to a minimum at epoch 5, then stays at least 0.01 above it.
pub fn dip_trace() -> Vec<f64> {
    let mut v = vec![1.0, 0.8, 0.65, 0.55, 0.5, 0.45];
    v.extend((1..=20).map(|k| 0.46 + 0.01 * k as f64));
    v
}

pub const QUIRK_TRACE: [f64; 4] = [1.0, 0.8, 0.805, 0.81];

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

/// Up to `max` random rectangles; later ones overwrite earlier ones. Ids
/// are renumbered densely.
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
    let ids: Vec<u32> = map.ids().into_iter().collect();
    let dense: BTreeMap<u32, u32> = ids.iter().enumerate().map(|(i, &v)| (v, i as u32 + 1)).collect();
    map.remap(|v| if v == 0 { 0 } else { dense[&v] });
    map
}
