use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowkit_bench::{nuclei_dataset, shifted_predictions};
use snowkit_core::evaluation::match_maps;
use snowkit_core::geometry::{douglas_peucker, fit_ellipse, sample_ellipse, EllipseParams};
use snowkit_core::stopping::savgol_smooth;
use snowkit_core::{
    apply_noise_pipeline, evaluate_dataset, EvalConfig, LossTrace, NoiseSpec, Point, SegmentationNoise,
};

fn matching(c: &mut Criterion) {
    let ds = nuclei_dataset(1, 512, 3);
    let preds = shifted_predictions(&ds, 2, 1);
    let (gt, pred) = (&ds.images[0].instance_map, &preds[0].instance_map);
    c.bench_function("match_maps 512px", |b| {
        b.iter(|| match_maps(black_box(gt), black_box(pred)).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let ds = nuclei_dataset(16, 256, 3);
    let preds = shifted_predictions(&ds, 2, 1);
    let config = EvalConfig::default();
    c.bench_function("evaluate_dataset 16x256px", |b| {
        b.iter(|| evaluate_dataset(black_box(&ds.images), black_box(&preds), 3, &config).unwrap())
    });
}

fn corruption(c: &mut Criterion) {
    let ds = nuclei_dataset(8, 256, 3);
    let mut g = c.benchmark_group("noise pipeline 8x256px");
    g.sample_size(20);
    for (name, segmentation) in [
        ("detection+classification", None),
        ("with segmentation", Some(SegmentationNoise::default())),
    ] {
        let spec = NoiseSpec {
            detection_rho: 0.2,
            classification_rho: 0.2,
            segmentation,
            seed: 7,
        };
        g.bench_function(name, |b| {
            b.iter(|| apply_noise_pipeline(black_box(&ds), &spec).unwrap())
        });
    }
    g.finish();
}

fn geometry(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let walk: Vec<Point> = (0..2000)
        .scan((0.0, 0.0), |p, _| {
            p.0 += rng.random_range(-1.0..1.0);
            p.1 += rng.random_range(-1.0..1.0);
            Some(Point::new(p.0, p.1))
        })
        .collect();
    c.bench_function("douglas_peucker 2000 pts", |b| {
        b.iter(|| douglas_peucker(black_box(&walk), 1.0))
    });

    let e = EllipseParams::new(3.0, -2.0, 14.0, 8.0, PI / 5.0);
    let pts = sample_ellipse(&e, 200).vertices().to_vec();
    c.bench_function("fit_ellipse 200 pts", |b| {
        b.iter(|| fit_ellipse(black_box(&pts)).unwrap())
    });
}

fn smoothing(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trace = LossTrace::new(
        (0..1000)
            .map(|e| 1.0 / (1.0 + e as f64) + rng.random_range(0.0..0.05))
            .collect(),
    );
    c.bench_function("savgol_smooth 1000 epochs", |b| {
        b.iter(|| savgol_smooth(black_box(&trace), 11, 4).unwrap())
    });
}

criterion_group!(benches, matching, evaluation, corruption, geometry, smoothing);
criterion_main!(benches);
