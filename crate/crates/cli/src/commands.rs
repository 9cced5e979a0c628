use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use snowkit_core::evaluation::OverlapCriterion;
use snowkit_core::io::{
    load_dataset, load_predictions, sampling_weights, tile_image, write_atomic, write_dataset, write_report,
};
use snowkit_core::{
    apply_noise_pipeline, evaluate_dataset, Dataset, EvalConfig, LogRecord, MetricsReport, NoiseSpec, Provenance,
};

use crate::args::{CorruptArgs, EvalArgs, ReportArgs, TileArgs};
use crate::error::{CliError, Result};
use crate::staging::Staging;

pub const LOG_FILE: &str = "corruption_log.jsonl";
pub const PER_IMAGE_FILE: &str = "per_image.jsonl";
pub const RUN_FILE: &str = "run.json";

fn parent_dir(p: &Path) -> &Path {
    p.parent().unwrap_or(Path::new(""))
}

fn file_name(p: &Path) -> Result<&Path> {
    p.file_name()
        .map(Path::new)
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", p.display())))
}

pub(crate) fn paths_json(paths: &[PathBuf]) -> Value {
    paths.iter().map(|p| p.display().to_string()).collect()
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

pub fn corrupt(a: &CorruptArgs) -> Result<Value> {
    let spec = NoiseSpec {
        detection_rho: a.detection_rho,
        classification_rho: a.classification_rho,
        segmentation: a.segmentation_noise(),
        seed: a.seed,
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let (_, clean) = load_dataset(&a.input)?;
    let (noisy, log) = apply_noise_pipeline(&clean, &spec)?;

    let out_dir = parent_dir(&a.output);
    let log_dest = a.log.clone().unwrap_or_else(|| out_dir.join(LOG_FILE));
    // The log is referenced relative to the manifest when it sits next to it.
    let log_ref = match &a.log {
        None => PathBuf::from(LOG_FILE),
        Some(p) => p
            .strip_prefix(out_dir)
            .map(Path::to_owned)
            .unwrap_or_else(|_| p.clone()),
    };

    let mut st = Staging::new();
    write_atomic(&st.file(&log_dest)?, log.to_jsonl().as_bytes())?;
    let provenance = Provenance {
        parent: Some(a.input.display().to_string()),
        noise_spec: Some(spec),
        corruption_log: Some(log_ref),
        config: Some(json!({
            "command": "corrupt",
            "input": a.input.display().to_string(),
            "detection_rho": a.detection_rho,
            "classification_rho": a.classification_rho,
            "segmentation": spec.segmentation,
            "seed": a.seed,
        })),
    };
    let manifest = st.path(out_dir, file_name(&a.output)?)?;
    write_dataset(&manifest, &noisy, Some(provenance), None)?;
    let outputs = st.commit()?;

    let count = |f: fn(&LogRecord) -> bool| log.count(f);
    Ok(json!({
        "outputs": paths_json(&outputs),
        "images": noisy.images.len(),
        "instances_before": clean.instance_count(),
        "instances_after": noisy.instance_count(),
        "removed": count(|r| matches!(r, LogRecord::Removed { .. })),
        "distorted": count(|r| matches!(r, LogRecord::Distorted { .. })),
        "merged": count(|r| matches!(r, LogRecord::Merged { .. })),
        "relabeled": count(|r| matches!(r, LogRecord::Relabeled { .. })),
    }))
}

pub fn tile(a: &TileArgs) -> Result<Value> {
    if a.size == 0 {
        return Err(CliError::Config("--size must be at least 1".into()));
    }
    if a.overlap >= a.size {
        return Err(CliError::Config(format!(
            "--overlap {} must be smaller than --size {}",
            a.overlap, a.size
        )));
    }
    let (_, ds) = load_dataset(&a.input)?;
    let sets = ds
        .images
        .par_iter()
        .map(|img| tile_image(img, a.size, a.overlap))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let tiles: Vec<_> = sets
        .into_iter()
        .flat_map(|s| s.tiles.into_iter().map(|t| t.image))
        .collect();
    let weights = (!a.no_weights).then(|| sampling_weights(&tiles, &ds.class_counts()));
    let tiled = Dataset {
        name: ds.name.clone(),
        class_names: ds.class_names.clone(),
        images: tiles,
    };
    let provenance = Provenance {
        parent: Some(a.input.display().to_string()),
        config: Some(json!({
            "command": "tile",
            "input": a.input.display().to_string(),
            "size": a.size,
            "overlap": a.overlap,
            "weights": !a.no_weights,
        })),
        ..Default::default()
    };

    let mut st = Staging::new();
    let manifest = st.path(parent_dir(&a.output), file_name(&a.output)?)?;
    write_dataset(&manifest, &tiled, Some(provenance), weights.as_deref())?;
    let outputs = st.commit()?;
    Ok(json!({
        "outputs": [a.output.display().to_string()],
        "files": outputs.len(),
        "images": ds.images.len(),
        "tiles": tiled.images.len(),
    }))
}

fn criterion_name(c: OverlapCriterion) -> &'static str {
    match c {
        OverlapCriterion::Coverage => "coverage",
        OverlapCriterion::Iou => "iou",
    }
}

pub fn eval(a: &EvalArgs) -> Result<Value> {
    let config = EvalConfig {
        overlap: a.overseg_criterion.into(),
    };
    let (gt_manifest, gt) = load_dataset(&a.gt)?;
    let (pred_manifest, preds) = load_predictions(&a.pred)?;
    if pred_manifest.class_names.len() != gt_manifest.class_names.len() {
        return Err(CliError::Data(format!(
            "annotations have {} classes, predictions {}",
            gt_manifest.class_names.len(),
            pred_manifest.class_names.len()
        )));
    }
    let k = gt.num_classes();
    let ev = evaluate_dataset(&gt.images, &preds, k, &config)?;

    let mut st = Staging::new();
    let dir = st.dir(&a.out)?;
    write_report(&dir, &ev.report, &gt.class_names)?;
    let per_image: String = ev
        .images
        .iter()
        .map(|b| serde_json::to_string(b).expect("breakdown serializes") + "\n")
        .collect();
    write_atomic(&dir.join(PER_IMAGE_FILE), per_image.as_bytes())?;
    let run = json!({
        "command": "eval",
        "gt": a.gt.display().to_string(),
        "pred": a.pred.display().to_string(),
        "overseg_criterion": criterion_name(config.overlap),
        "class_names": gt.class_names,
        "images": ev.images.len(),
    });
    write_atomic(&dir.join(RUN_FILE), pretty(&run).as_bytes())?;
    let outputs = st.commit()?;

    let r = &ev.report;
    Ok(json!({
        "outputs": paths_json(&outputs),
        "images": ev.images.len(),
        "overseg_criterion": criterion_name(config.overlap),
        "detection_f1": r.detection.overall.f1,
        "balanced_accuracy": r.classification.balanced_accuracy,
        "over_segmentation": r.segmentation.over_segmentation,
        "under_segmentation": r.segmentation.under_segmentation,
    }))
}

pub fn report(a: &ReportArgs) -> Result<Value> {
    let text = std::fs::read_to_string(&a.raw).map_err(|e| CliError::Data(format!("{}: {e}", a.raw.display())))?;
    let report: MetricsReport =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.raw.display())))?;
    let mut st = Staging::new();
    let dir = st.dir(&a.out)?;
    write_report(&dir, &report, &a.class_names)?;
    let outputs = st.commit()?;
    Ok(json!({ "outputs": paths_json(&outputs) }))
}
