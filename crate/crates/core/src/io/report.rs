use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::{write_atomic, IoError};
use crate::evaluation::{ClassSegmentation, MeanStd, MetricsReport};
use crate::types::ClassId;

/// Display name of a class, falling back to its number.
pub fn class_label(class_names: &[String], c: ClassId) -> String {
    class_names
        .get((c.0 as usize).wrapping_sub(1))
        .cloned()
        .unwrap_or_else(|| format!("class{}", c.0))
}

/// One decimal, `-` when undefined.
pub fn format_value(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.1}"),
        None => "-".into(),
    }
}

fn rounded(v: Option<f64>) -> Value {
    match v {
        Some(v) => json!(format!("{v:.1}").parse::<f64>().expect("formatted float parses")),
        None => Value::Null,
    }
}

fn mean(m: Option<MeanStd>) -> Option<f64> {
    m.map(|m| m.mean)
}

fn std(m: Option<MeanStd>) -> Option<f64> {
    m.map(|m| m.std)
}

fn seg_json(label: &str, s: &ClassSegmentation) -> Value {
    json!({
        "class": label,
        "pairs": s.pairs,
        "iou_mean": rounded(mean(s.iou)),
        "iou_std": rounded(std(s.iou)),
        "hd_mean": rounded(mean(s.hausdorff)),
        "hd_std": rounded(std(s.hausdorff)),
    })
}

fn confusion_columns(class_names: &[String], k: u16) -> Vec<String> {
    ["U".to_string(), "Other".to_string()]
        .into_iter()
        .chain((1..=k).map(|c| class_label(class_names, ClassId(c))))
        .collect()
}

fn row_labels(class_names: &[String], k: u16) -> Vec<String> {
    std::iter::once("∅".to_string())
        .chain((1..=k).map(|c| class_label(class_names, ClassId(c))))
        .collect()
}

/// Hierarchical report with percentages and distances at one decimal.
pub fn render_report_json(report: &MetricsReport, class_names: &[String]) -> String {
    let label = |c: ClassId| class_label(class_names, c);
    let d = &report.detection;
    let s = &report.segmentation;
    let c = &report.classification;
    let k = report.confusion.raw.num_classes();
    let value = json!({
        "detection": {
            "overall": {
                "annotated": d.overall.annotated,
                "predicted": d.overall.predicted,
                "matches": d.overall.matches,
                "precision": rounded(d.overall.precision),
                "recall": rounded(d.overall.recall),
                "f1": rounded(d.overall.f1),
            },
            "other_predictions": d.other_predictions,
            "per_class": d.per_class.iter().map(|x| json!({
                "class": label(x.class),
                "annotated": x.annotated,
                "predicted": x.predicted,
                "precision": rounded(x.precision),
                "recall": rounded(x.recall),
                "f1": rounded(x.f1),
                "precision_by_true_class": rounded(x.precision_by_true_class),
            })).collect::<Vec<_>>(),
        },
        "segmentation": {
            "overall": seg_json("all", &s.overall),
            "per_class": s.per_class.iter().map(|x| seg_json(&label(x.class), x)).collect::<Vec<_>>(),
            "over_segmentation": s.over_segmentation,
            "under_segmentation": s.under_segmentation,
            "false_positives": s.false_positives,
            "false_negatives": s.false_negatives,
        },
        "classification": {
            "balanced_accuracy": rounded(c.balanced_accuracy),
            "per_class": c.per_class.iter().map(|x| json!({
                "class": label(x.class),
                "nuclei": x.nuclei,
                "precision": rounded(x.precision),
                "recall": rounded(x.recall),
                "f1": rounded(x.f1),
            })).collect::<Vec<_>>(),
        },
        "confusion": {
            "columns": confusion_columns(class_names, k),
            "rows": row_labels(class_names, k),
            "raw": report.confusion.raw.rows(),
            "normalized": report.confusion.ncm.iter().map(|r| match r {
                Some(r) => Value::Array(r.iter().map(|&v| rounded(Some(v))).collect()),
                None => Value::Null,
            }).collect::<Vec<_>>(),
        },
    });
    let mut text = serde_json::to_string_pretty(&value).expect("report serializes");
    text.push('\n');
    text
}

/// Flat `task,class,metric,value` table.
pub fn render_report_csv(report: &MetricsReport, class_names: &[String]) -> String {
    let label = |c: ClassId| class_label(class_names, c);
    let mut rows: Vec<[String; 4]> = Vec::new();
    let mut push = |task: &str, class: &str, metric: &str, value: String| {
        rows.push([task.into(), class.into(), metric.into(), value]);
    };
    let d = &report.detection;
    push("detection", "all", "precision", format_value(d.overall.precision));
    push("detection", "all", "recall", format_value(d.overall.recall));
    push("detection", "all", "f1", format_value(d.overall.f1));
    push("detection", "all", "annotated", d.overall.annotated.to_string());
    push("detection", "all", "predicted", d.overall.predicted.to_string());
    push("detection", "all", "matches", d.overall.matches.to_string());
    push("detection", "other", "predicted", d.other_predictions.to_string());
    for x in &d.per_class {
        let l = label(x.class);
        push("detection", &l, "precision", format_value(x.precision));
        push("detection", &l, "recall", format_value(x.recall));
        push("detection", &l, "f1", format_value(x.f1));
        push(
            "detection",
            &l,
            "precision_by_true_class",
            format_value(x.precision_by_true_class),
        );
        push("detection", &l, "annotated", x.annotated.to_string());
        push("detection", &l, "predicted", x.predicted.to_string());
    }
    let s = &report.segmentation;
    let mut seg = |l: &str, x: &ClassSegmentation| {
        push("segmentation", l, "iou_mean", format_value(mean(x.iou)));
        push("segmentation", l, "iou_std", format_value(std(x.iou)));
        push("segmentation", l, "hd_mean", format_value(mean(x.hausdorff)));
        push("segmentation", l, "hd_std", format_value(std(x.hausdorff)));
        push("segmentation", l, "pairs", x.pairs.to_string());
    };
    seg("all", &s.overall);
    for x in &s.per_class {
        seg(&label(x.class), x);
    }
    push(
        "segmentation",
        "all",
        "over_segmentation",
        s.over_segmentation.to_string(),
    );
    push(
        "segmentation",
        "all",
        "under_segmentation",
        s.under_segmentation.to_string(),
    );
    push("segmentation", "all", "false_positives", s.false_positives.to_string());
    push("segmentation", "all", "false_negatives", s.false_negatives.to_string());
    let c = &report.classification;
    push(
        "classification",
        "all",
        "balanced_accuracy",
        format_value(c.balanced_accuracy),
    );
    for x in &c.per_class {
        let l = label(x.class);
        push("classification", &l, "nuclei", x.nuclei.to_string());
        push("classification", &l, "precision", format_value(x.precision));
        push("classification", &l, "recall", format_value(x.recall));
        push("classification", &l, "f1", format_value(x.f1));
    }
    let k = report.confusion.raw.num_classes();
    let cols = confusion_columns(class_names, k);
    for (r, row) in row_labels(class_names, k).iter().zip(report.confusion.raw.rows()) {
        for (col, v) in cols.iter().zip(row) {
            push("confusion_raw", r, col, v.map_or("-".into(), |v| v.to_string()));
        }
    }
    for (r, row) in row_labels(class_names, k).iter().skip(1).zip(&report.confusion.ncm) {
        for (i, col) in cols.iter().skip(1).enumerate() {
            push("confusion_normalized", r, col, format_value(row.as_ref().map(|v| v[i])));
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["task", "class", "metric", "value"])
        .expect("in-memory write");
    for r in &rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Writes `metrics.json`, `metrics.csv` and the full-precision
/// `metrics_raw.json` into `dir`. Returns the written paths.
pub fn write_report(dir: &Path, report: &MetricsReport, class_names: &[String]) -> Result<Vec<PathBuf>, IoError> {
    let mut raw = serde_json::to_string_pretty(report).expect("report serializes");
    raw.push('\n');
    let files = [
        ("metrics.json", render_report_json(report, class_names)),
        ("metrics.csv", render_report_csv(report, class_names)),
        ("metrics_raw.json", raw),
    ];
    files
        .into_iter()
        .map(|(name, text)| {
            let p = dir.join(name);
            write_atomic(&p, text.as_bytes())?;
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{evaluate_dataset, EvalConfig, PredictedImage};
    use crate::types::{AnnotatedImage, InstanceMap};

    fn perfect_report() -> MetricsReport {
        let mut m = InstanceMap::new(10, 10);
        for y in 0..4 {
            for x in 0..4 {
                m.set(x, y, 1);
                m.set(x + 5, y + 5, 2);
            }
        }
        let gt = vec![AnnotatedImage::new("a", m, [(1, ClassId(1)), (2, ClassId(2))].into())];
        let pred: Vec<_> = gt.iter().map(PredictedImage::from_annotation).collect();
        evaluate_dataset(&gt, &pred, 3, &EvalConfig::default()).unwrap().report
    }

    fn names() -> Vec<String> {
        vec!["E".into(), "L".into(), "N".into()]
    }

    #[test]
    fn perfect_csv_rows() {
        let csv = render_report_csv(&perfect_report(), &names());
        assert!(csv.starts_with("task,class,metric,value\n"));
        assert!(csv.contains("detection,all,precision,100.0\n"));
        assert!(csv.contains("segmentation,E,hd_mean,0.0\n"));
        assert!(csv.contains("classification,all,balanced_accuracy,100.0\n"));
        // Class N has no nuclei: undefined, not zero.
        assert!(csv.contains("detection,N,recall,-\n"));
        assert!(csv.contains("confusion_raw,∅,U,-\n"));
        assert!(csv.contains("confusion_normalized,N,N,-\n"));
    }

    #[test]
    fn json_is_rounded_and_stable() {
        let r = perfect_report();
        let a = render_report_json(&r, &names());
        assert_eq!(a, render_report_json(&r, &names()));
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["detection"]["overall"]["f1"], json!(100.0));
        assert_eq!(v["classification"]["per_class"][2]["recall"], Value::Null);
    }

    #[test]
    fn write_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let r = perfect_report();
        let p1 = write_report(&dir.path().join("a"), &r, &names()).unwrap();
        let p2 = write_report(&dir.path().join("b"), &r, &names()).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn labels() {
        assert_eq!(class_label(&names(), ClassId(2)), "L");
        assert_eq!(class_label(&names(), ClassId(9)), "class9");
        assert_eq!(class_label(&names(), ClassId(0)), "class0");
        assert_eq!(format_value(Some(96.8049)), "96.8");
    }
}
