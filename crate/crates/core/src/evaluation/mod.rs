//! Instance matching and the detection, segmentation and classification
//! metrics computed from it.

mod confusion;
mod matching;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use confusion::{
    build_confusion, classification_metrics, Actual, ClassClassification, ClassificationMetrics, ConfusionTables,
    Predicted, RawConfusion,
};
pub use matching::{
    find_over_segmentation, find_under_segmentation, match_maps, round_half_down, Match, MatchSet, OverlapCriterion,
};

use crate::geometry::{hausdorff, PixelSet};
use crate::types::{AnnotatedImage, ClassAssignment, ClassId, InstanceMap, PredictedClass};
use matching::{match_from_table, over_segmented, under_segmented, OverlapTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("grid mismatch: annotation is {gt:?}, prediction is {pred:?}")]
    DimensionMismatch { gt: (u32, u32), pred: (u32, u32) },
    #[error("instance {id} has no class ({})", if *predicted { "prediction" } else { "annotation" })]
    MissingClass { id: u32, predicted: bool },
    #[error("class outside 1..=K")]
    ClassOutOfRange,
    #[error("confusion rows have inconsistent lengths")]
    BadTable,
    #[error(
        "image sets differ: missing from predictions {missing_in_pred:?}, missing from annotations {missing_in_gt:?}"
    )]
    IdSetMismatch {
        missing_in_pred: Vec<String>,
        missing_in_gt: Vec<String>,
    },
    #[error("duplicate image id {0}")]
    DuplicateImage(String),
    #[error("image {image_id}: {source}")]
    InImage {
        image_id: String,
        #[source]
        source: Box<EvalError>,
    },
}

/// Model output for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedImage {
    pub image_id: String,
    pub instance_map: InstanceMap,
    pub classes: BTreeMap<u32, PredictedClass>,
}

impl PredictedImage {
    pub fn new(image_id: impl Into<String>, instance_map: InstanceMap, classes: BTreeMap<u32, PredictedClass>) -> Self {
        Self {
            image_id: image_id.into(),
            instance_map,
            classes,
        }
    }

    /// Treats an annotation as a perfect prediction.
    pub fn from_annotation(img: &AnnotatedImage) -> Self {
        Self::new(
            img.image_id.clone(),
            img.instance_map.clone(),
            img.classes.iter().map(|(&id, &c)| (id, c.into())).collect(),
        )
    }
}

pub fn match_instances(gt: &AnnotatedImage, pred: &PredictedImage) -> Result<MatchSet, EvalError> {
    match_maps(&gt.instance_map, &pred.instance_map)
}

pub(crate) fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| 100.0 * num / den)
}

/// Harmonic mean of two percentages; zero when both are zero.
pub(crate) fn harmonic(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    match (p, r) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDetection {
    pub class: ClassId,
    pub annotated: u64,
    pub matched_annotated: u64,
    /// Predictions labelled with this class.
    pub predicted: u64,
    pub matched_predicted: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Precision with matched predictions attributed to the class of their
    /// annotation instead of their own label.
    pub precision_by_true_class: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallDetection {
    pub annotated: u64,
    pub predicted: u64,
    pub matches: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub per_class: Vec<ClassDetection>,
    /// Predictions labelled `Other`; they only count towards the overall figures.
    pub other_predictions: u64,
    pub overall: OverallDetection,
}

/// Detection metrics from pooled raw counts.
pub fn detection_from_confusion(raw: &RawConfusion) -> DetectionMetrics {
    let per_class = (1..=raw.num_classes())
        .map(ClassId)
        .map(|c| {
            let col = Predicted::Class(c);
            let (annotated, matched_annotated) = (raw.annotated(c), raw.detected(c));
            let (predicted, matched_predicted) = (raw.column(col, false), raw.column(col, true));
            let precision = ratio(matched_predicted as f64, predicted as f64);
            let recall = ratio(matched_annotated as f64, annotated as f64);
            let fp = raw.get(Actual::Background, col).unwrap_or(0);
            ClassDetection {
                class: c,
                annotated,
                matched_annotated,
                predicted,
                matched_predicted,
                precision,
                recall,
                f1: harmonic(precision, recall),
                precision_by_true_class: ratio(matched_annotated as f64, (matched_annotated + fp) as f64),
            }
        })
        .collect();
    let (annotated, predicted, matches) = (raw.total_annotated(), raw.total_predicted(), raw.total_matches());
    let precision = ratio(matches as f64, predicted as f64);
    let recall = ratio(matches as f64, annotated as f64);
    DetectionMetrics {
        per_class,
        other_predictions: raw.column(Predicted::Other, false),
        overall: OverallDetection {
            annotated,
            predicted,
            matches,
            precision,
            recall,
            f1: harmonic(precision, recall),
        },
    }
}

pub fn detection_metrics(
    ms: &MatchSet,
    gt_classes: &ClassAssignment,
    pred_classes: &BTreeMap<u32, PredictedClass>,
    num_classes: u16,
) -> Result<DetectionMetrics, EvalError> {
    Ok(detection_from_confusion(&confusion::raw_confusion(
        ms,
        gt_classes,
        pred_classes,
        num_classes,
    )?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

/// IoU (percent) and Hausdorff distance (pixels) of one matched pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub gt_id: u32,
    pub pred_id: u32,
    pub class: ClassId,
    pub iou: f64,
    pub hausdorff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSegmentation {
    pub class: ClassId,
    pub pairs: u64,
    pub iou: Option<MeanStd>,
    pub hausdorff: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationMetrics {
    pub per_class: Vec<ClassSegmentation>,
    pub overall: ClassSegmentation,
    pub over_segmentation: u64,
    pub under_segmentation: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

/// Poolable segmentation statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct SegmentationTally {
    pub pairs: Vec<PairScore>,
    pub over: u64,
    pub under: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl SegmentationTally {
    fn merge(&mut self, other: SegmentationTally) {
        self.pairs.extend(other.pairs);
        self.over += other.over;
        self.under += other.under;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    fn finish(&self, num_classes: u16) -> SegmentationMetrics {
        let summarize = |class: ClassId, pairs: Vec<&PairScore>| {
            let ious: Vec<f64> = pairs.iter().map(|p| p.iou).collect();
            let hds: Vec<f64> = pairs.iter().map(|p| p.hausdorff).collect();
            ClassSegmentation {
                class,
                pairs: pairs.len() as u64,
                iou: MeanStd::of(&ious),
                hausdorff: MeanStd::of(&hds),
            }
        };
        SegmentationMetrics {
            per_class: (1..=num_classes)
                .map(ClassId)
                .map(|c| summarize(c, self.pairs.iter().filter(|p| p.class == c).collect()))
                .collect(),
            overall: summarize(ClassId::BACKGROUND, self.pairs.iter().collect()),
            over_segmentation: self.over,
            under_segmentation: self.under,
            false_positives: self.fp,
            false_negatives: self.fn_,
        }
    }
}

fn segmentation_tally(
    ms: &MatchSet,
    table: &OverlapTable,
    gt: &AnnotatedImage,
    pred: &PredictedImage,
    criterion: OverlapCriterion,
) -> Result<(SegmentationTally, Vec<u32>, Vec<u32>), EvalError> {
    let gt_sets = gt.instance_map.pixel_sets();
    let pred_sets = pred.instance_map.pixel_sets();
    let pairs = ms
        .matches
        .iter()
        .map(|m| {
            let class = gt.classes.get(&m.gt_id).copied().ok_or(EvalError::MissingClass {
                id: m.gt_id,
                predicted: false,
            })?;
            let (a, b): (&PixelSet, &PixelSet) = (&gt_sets[&m.gt_id], &pred_sets[&m.pred_id]);
            Ok(PairScore {
                gt_id: m.gt_id,
                pred_id: m.pred_id,
                class,
                iou: 100.0 * m.iou,
                hausdorff: hausdorff(a, b).expect("matched masks are nonempty"),
            })
        })
        .collect::<Result<_, EvalError>>()?;
    let over = over_segmented(table, ms, criterion);
    let under = under_segmented(table, ms, criterion);
    let tally = SegmentationTally {
        pairs,
        over: over.len() as u64,
        under: under.len() as u64,
        fp: ms.unmatched_pred.len() as u64,
        fn_: ms.unmatched_gt.len() as u64,
    };
    Ok((tally, over, under))
}

/// Per-pair IoU and Hausdorff distance, aggregated per annotation class.
pub fn segmentation_metrics(
    ms: &MatchSet,
    gt: &AnnotatedImage,
    pred: &PredictedImage,
    num_classes: u16,
    criterion: OverlapCriterion,
) -> Result<SegmentationMetrics, EvalError> {
    let table = OverlapTable::new(&gt.instance_map, &pred.instance_map)?;
    Ok(segmentation_tally(ms, &table, gt, pred, criterion)?
        .0
        .finish(num_classes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalConfig {
    pub overlap: OverlapCriterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub detection: DetectionMetrics,
    pub segmentation: SegmentationMetrics,
    pub classification: ClassificationMetrics,
    pub confusion: ConfusionTables,
}

/// Per-image results kept for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageBreakdown {
    pub image_id: String,
    pub matches: Vec<Match>,
    pub false_positives: Vec<u32>,
    pub false_negatives: Vec<u32>,
    pub rejected_by_centroid: Vec<Match>,
    pub over_segmented: Vec<u32>,
    pub under_segmented: Vec<u32>,
    pub detection: DetectionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub images: Vec<ImageBreakdown>,
}

struct ImageResult {
    breakdown: ImageBreakdown,
    raw: RawConfusion,
    tally: SegmentationTally,
}

fn evaluate_image(
    gt: &AnnotatedImage,
    pred: &PredictedImage,
    num_classes: u16,
    config: &EvalConfig,
) -> Result<ImageResult, EvalError> {
    let table = OverlapTable::new(&gt.instance_map, &pred.instance_map)?;
    let ms = match_from_table(&table, &gt.instance_map);
    let raw = confusion::raw_confusion(&ms, &gt.classes, &pred.classes, num_classes)?;
    let (tally, over, under) = segmentation_tally(&ms, &table, gt, pred, config.overlap)?;
    let detection = detection_from_confusion(&raw);
    let MatchSet {
        matches,
        unmatched_gt,
        unmatched_pred,
        rejected_by_centroid,
    } = ms;
    Ok(ImageResult {
        breakdown: ImageBreakdown {
            image_id: gt.image_id.clone(),
            matches,
            false_positives: unmatched_pred,
            false_negatives: unmatched_gt,
            rejected_by_centroid,
            over_segmented: over,
            under_segmented: under,
            detection,
        },
        raw,
        tally,
    })
}

fn index_by_id<'a, T>(items: &'a [T], id: impl Fn(&T) -> &str) -> Result<BTreeMap<&'a str, &'a T>, EvalError> {
    let mut out = BTreeMap::new();
    for it in items {
        let key = id(it);
        if out.insert(key, it).is_some() {
            return Err(EvalError::DuplicateImage(key.to_owned()));
        }
    }
    Ok(out)
}

/// Evaluates a test set. Counts from all images are pooled before any ratio
/// is taken; breakdowns come back sorted by image id.
pub fn evaluate_dataset(
    gt: &[AnnotatedImage],
    pred: &[PredictedImage],
    num_classes: u16,
    config: &EvalConfig,
) -> Result<Evaluation, EvalError> {
    let gt_by_id = index_by_id(gt, |g| &g.image_id)?;
    let pred_by_id = index_by_id(pred, |p| &p.image_id)?;
    let gt_ids: BTreeSet<&str> = gt_by_id.keys().copied().collect();
    let pred_ids: BTreeSet<&str> = pred_by_id.keys().copied().collect();
    if gt_ids != pred_ids {
        return Err(EvalError::IdSetMismatch {
            missing_in_pred: gt_ids.difference(&pred_ids).map(|s| s.to_string()).collect(),
            missing_in_gt: pred_ids.difference(&gt_ids).map(|s| s.to_string()).collect(),
        });
    }

    let pairs: Vec<(&AnnotatedImage, &PredictedImage)> = gt_by_id.iter().map(|(id, g)| (*g, pred_by_id[id])).collect();
    let results: Vec<ImageResult> = pairs
        .par_iter()
        .map(|(g, p)| {
            evaluate_image(g, p, num_classes, config).map_err(|e| EvalError::InImage {
                image_id: g.image_id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut raw = RawConfusion::new(num_classes);
    let mut tally = SegmentationTally::default();
    let mut images = Vec::with_capacity(results.len());
    for r in results {
        raw.merge(&r.raw);
        tally.merge(r.tally);
        images.push(r.breakdown);
    }
    let confusion = ConfusionTables::from(raw);
    Ok(Evaluation {
        report: MetricsReport {
            detection: detection_from_confusion(&confusion.raw),
            segmentation: tally.finish(num_classes),
            classification: classification_metrics(&confusion),
            confusion,
        },
        images,
    })
}
