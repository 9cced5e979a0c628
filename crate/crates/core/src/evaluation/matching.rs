use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::types::InstanceMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub gt_id: u32,
    pub pred_id: u32,
    pub iou: f64,
}

/// Outcome of the matching rule on one image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<Match>,
    /// False negatives.
    pub unmatched_gt: Vec<u32>,
    /// False positives.
    pub unmatched_pred: Vec<u32>,
    /// Pairs discarded because the predicted centroid fell outside the annotation.
    pub rejected_by_centroid: Vec<Match>,
}

impl MatchSet {
    pub fn matched_gt(&self) -> BTreeSet<u32> {
        self.matches.iter().map(|m| m.gt_id).collect()
    }

    pub fn matched_pred(&self) -> BTreeSet<u32> {
        self.matches.iter().map(|m| m.pred_id).collect()
    }
}

/// Areas and pairwise intersections of two instance maps.
#[derive(Debug, Clone, Default)]
pub(crate) struct OverlapTable {
    pub gt_area: BTreeMap<u32, u64>,
    pub pred_area: BTreeMap<u32, u64>,
    pub intersection: BTreeMap<(u32, u32), u64>,
    /// Per prediction: coordinate sums for the centroid.
    pub pred_sums: BTreeMap<u32, (i64, i64)>,
}

impl OverlapTable {
    pub fn new(gt: &InstanceMap, pred: &InstanceMap) -> Result<Self, EvalError> {
        if gt.width() != pred.width() || gt.height() != pred.height() {
            return Err(EvalError::DimensionMismatch {
                gt: (gt.width(), gt.height()),
                pred: (pred.width(), pred.height()),
            });
        }
        let mut t = OverlapTable::default();
        for (((x, y), g), (_, p)) in gt.iter().zip(pred.iter()) {
            if g != 0 {
                *t.gt_area.entry(g).or_insert(0) += 1;
            }
            if p != 0 {
                *t.pred_area.entry(p).or_insert(0) += 1;
                let s = t.pred_sums.entry(p).or_insert((0, 0));
                s.0 += x as i64;
                s.1 += y as i64;
                if g != 0 {
                    *t.intersection.entry((g, p)).or_insert(0) += 1;
                }
            }
        }
        Ok(t)
    }

    /// Intersection and union of a pair.
    pub fn pair(&self, g: u32, p: u32) -> (u64, u64) {
        let i = self.intersection.get(&(g, p)).copied().unwrap_or(0);
        (i, self.gt_area[&g] + self.pred_area[&p] - i)
    }

    /// Pixel nearest the prediction centroid, ties toward negative.
    pub fn centroid_pixel(&self, p: u32) -> (i32, i32) {
        let (sx, sy) = self.pred_sums[&p];
        let n = self.pred_area[&p] as f64;
        (round_half_down(sx as f64 / n), round_half_down(sy as f64 / n))
    }
}

/// Nearest integer, halves toward negative infinity.
pub fn round_half_down(v: f64) -> i32 {
    (v - 0.5).ceil() as i32
}

/// Orders `(inter, union)` ratios exactly.
fn cmp_ratio(a: (u64, u64), b: (u64, u64)) -> Ordering {
    (a.0 as u128 * b.1 as u128).cmp(&(b.0 as u128 * a.1 as u128))
}

pub(crate) fn match_from_table(table: &OverlapTable, gt: &InstanceMap) -> MatchSet {
    let mut candidates: Vec<((u32, u32), (u64, u64))> = table
        .intersection
        .keys()
        .map(|&(g, p)| ((g, p), table.pair(g, p)))
        .collect();
    candidates.sort_by(|(ka, ra), (kb, rb)| cmp_ratio(*rb, *ra).then(ka.cmp(kb)));

    let mut ms = MatchSet::default();
    let (mut used_gt, mut used_pred) = (BTreeSet::new(), BTreeSet::new());
    for ((g, p), (inter, union)) in candidates {
        if used_gt.contains(&g) || used_pred.contains(&p) {
            continue;
        }
        let m = Match {
            gt_id: g,
            pred_id: p,
            iou: inter as f64 / union as f64,
        };
        if gt.at(table.centroid_pixel(p)) == Some(g) {
            used_gt.insert(g);
            used_pred.insert(p);
            ms.matches.push(m);
        } else {
            ms.rejected_by_centroid.push(m);
        }
    }
    ms.unmatched_gt = table.gt_area.keys().copied().filter(|g| !used_gt.contains(g)).collect();
    ms.unmatched_pred = table
        .pred_area
        .keys()
        .copied()
        .filter(|p| !used_pred.contains(p))
        .collect();
    ms
}

/// Greedy matching: repeatedly take the highest-IoU pair among unmatched
/// objects (ties by `(gt_id, pred_id)`), accept it if the predicted
/// centroid pixel lies inside the annotation, otherwise discard only that
/// pair.
pub fn match_maps(gt: &InstanceMap, pred: &InstanceMap) -> Result<MatchSet, EvalError> {
    let table = OverlapTable::new(gt, pred)?;
    Ok(match_from_table(&table, gt))
}

/// Which overlap measure flags over- and under-segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapCriterion {
    /// `|own ∩ other| / |own|`.
    #[default]
    Coverage,
    Iou,
}

pub(crate) fn over_segmented(table: &OverlapTable, ms: &MatchSet, criterion: OverlapCriterion) -> Vec<u32> {
    let matched_gt = ms.matched_gt();
    ms.unmatched_pred
        .iter()
        .copied()
        .filter(|&p| {
            matched_gt.iter().any(|&g| {
                let (inter, union) = table.pair(g, p);
                let denom = match criterion {
                    OverlapCriterion::Coverage => table.pred_area[&p],
                    OverlapCriterion::Iou => union,
                };
                2 * inter >= denom && inter > 0
            })
        })
        .collect()
}

pub(crate) fn under_segmented(table: &OverlapTable, ms: &MatchSet, criterion: OverlapCriterion) -> Vec<u32> {
    let matched_pred = ms.matched_pred();
    ms.unmatched_gt
        .iter()
        .copied()
        .filter(|&g| {
            matched_pred.iter().any(|&p| {
                let (inter, union) = table.pair(g, p);
                let denom = match criterion {
                    OverlapCriterion::Coverage => table.gt_area[&g],
                    OverlapCriterion::Iou => union,
                };
                2 * inter >= denom && inter > 0
            })
        })
        .collect()
}

/// Unmatched predictions lying mostly (overlap ≥ 0.5) on an already matched
/// annotation. They stay false positives.
pub fn find_over_segmentation(
    ms: &MatchSet,
    gt: &InstanceMap,
    pred: &InstanceMap,
    criterion: OverlapCriterion,
) -> Result<Vec<u32>, EvalError> {
    Ok(over_segmented(&OverlapTable::new(gt, pred)?, ms, criterion))
}

/// Unmatched annotations lying mostly (overlap ≥ 0.5) under an already
/// matched prediction. They stay false negatives.
pub fn find_under_segmentation(
    ms: &MatchSet,
    gt: &InstanceMap,
    pred: &InstanceMap,
    criterion: OverlapCriterion,
) -> Result<Vec<u32>, EvalError> {
    Ok(under_segmented(&OverlapTable::new(gt, pred)?, ms, criterion))
}
