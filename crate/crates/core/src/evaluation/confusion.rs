use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::MatchSet;
use super::{harmonic, ratio, EvalError};
use crate::types::{ClassAssignment, ClassId, PredictedClass};

/// Row of the raw confusion table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actual {
    /// Unmatched predictions.
    Background,
    Class(ClassId),
}

/// Column of the raw confusion table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicted {
    /// Unmatched annotations.
    Undetected,
    Other,
    Class(ClassId),
}

impl From<PredictedClass> for Predicted {
    fn from(p: PredictedClass) -> Self {
        match p {
            PredictedClass::Other => Predicted::Other,
            PredictedClass::Class(c) => Predicted::Class(c),
        }
    }
}

/// `(K+1) × (K+2)` counts. Rows: background, classes `1..=K`. Columns:
/// undetected, other, classes `1..=K`. The background × undetected cell has
/// no meaning and reads as `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawConfusion {
    num_classes: u16,
    counts: Vec<u64>,
}

impl RawConfusion {
    pub fn new(num_classes: u16) -> Self {
        let k = num_classes as usize;
        Self {
            num_classes,
            counts: vec![0; (k + 1) * (k + 2)],
        }
    }

    /// Builds a table from its rows in display order; the first row starts at
    /// the `Other` column since its undetected cell is undefined.
    pub fn from_rows(background: &[u64], rows: &[Vec<u64>]) -> Result<Self, EvalError> {
        let k = rows.len();
        if background.len() != k + 1 || rows.iter().any(|r| r.len() != k + 2) {
            return Err(EvalError::BadTable);
        }
        let mut t = Self::new(k as u16);
        for (j, &v) in background.iter().enumerate() {
            t.counts[j + 1] = v;
        }
        for (i, r) in rows.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                t.counts[(i + 1) * (k + 2) + j] = v;
            }
        }
        Ok(t)
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    fn index(&self, row: Actual, col: Predicted) -> Option<usize> {
        let k = self.num_classes;
        let r = match row {
            Actual::Background => 0,
            Actual::Class(c) if (1..=k).contains(&c.0) => c.0 as usize,
            Actual::Class(_) => return None,
        };
        let c = match col {
            Predicted::Undetected if r == 0 => return None,
            Predicted::Undetected => 0,
            Predicted::Other => 1,
            Predicted::Class(c) if (1..=k).contains(&c.0) => c.0 as usize + 1,
            Predicted::Class(_) => return None,
        };
        Some(r * (k as usize + 2) + c)
    }

    pub fn get(&self, row: Actual, col: Predicted) -> Option<u64> {
        self.index(row, col).map(|i| self.counts[i])
    }

    fn bump(&mut self, row: Actual, col: Predicted) -> Result<(), EvalError> {
        let i = self.index(row, col).ok_or(EvalError::ClassOutOfRange)?;
        self.counts[i] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &RawConfusion) {
        assert_eq!(self.num_classes, other.num_classes, "class count mismatch");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    fn classes(&self) -> impl Iterator<Item = ClassId> {
        (1..=self.num_classes).map(ClassId)
    }

    fn detected_cols(&self) -> impl Iterator<Item = Predicted> {
        std::iter::once(Predicted::Other).chain(self.classes().map(Predicted::Class))
    }

    /// Matched annotations of class `c`.
    pub fn detected(&self, c: ClassId) -> u64 {
        self.detected_cols()
            .filter_map(|col| self.get(Actual::Class(c), col))
            .sum()
    }

    /// All annotations of class `c`.
    pub fn annotated(&self, c: ClassId) -> u64 {
        self.detected(c) + self.get(Actual::Class(c), Predicted::Undetected).unwrap_or(0)
    }

    /// Predictions in column `col`, matched ones only when `matched_only`.
    pub fn column(&self, col: Predicted, matched_only: bool) -> u64 {
        let rows = self.classes().map(Actual::Class);
        let sum: u64 = rows.filter_map(|r| self.get(r, col)).sum();
        if matched_only {
            sum
        } else {
            sum + self.get(Actual::Background, col).unwrap_or(0)
        }
    }

    pub fn total_matches(&self) -> u64 {
        self.classes().map(|c| self.detected(c)).sum()
    }

    pub fn total_annotated(&self) -> u64 {
        self.classes().map(|c| self.annotated(c)).sum()
    }

    pub fn total_predicted(&self) -> u64 {
        self.detected_cols().map(|c| self.column(c, false)).sum()
    }

    /// Rows as displayed: background first (`None` in the undetected cell).
    pub fn rows(&self) -> Vec<Vec<Option<u64>>> {
        let cols: Vec<Predicted> = std::iter::once(Predicted::Undetected)
            .chain(self.detected_cols())
            .collect();
        std::iter::once(Actual::Background)
            .chain(self.classes().map(Actual::Class))
            .map(|r| cols.iter().map(|&c| self.get(r, c)).collect())
            .collect()
    }

    /// Row-normalized percentages over detected nuclei. Columns: other,
    /// classes `1..=K`. A row without detected nuclei is `None`.
    pub fn normalized(&self) -> Vec<Option<Vec<f64>>> {
        self.classes()
            .map(|c| {
                let n = self.detected(c);
                (n > 0).then(|| {
                    self.detected_cols()
                        .map(|col| 100.0 * self.get(Actual::Class(c), col).unwrap_or(0) as f64 / n as f64)
                        .collect()
                })
            })
            .collect()
    }
}

/// Raw and normalized confusion matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionTables {
    pub raw: RawConfusion,
    pub ncm: Vec<Option<Vec<f64>>>,
}

impl From<RawConfusion> for ConfusionTables {
    fn from(raw: RawConfusion) -> Self {
        let ncm = raw.normalized();
        Self { raw, ncm }
    }
}

pub(crate) fn raw_confusion(
    ms: &MatchSet,
    gt_classes: &ClassAssignment,
    pred_classes: &BTreeMap<u32, PredictedClass>,
    num_classes: u16,
) -> Result<RawConfusion, EvalError> {
    let gt = |id: u32| {
        gt_classes
            .get(&id)
            .copied()
            .ok_or(EvalError::MissingClass { id, predicted: false })
    };
    let pred = |id: u32| {
        pred_classes
            .get(&id)
            .copied()
            .ok_or(EvalError::MissingClass { id, predicted: true })
    };
    let mut t = RawConfusion::new(num_classes);
    for m in &ms.matches {
        t.bump(Actual::Class(gt(m.gt_id)?), pred(m.pred_id)?.into())?;
    }
    for &g in &ms.unmatched_gt {
        t.bump(Actual::Class(gt(g)?), Predicted::Undetected)?;
    }
    for &p in &ms.unmatched_pred {
        t.bump(Actual::Background, pred(p)?.into())?;
    }
    Ok(t)
}

pub fn build_confusion(
    ms: &MatchSet,
    gt_classes: &ClassAssignment,
    pred_classes: &BTreeMap<u32, PredictedClass>,
    num_classes: u16,
) -> Result<ConfusionTables, EvalError> {
    Ok(raw_confusion(ms, gt_classes, pred_classes, num_classes)?.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassClassification {
    pub class: ClassId,
    /// Detected nuclei of this class.
    pub nuclei: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub balanced_accuracy: Option<f64>,
    pub per_class: Vec<ClassClassification>,
}

/// Balanced metrics from the normalized table: recall is the diagonal,
/// precision divides it by the column sum over defined rows.
pub fn classification_metrics(ct: &ConfusionTables) -> ClassificationMetrics {
    let diag = |i: usize| ct.ncm[i].as_ref().map(|r| r[i + 1]);
    let per_class: Vec<ClassClassification> = (0..ct.ncm.len())
        .map(|i| {
            let recall = diag(i);
            let col: f64 = ct.ncm.iter().flatten().map(|r| r[i + 1]).sum();
            let precision = recall.and_then(|d| ratio(d, col));
            ClassClassification {
                class: ClassId(i as u16 + 1),
                nuclei: ct.raw.detected(ClassId(i as u16 + 1)),
                precision,
                recall,
                f1: harmonic(precision, recall),
            }
        })
        .collect();
    let defined: Vec<f64> = (0..ct.ncm.len()).filter_map(diag).collect();
    ClassificationMetrics {
        balanced_accuracy: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        per_class,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Raw matrix of the clean-training test set (rows ∅, E, L, N).
    pub(crate) fn published_table() -> RawConfusion {
        RawConfusion::from_rows(
            &[124, 757, 569, 16],
            &[
                vec![874, 22, 4973, 57, 2],
                vec![440, 18, 157, 5311, 14],
                vec![21, 0, 2, 3, 105],
            ],
        )
        .unwrap()
    }

    #[test]
    fn published_row_sums() {
        let t = published_table();
        assert_eq!(t.detected(ClassId(1)), 22 + 4973 + 57 + 2);
        assert_eq!(t.detected(ClassId(2)), 5500);
        assert_eq!(t.detected(ClassId(3)), 110);
        assert_eq!(t.total_matches(), 10664);
        assert_eq!(t.total_annotated(), 11999);
        assert_eq!(t.total_predicted(), 12130);
        assert_eq!(t.get(Actual::Background, Predicted::Undetected), None);
    }

    #[test]
    fn published_ncm_rounds_to_table() {
        let ct = ConfusionTables::from(published_table());
        let want = [[0.4, 98.4, 1.1, 0.0], [0.3, 2.9, 96.6, 0.2], [0.0, 1.8, 2.7, 95.5]];
        for (row, w) in ct.ncm.iter().zip(want) {
            let row = row.as_ref().unwrap();
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
            for (v, w) in row.iter().zip(w) {
                // The printed L→N cell is 0.2 although 14/5500 rounds to 0.3.
                assert!((v - w).abs() < 0.06, "{v} vs {w}");
            }
        }
        let e = ct.ncm[0].as_ref().unwrap();
        assert!((e[0] - 100.0 * 22.0 / 5054.0).abs() < 1e-12);
        assert!((e[1] - 100.0 * 4973.0 / 5054.0).abs() < 1e-12);
    }

    #[test]
    fn published_balanced_accuracy() {
        let m = classification_metrics(&published_table().into());
        let oracle = 100.0 * (4973.0 / 5054.0 + 5311.0 / 5500.0 + 105.0 / 110.0) / 3.0;
        assert!((m.balanced_accuracy.unwrap() - oracle).abs() < 1e-9);
        assert!((m.balanced_accuracy.unwrap() - 96.8).abs() < 0.05);
        assert!((m.per_class[0].precision.unwrap() - 95.44).abs() < 0.05);
        assert_eq!(m.per_class[2].nuclei, 110);
    }

    #[test]
    fn empty_row_is_undefined() {
        let t = RawConfusion::from_rows(&[0, 0, 0], &[vec![0, 0, 5, 0], vec![3, 0, 0, 0]]).unwrap();
        let ct = ConfusionTables::from(t);
        assert!(ct.ncm[1].is_none());
        let m = classification_metrics(&ct);
        assert_eq!(m.balanced_accuracy, Some(100.0));
        assert_eq!(m.per_class[1].recall, None);
        assert_eq!(m.per_class[1].precision, None);
    }

    #[test]
    fn identity_is_perfect() {
        let t = RawConfusion::from_rows(&[0; 3], &[vec![0, 0, 9, 0], vec![0, 0, 0, 4]]).unwrap();
        let m = classification_metrics(&t.into());
        assert_eq!(m.balanced_accuracy, Some(100.0));
        for c in m.per_class {
            assert_eq!((c.precision, c.recall, c.f1), (Some(100.0), Some(100.0), Some(100.0)));
        }
    }

    #[test]
    fn bad_shape() {
        assert_eq!(
            RawConfusion::from_rows(&[1, 2], &[vec![1, 2]]),
            Err(EvalError::BadTable)
        );
    }
}
