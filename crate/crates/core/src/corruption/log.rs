use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::detection::remove_instances;
use super::segmentation::{apply_polygons, merge_pair};
use super::CorruptionError;
use crate::geometry::{EllipseParams, Polygon};
use crate::types::{ClassId, Dataset, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllipseSource {
    Direct,
    /// Fit degenerated; the axis-aligned extent ellipse was used.
    ExtentFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionOutcome {
    Replaced,
    /// The distorted mask came out empty; the original mask was kept.
    KeptOriginal,
}

/// One corruption event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Removed {
        image_id: String,
        id: u32,
        class: ClassId,
    },
    Distorted {
        image_id: String,
        id: u32,
        source: EllipseSource,
        ellipse: EllipseParams,
        polygon: Option<Polygon>,
        outcome: DistortionOutcome,
        pixels_before: u64,
        pixels_after: u64,
    },
    Merged {
        image_id: String,
        kept: u32,
        absorbed: u32,
        shared_border: u64,
        pixels_added: u64,
    },
    Relabeled {
        image_id: String,
        id: u32,
        old: ClassId,
        new: ClassId,
    },
}

impl LogRecord {
    pub fn image_id(&self) -> &str {
        match self {
            LogRecord::Removed { image_id, .. }
            | LogRecord::Distorted { image_id, .. }
            | LogRecord::Merged { image_id, .. }
            | LogRecord::Relabeled { image_id, .. } => image_id,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename = "spec")]
struct SpecHeader {
    spec: NoiseSpec,
}

/// Every change made by a corruption run, plus the spec that drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionLog {
    pub spec: NoiseSpec,
    pub records: Vec<LogRecord>,
}

impl CorruptionLog {
    pub fn new(spec: NoiseSpec) -> Self {
        Self {
            spec,
            records: Vec::new(),
        }
    }

    /// Line-delimited JSON: a spec header line, then one line per record.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&SpecHeader { spec: self.spec }).expect("spec serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorruptionError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, head) = lines
            .next()
            .ok_or_else(|| CorruptionError::MalformedLog("empty log".into()))?;
        let header: SpecHeader =
            serde_json::from_str(head).map_err(|e| CorruptionError::MalformedLog(format!("line 1: {e}")))?;
        let records = lines
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| CorruptionError::MalformedLog(format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            spec: header.spec,
            records,
        })
    }

    pub fn count(&self, pred: impl Fn(&LogRecord) -> bool) -> usize {
        self.records.iter().filter(|r| pred(r)).count()
    }

    /// Removed instances per class.
    pub fn removed_per_class(&self) -> BTreeMap<ClassId, u64> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            if let LogRecord::Removed { class, .. } = r {
                *out.entry(*class).or_insert(0) += 1;
            }
        }
        out
    }

    /// Relabel counts keyed by `(old, new)`.
    pub fn relabel_counts(&self) -> BTreeMap<(ClassId, ClassId), u64> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            if let LogRecord::Relabeled { old, new, .. } = r {
                *out.entry((*old, *new)).or_insert(0) += 1;
            }
        }
        out
    }

    /// Empirical detection matrix per class, `Q[observed][true]` with
    /// (background, class) ordering, from the clean class counts.
    pub fn empirical_detection_matrix(&self, clean: &Dataset) -> BTreeMap<ClassId, [[f64; 2]; 2]> {
        let removed = self.removed_per_class();
        clean
            .class_counts()
            .into_iter()
            .map(|(c, n)| {
                let r = removed.get(&c).copied().unwrap_or(0) as f64 / n as f64;
                (c, [[1.0, r], [0.0, 1.0 - r]])
            })
            .collect()
    }

    /// Class population seen by the classification stage: clean counts minus
    /// removed and merge-absorbed instances.
    pub fn classification_population(&self, clean: &Dataset) -> BTreeMap<ClassId, u64> {
        let mut pop = clean.class_counts();
        let class_of: BTreeMap<(&str, u32), ClassId> = clean
            .images
            .iter()
            .flat_map(|img| {
                img.classes
                    .iter()
                    .map(move |(&id, &c)| ((img.image_id.as_str(), id), c))
            })
            .collect();
        for r in &self.records {
            let gone = match r {
                LogRecord::Removed { class, .. } => Some(*class),
                LogRecord::Merged { image_id, kept, .. } => class_of.get(&(image_id.as_str(), *kept)).copied(),
                _ => None,
            };
            if let Some(c) = gone {
                if let Some(n) = pop.get_mut(&c) {
                    *n -= 1;
                }
            }
        }
        pop
    }

    /// Empirical K×K classification matrix `Q[observed][true]`.
    pub fn empirical_classification_matrix(&self, clean: &Dataset) -> Vec<Vec<f64>> {
        let k = clean.num_classes() as usize;
        let pop = self.classification_population(clean);
        let moves = self.relabel_counts();
        let mut q = vec![vec![0.0; k]; k];
        for j in 0..k {
            let true_c = ClassId(j as u16 + 1);
            let n = pop.get(&true_c).copied().unwrap_or(0);
            if n == 0 {
                continue;
            }
            let mut stayed = n;
            for i in 0..k {
                if i == j {
                    continue;
                }
                let m = moves.get(&(true_c, ClassId(i as u16 + 1))).copied().unwrap_or(0);
                q[i][j] = m as f64 / n as f64;
                stayed -= m;
            }
            q[j][j] = stayed as f64 / n as f64;
        }
        q
    }
}

/// Re-applies `log` to the clean dataset, reproducing the corrupted output.
pub fn replay(clean: &Dataset, log: &CorruptionLog) -> Result<Dataset, CorruptionError> {
    let mut out = clean.clone();
    let index: BTreeMap<String, usize> = out
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| (img.image_id.clone(), i))
        .collect();
    let locate = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| CorruptionError::Replay(format!("unknown image {id}")))
    };

    let mut removals: BTreeMap<usize, BTreeSet<u32>> = BTreeMap::new();
    let mut polygons: BTreeMap<usize, BTreeMap<u32, Option<Polygon>>> = BTreeMap::new();
    let radius = log.spec.segmentation.map_or(0, |s| s.smooth_radius_px);

    // Records are grouped by stage in pipeline order; apply each group in turn.
    let mut i = 0;
    while i < log.records.len() {
        match &log.records[i] {
            LogRecord::Removed { image_id, id, .. } => {
                removals.entry(locate(image_id)?).or_default().insert(*id);
                let next = log.records.get(i + 1);
                if !matches!(next, Some(LogRecord::Removed { .. })) {
                    for (idx, ids) in std::mem::take(&mut removals) {
                        out.images[idx] = remove_instances(&out.images[idx], &ids);
                    }
                }
            }
            LogRecord::Distorted {
                image_id, id, polygon, ..
            } => {
                polygons
                    .entry(locate(image_id)?)
                    .or_default()
                    .insert(*id, polygon.clone());
                let next = log.records.get(i + 1);
                if !matches!(next, Some(LogRecord::Distorted { .. })) {
                    for (idx, polys) in std::mem::take(&mut polygons) {
                        out.images[idx] = apply_polygons(&out.images[idx], &polys).0;
                    }
                }
            }
            LogRecord::Merged {
                image_id,
                kept,
                absorbed,
                pixels_added,
                ..
            } => {
                let img = &mut out.images[locate(image_id)?];
                let added = merge_pair(img, *kept, *absorbed, radius);
                if added != *pixels_added {
                    return Err(CorruptionError::Replay(format!(
                        "merge {kept}+{absorbed} in {image_id} added {added} pixels, log says {pixels_added}"
                    )));
                }
            }
            LogRecord::Relabeled { image_id, id, old, new } => {
                let img = &mut out.images[locate(image_id)?];
                match img.classes.get_mut(id) {
                    Some(c) if c == old => *c = *new,
                    other => {
                        return Err(CorruptionError::Replay(format!(
                            "instance {id} in {image_id} has class {other:?}, log expects {old}"
                        )))
                    }
                }
            }
        }
        i += 1;
    }
    Ok(out)
}
