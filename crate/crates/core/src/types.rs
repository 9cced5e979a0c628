//! Shared data model: instance maps, class assignments, annotated images,
//! noise configuration and dataset manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pixel, PixelSet};

/// Class index. `0` is background; classes of interest are `1..=K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u16);

impl ClassId {
    pub const BACKGROUND: ClassId = ClassId(0);

    pub fn get(self) -> u16 {
        self.0
    }

    pub fn is_background(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Class attached to a predicted instance. `Other` marks objects that were
/// detected but not assigned to any class of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedClass {
    Class(ClassId),
    Other,
}

impl PredictedClass {
    pub fn class(self) -> Option<ClassId> {
        match self {
            PredictedClass::Class(c) => Some(c),
            PredictedClass::Other => None,
        }
    }
}

impl From<ClassId> for PredictedClass {
    fn from(c: ClassId) -> Self {
        PredictedClass::Class(c)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypesError {
    #[error("pixel buffer has {got} elements, expected {width}x{height}")]
    BadDimensions { width: u32, height: u32, got: usize },
    #[error("unknown instance id {0}")]
    UnknownId(u32),
}

/// Row-major grid of instance ids; `0` is background.
///
/// Instance pixel sets need not be connected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMap {
    width: u32,
    height: u32,
    pixels: Vec<u32>,
}

impl InstanceMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, pixels: Vec<u32>) -> Result<Self, TypesError> {
        if pixels.len() != width as usize * height as usize {
            return Err(TypesError::BadDimensions {
                width,
                height,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.pixels
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.0 >= 0 && p.1 >= 0 && (p.0 as u32) < self.width && (p.1 as u32) < self.height
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.pixels[self.index(x, y)]
    }

    /// Id at `p`, or `None` outside the grid.
    pub fn at(&self, p: Pixel) -> Option<u32> {
        self.contains(p).then(|| self.get(p.0 as u32, p.1 as u32))
    }

    pub fn set(&mut self, x: u32, y: u32, id: u32) {
        let i = self.index(x, y);
        self.pixels[i] = id;
    }

    pub fn set_pixel(&mut self, p: Pixel, id: u32) {
        debug_assert!(self.contains(p));
        self.set(p.0 as u32, p.1 as u32, id);
    }

    /// Iterates `((x, y), id)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (Pixel, u32)> + '_ {
        let w = self.width as usize;
        self.pixels
            .iter()
            .enumerate()
            .map(move |(i, &id)| (((i % w) as i32, (i / w) as i32), id))
    }

    /// Set of nonzero ids present in the grid.
    pub fn ids(&self) -> BTreeSet<u32> {
        self.pixels.iter().copied().filter(|&id| id != 0).collect()
    }

    /// Pixel sets of every instance, in one pass.
    pub fn pixel_sets(&self) -> BTreeMap<u32, PixelSet> {
        let mut sets: BTreeMap<u32, PixelSet> = BTreeMap::new();
        for (p, id) in self.iter() {
            if id != 0 {
                sets.entry(id).or_default().insert(p);
            }
        }
        sets
    }

    pub fn pixel_set(&self, id: u32) -> PixelSet {
        self.iter().filter(|&(_, v)| v == id).map(|(p, _)| p).collect()
    }

    /// Pixel count per instance id.
    pub fn areas(&self) -> BTreeMap<u32, u64> {
        let mut areas = BTreeMap::new();
        for &id in &self.pixels {
            if id != 0 {
                *areas.entry(id).or_insert(0) += 1;
            }
        }
        areas
    }

    /// Rewrites every pixel through `f`.
    pub fn remap(&mut self, mut f: impl FnMut(u32) -> u32) {
        for v in &mut self.pixels {
            *v = f(*v);
        }
    }
}

/// Instance id → class of interest.
pub type ClassAssignment = BTreeMap<u32, ClassId>;

/// One image's ground-truth annotation: instance map plus per-instance class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub instance_map: InstanceMap,
    pub classes: ClassAssignment,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl AnnotatedImage {
    pub fn new(image_id: impl Into<String>, instance_map: InstanceMap, classes: ClassAssignment) -> Self {
        Self {
            image_id: image_id.into(),
            instance_map,
            classes,
            metadata: BTreeMap::new(),
        }
    }

    pub fn width(&self) -> u32 {
        self.instance_map.width()
    }

    pub fn height(&self) -> u32 {
        self.instance_map.height()
    }

    pub fn instance_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, id: u32) -> Option<ClassId> {
        self.classes.get(&id).copied()
    }
}

/// An invariant violation found by [`validate_image`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Class assignment references an id with no pixels.
    DanglingId(u32),
    /// Instance present in the map without a class.
    MissingClass(u32),
    ClassOutOfRange {
        id: u32,
        class: ClassId,
        num_classes: u16,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingId(id) => write!(f, "dangling id {id}"),
            Violation::MissingClass(id) => write!(f, "instance {id} has no class"),
            Violation::ClassOutOfRange { id, class, num_classes } => write!(
                f,
                "class out of range: instance {id} has class {class}, K = {num_classes}"
            ),
        }
    }
}

/// Lists every invariant violation of `img` against `num_classes` (K).
pub fn validate_image(img: &AnnotatedImage, num_classes: u16) -> Vec<Violation> {
    let ids = img.instance_map.ids();
    let mut out = Vec::new();
    for id in &ids {
        if !img.classes.contains_key(id) {
            out.push(Violation::MissingClass(*id));
        }
    }
    for (&id, &class) in &img.classes {
        if !ids.contains(&id) {
            out.push(Violation::DanglingId(id));
        }
        if class.is_background() || class.0 > num_classes {
            out.push(Violation::ClassOutOfRange { id, class, num_classes });
        }
    }
    out
}

/// Exact pixel set of instance `id`.
pub fn instance_pixel_set(img: &AnnotatedImage, id: u32) -> Result<PixelSet, TypesError> {
    if id == 0 {
        return Err(TypesError::UnknownId(id));
    }
    let set = img.instance_map.pixel_set(id);
    if set.is_empty() {
        return Err(TypesError::UnknownId(id));
    }
    Ok(set)
}

/// Contour-distortion and merge settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationNoise {
    /// Douglas-Peucker tolerance in pixels.
    pub epsilon_px: f64,
    /// Uniform factor applied to both fitted semi-axes.
    pub ellipse_scale: f64,
    pub ellipse_samples: usize,
    pub merge_enabled: bool,
    pub smooth_radius_px: u32,
}

impl Default for SegmentationNoise {
    fn default() -> Self {
        Self {
            epsilon_px: 2.0,
            ellipse_scale: 1.0,
            ellipse_samples: 64,
            merge_enabled: false,
            smooth_radius_px: 3,
        }
    }
}

/// Full corruption configuration. Stages always run in the order
/// detection → segmentation → classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseSpec {
    pub detection_rho: f64,
    pub classification_rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<SegmentationNoise>,
    pub seed: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseSpecError {
    #[error("{name} must be in [0, 1), got {value}")]
    InvalidRho { name: &'static str, value: f64 },
    #[error("epsilon must be >= 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("ellipse scale must be > 0, got {0}")]
    InvalidScale(f64),
    #[error("ellipse samples must be >= 8, got {0}")]
    TooFewSamples(usize),
}

pub(crate) fn check_rho(name: &'static str, value: f64) -> Result<(), NoiseSpecError> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(NoiseSpecError::InvalidRho { name, value })
    }
}

impl SegmentationNoise {
    pub fn validate(&self) -> Result<(), NoiseSpecError> {
        if !(self.epsilon_px >= 0.0) || !self.epsilon_px.is_finite() {
            return Err(NoiseSpecError::InvalidEpsilon(self.epsilon_px));
        }
        if !(self.ellipse_scale > 0.0) || !self.ellipse_scale.is_finite() {
            return Err(NoiseSpecError::InvalidScale(self.ellipse_scale));
        }
        if self.ellipse_samples < 8 {
            return Err(NoiseSpecError::TooFewSamples(self.ellipse_samples));
        }
        Ok(())
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), NoiseSpecError> {
        check_rho("detection_rho", self.detection_rho)?;
        check_rho("classification_rho", self.classification_rho)?;
        if let Some(seg) = &self.segmentation {
            seg.validate()?;
        }
        Ok(())
    }

    /// True when no stage would touch the data.
    pub fn is_identity(&self) -> bool {
        self.detection_rho == 0.0 && self.classification_rho == 0.0 && self.segmentation.is_none()
    }
}

/// In-memory annotated dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    /// Names of classes `1..=K`, in order.
    pub class_names: Vec<String>,
    pub images: Vec<AnnotatedImage>,
}

impl Dataset {
    pub fn num_classes(&self) -> u16 {
        self.class_names.len() as u16
    }

    pub fn instance_count(&self) -> usize {
        self.images.iter().map(AnnotatedImage::instance_count).sum()
    }

    /// Dataset-wide instance count per class.
    pub fn class_counts(&self) -> BTreeMap<ClassId, u64> {
        let mut counts = BTreeMap::new();
        for img in &self.images {
            for &c in img.classes.values() {
                *counts.entry(c).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn class_name(&self, class: ClassId) -> Option<&str> {
        self.class_names
            .get((class.0 as usize).checked_sub(1)?)
            .map(String::as_str)
    }
}

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One image entry of a [`DatasetManifest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    /// Mask container path, relative to the manifest's directory.
    pub container: PathBuf,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_weight: Option<f64>,
}

/// How a manifest was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_spec: Option<NoiseSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption_log: Option<PathBuf>,
    /// Resolved command configuration of the producing run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub name: String,
    pub class_names: Vec<String>,
    pub images: Vec<ManifestEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> u16 {
        self.class_names.len() as u16
    }
}
