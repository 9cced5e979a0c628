//! Raster and polygon geometry used by corruption and evaluation.
//!
//! Coordinates follow the pixel-index convention: pixel `(x, y)` has its
//! center at the real point `(x, y)`, with `y` growing downwards.

mod contour;
mod distance;
mod ellipse;
mod raster;
mod simplify;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contour::{boundary, centroid, components_8, trace_contour};
pub use distance::{hausdorff, iou};
pub use ellipse::{fit_ellipse, fit_ellipse_with_min, sample_ellipse, EllipseParams};
pub use raster::{border_counts, rasterize_polygon, shared_border, smooth_mask};
pub use simplify::{douglas_peucker, douglas_peucker_closed, point_segment_distance};

/// Integer pixel coordinate `(x, y)`.
pub type Pixel = (i32, i32);

/// Ordered pixel set; iteration order is `(x, y)` lexicographic.
pub type PixelSet = BTreeSet<Pixel>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<Pixel> for Point {
    fn from(p: Pixel) -> Self {
        Point::new(p.0 as f64, p.1 as f64)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("empty pixel set")]
    EmptyInput,
    #[error("unknown instance id {0}")]
    UnknownId(u32),
}

/// Closed polygon (the last vertex connects to the first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewPoints {
                needed: 3,
                got: vertices.len(),
            });
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace area; positive for counterclockwise order in `(x, y)`.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// True when no two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let v = &self.vertices;
        let n = v.len();
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            for j in (i + 1)..n {
                if j == i || (j + 1) % n == i || j == (i + 1) % n {
                    continue;
                }
                let (c, d) = (v[j], v[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

pub(crate) fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        s += a.x * b.y - b.x * a.y;
    }
    s * 0.5
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| {
        r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
    };
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}
