//! Direct least-squares ellipse fitting.
//!
//! The conic `A x² + B xy + C y² + D x + E y + F = 0` minimizing the summed
//! squared algebraic distance under the normalization `4AC − B² = 1`. The
//! 6×6 generalized eigenproblem is reduced to 3×3 by eliminating the linear
//! terms (Halíř–Flusser), on centered and scale-normalized points.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Point, Polygon};

/// Geometric ellipse: center, semi-axes `a >= b > 0`, and rotation of the
/// major axis from +x in `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl EllipseParams {
    /// Builds canonical parameters, swapping axes so that `a >= b`.
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Self {
        let (a, b, theta) = if a >= b {
            (a, b, theta)
        } else {
            (b, a, theta + PI / 2.0)
        };
        Self {
            cx,
            cy,
            a,
            b,
            theta: normalize_angle(theta),
        }
    }

    /// Scales both semi-axes by `factor`, keeping center and orientation.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            a: self.a * factor,
            b: self.b * factor,
            ..*self
        }
    }
}

fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// [`fit_ellipse_with_min`] with the default minimum of 6 points.
pub fn fit_ellipse(points: &[Point]) -> Result<EllipseParams, GeometryError> {
    fit_ellipse_with_min(points, 6)
}

pub fn fit_ellipse_with_min(points: &[Point], min_points: usize) -> Result<EllipseParams, GeometryError> {
    let min_points = min_points.max(6);
    if points.len() < min_points {
        return Err(GeometryError::TooFewPoints {
            needed: min_points,
            got: points.len(),
        });
    }

    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let rms = (points
        .iter()
        .map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(rms > 0.0) || !rms.is_finite() {
        return Err(GeometryError::Degenerate("coincident points"));
    }
    let scale = std::f64::consts::SQRT_2 / rms;

    // Scatter blocks: quadratic terms (S1), cross (S2), linear terms (S3).
    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for p in points {
        let x = (p.x - mx) * scale;
        let y = (p.y - my) * scale;
        let q = Vector3::new(x * x, x * y, y * y);
        let l = Vector3::new(x, y, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }

    let svd = s3.svd(false, false);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if smin <= smax * 1e-12 {
        return Err(GeometryError::Degenerate("collinear points"));
    }
    let s3_inv = s3.try_inverse().ok_or(GeometryError::Degenerate("singular scatter"))?;
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // Premultiply by C1⁻¹ with C1 = [[0,0,2],[0,-1,0],[2,0,0]].
    let reduced = Matrix3::from_rows(&[m.row(2) / 2.0, -m.row(1), m.row(0) / 2.0]);

    let eigenvalues = reduced.complex_eigenvalues();
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for ev in eigenvalues.iter() {
        if ev.im.abs() > 1e-9 * (1.0 + ev.re.abs()) {
            continue;
        }
        let Some(v) = null_vector(&(reduced - Matrix3::identity() * ev.re)) else {
            continue;
        };
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond > 0.0 {
            // A positive-definite constraint admits one eigenvector; keep the
            // smallest eigenvalue if round-off leaves several.
            if best.as_ref().is_none_or(|(e, _)| ev.re.abs() < *e) {
                best = Some((ev.re.abs(), v));
            }
        }
    }
    let (_, quad) = best.ok_or(GeometryError::Degenerate("no elliptical solution"))?;
    let lin = t * quad;
    let coeffs = [quad[0], quad[1], quad[2], lin[0], lin[1], lin[2]];

    let e = conic_to_ellipse(coeffs).ok_or(GeometryError::Degenerate("fitted conic is not a real ellipse"))?;
    Ok(EllipseParams::new(
        e.cx / scale + mx,
        e.cy / scale + my,
        e.a / scale,
        e.b / scale,
        e.theta,
    ))
}

/// Null vector of a rank-2 3×3 matrix: the largest cross product of two rows.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let r: [Vector3<f64>; 3] = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let cands = [r[0].cross(&r[1]), r[0].cross(&r[2]), r[1].cross(&r[2])];
    let v = cands.into_iter().max_by(|a, b| a.norm().total_cmp(&b.norm()))?;
    let norm = v.norm();
    (norm > 0.0 && norm.is_finite()).then(|| v / norm)
}

fn conic_to_ellipse(c: [f64; 6]) -> Option<EllipseParams> {
    let [a, b, cc, d, e, f] = c;
    let denom = 4.0 * a * cc - b * b;
    if !(denom > 0.0) {
        return None;
    }
    let cx = (b * e - 2.0 * cc * d) / denom;
    let cy = (b * d - 2.0 * a * e) / denom;
    let f0 = a * cx * cx + b * cx * cy + cc * cy * cy + d * cx + e * cy + f;

    let mean = (a + cc) / 2.0;
    let radius = (((a - cc) / 2.0).powi(2) + (b / 2.0).powi(2)).sqrt();
    let (lo, hi) = (mean - radius, mean + radius);
    // Semi-axis along the eigenvector of λ is sqrt(-f0 / λ).
    let major_sq = -f0 / lo;
    let minor_sq = -f0 / hi;
    if !(major_sq > 0.0 && minor_sq > 0.0) || !major_sq.is_finite() {
        return None;
    }
    // 0.5·atan2(B, A − C) points along the largest eigenvalue (the minor axis).
    let theta = if radius <= 1e-14 * mean.abs() {
        0.0
    } else {
        0.5 * b.atan2(a - cc) + PI / 2.0
    };
    Some(EllipseParams::new(cx, cy, major_sq.sqrt(), minor_sq.sqrt(), theta))
}

/// `n` vertices at uniformly spaced parametric angles, counterclockwise.
///
/// # Panics
/// If `n < 3`.
pub fn sample_ellipse(e: &EllipseParams, n: usize) -> Polygon {
    let (s, c) = e.theta.sin_cos();
    let vertices = (0..n)
        .map(|k| {
            let t = TAU * k as f64 / n as f64;
            let (st, ct) = t.sin_cos();
            let (u, v) = (e.a * ct, e.b * st);
            Point::new(e.cx + u * c - v * s, e.cy + u * s + v * c)
        })
        .collect();
    Polygon::new(vertices).expect("sample_ellipse needs at least 3 vertices")
}
