use std::collections::BTreeMap;

use super::{GeometryError, Pixel, PixelSet, Polygon};
use crate::types::InstanceMap;

/// Pixels whose centers fall inside `polygon` under the even-odd rule,
/// clipped to `[0, width) × [0, height)`.
///
/// Ties follow the top-left convention: an edge crossing counts on the
/// half-open span `[y_min, y_max)` and a scanline span covers `[x_in, x_out)`,
/// so centers exactly on left or top edges are inside and those on right or
/// bottom edges are not.
pub fn rasterize_polygon(polygon: &Polygon, width: u32, height: u32) -> PixelSet {
    let v = polygon.vertices();
    let n = v.len();
    let (ymin, ymax) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.y), hi.max(p.y))
    });
    let mut out = PixelSet::new();
    if !(ymin.is_finite() && ymax.is_finite()) {
        return out;
    }
    let y_start = ymin.ceil().max(0.0) as i64;
    let y_end = (ymax.ceil() as i64).min(height as i64);
    let mut xs = Vec::new();
    for y in y_start..y_end {
        let yf = y as f64;
        xs.clear();
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            if (a.y <= yf && yf < b.y) || (b.y <= yf && yf < a.y) {
                xs.push(a.x + (yf - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let x0 = pair[0].ceil().max(0.0) as i64;
            let x1 = (pair[1].ceil() as i64).min(width as i64);
            for x in x0..x1 {
                out.insert((x as i32, y as i32));
            }
        }
    }
    out
}

fn disk(radius: u32) -> Vec<Pixel> {
    let r = radius as i32;
    let r2 = (r as i64) * (r as i64);
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx as i64).pow(2) + (dy as i64).pow(2) <= r2 {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Morphological closing (dilation then erosion) with a discrete disk
/// `dx² + dy² <= radius²`. Radius 0 is the identity.
pub fn smooth_mask(pixels: &PixelSet, radius: u32) -> PixelSet {
    if radius == 0 || pixels.is_empty() {
        return pixels.clone();
    }
    let se = disk(radius);
    let dilated: PixelSet = pixels
        .iter()
        .flat_map(|&(x, y)| se.iter().map(move |&(dx, dy)| (x + dx, y + dy)))
        .collect();
    dilated
        .iter()
        .copied()
        .filter(|&(x, y)| se.iter().all(|&(dx, dy)| dilated.contains(&(x + dx, y + dy))))
        .collect()
}

/// Number of 4-adjacent pixel pairs with one pixel in `id_a` and the other in `id_b`.
pub fn shared_border(map: &InstanceMap, id_a: u32, id_b: u32) -> Result<u64, GeometryError> {
    let ids = map.ids();
    for id in [id_a, id_b] {
        if !ids.contains(&id) {
            return Err(GeometryError::UnknownId(id));
        }
    }
    let key = (id_a.min(id_b), id_a.max(id_b));
    Ok(border_counts(map).get(&key).copied().unwrap_or(0))
}

/// Shared-border counts of every touching instance pair `(low id, high id)`.
pub fn border_counts(map: &InstanceMap) -> BTreeMap<(u32, u32), u64> {
    let (w, h) = (map.width(), map.height());
    let mut counts = BTreeMap::new();
    let mut bump = |a: u32, b: u32| {
        if a != 0 && b != 0 && a != b {
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    };
    for y in 0..h {
        for x in 0..w {
            let id = map.get(x, y);
            if x + 1 < w {
                bump(id, map.get(x + 1, y));
            }
            if y + 1 < h {
                bump(id, map.get(x, y + 1));
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    fn poly(v: &[(f64, f64)]) -> Polygon {
        Polygon::new(v.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    fn block(x0: i32, y0: i32, w: i32, h: i32) -> PixelSet {
        (x0..x0 + w).flat_map(|x| (y0..y0 + h).map(move |y| (x, y))).collect()
    }

    #[test]
    fn square_rasterizes_to_top_left_block() {
        let sq = poly(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)]);
        assert_eq!(rasterize_polygon(&sq, 8, 8), block(0, 0, 4, 4));
    }

    #[test]
    fn triangle_has_ten_pixels() {
        let tri = poly(&[(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)]);
        let r = rasterize_polygon(&tri, 8, 8);
        assert_eq!(r.len(), 10);
        for &(x, y) in &r {
            assert!(x + y < 4);
        }
    }

    #[test]
    fn outside_polygon_is_empty() {
        let sq = poly(&[(20.0, 20.0), (24.0, 20.0), (24.0, 24.0), (20.0, 24.0)]);
        assert!(rasterize_polygon(&sq, 8, 8).is_empty());
        let neg = poly(&[(-9.0, -9.0), (-5.0, -9.0), (-5.0, -5.0)]);
        assert!(rasterize_polygon(&neg, 8, 8).is_empty());
    }

    #[test]
    fn raster_is_clipped() {
        let sq = poly(&[(-2.0, -2.0), (3.0, -2.0), (3.0, 3.0), (-2.0, 3.0)]);
        assert_eq!(rasterize_polygon(&sq, 8, 8), block(0, 0, 3, 3));
    }

    #[test]
    fn orientation_does_not_matter() {
        let cw = poly(&[(0.5, 0.5), (0.5, 6.2), (5.7, 3.3)]);
        let ccw = poly(&[(0.5, 0.5), (5.7, 3.3), (0.5, 6.2)]);
        assert_eq!(rasterize_polygon(&cw, 10, 10), rasterize_polygon(&ccw, 10, 10));
    }

    #[test]
    fn closing_radius_zero_is_identity() {
        let s = PixelSet::from([(0, 0), (5, 5), (7, 1)]);
        assert_eq!(smooth_mask(&s, 0), s);
    }

    #[test]
    fn closing_bridges_one_pixel_gap() {
        let mut s = block(0, 0, 3, 3);
        s.extend(block(4, 0, 3, 3));
        let c = smooth_mask(&s, 1);
        assert!(c.is_superset(&s));
        assert!(c.contains(&(3, 1)));
        assert_eq!(crate::geometry::components_8(&c).len(), 1);
    }

    #[test]
    fn closing_keeps_solid_square() {
        let s = block(2, 2, 5, 5);
        assert_eq!(smooth_mask(&s, 1), s);
    }

    fn two_squares() -> InstanceMap {
        let mut m = InstanceMap::new(10, 5);
        for y in 0..5 {
            for x in 0..5 {
                m.set(x, y, 1);
                m.set(x + 5, y, 2);
            }
        }
        m
    }

    #[test]
    fn shared_vertical_edge() {
        assert_eq!(shared_border(&two_squares(), 1, 2), Ok(5));
        assert_eq!(shared_border(&two_squares(), 2, 1), Ok(5));
    }

    #[test]
    fn diagonal_contact_is_not_a_border() {
        let mut m = InstanceMap::new(3, 3);
        m.set(0, 0, 1);
        m.set(1, 1, 2);
        assert_eq!(shared_border(&m, 1, 2), Ok(0));
    }

    #[test]
    fn non_touching_and_unknown() {
        let mut m = InstanceMap::new(6, 1);
        m.set(0, 0, 1);
        m.set(5, 0, 2);
        assert_eq!(shared_border(&m, 1, 2), Ok(0));
        assert_eq!(shared_border(&m, 1, 9), Err(GeometryError::UnknownId(9)));
    }
}
