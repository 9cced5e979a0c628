use super::Point;

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len_sq = dx * dx + dy * dy;
    if len_sq == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * dx, a.y + t * dy))
}

/// Marks retained indices of `points[lo..=hi]`; endpoints are assumed kept.
fn simplify_range(points: &[Point], lo: usize, hi: usize, epsilon: f64, keep: &mut [bool]) {
    let mut stack = vec![(lo, hi)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (points[lo], points[hi]);
        let mut far = lo;
        let mut far_d = -1.0;
        for (i, &p) in points.iter().enumerate().take(hi).skip(lo + 1) {
            let d = point_segment_distance(p, a, b);
            if d > far_d {
                far_d = d;
                far = i;
            }
        }
        if far_d > epsilon {
            keep[far] = true;
            stack.push((far, hi));
            stack.push((lo, far));
        }
    }
}

/// Douglas-Peucker simplification of an open polyline.
///
/// A vertex survives iff its distance to the current chord is strictly
/// greater than `epsilon`; ties for the farthest vertex go to the first.
/// Endpoints are always kept, so inputs of fewer than three vertices are
/// returned unchanged.
pub fn douglas_peucker(points: &[Point], epsilon: f64) -> Vec<Point> {
    if points.len() < 3 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    keep[0] = true;
    keep[points.len() - 1] = true;
    simplify_range(points, 0, points.len() - 1, epsilon, &mut keep);
    select(points, &keep)
}

/// Douglas-Peucker on a closed ring.
///
/// The ring is split at its two mutually farthest vertices (first pair in
/// index order on ties) and both arcs are simplified. Output keeps the input
/// cyclic order starting from the lowest retained index, and may have only
/// two vertices when `epsilon` exceeds every deviation.
pub fn douglas_peucker_closed(points: &[Point], epsilon: f64) -> Vec<Point> {
    let n = points.len();
    if n < 3 {
        return points.to_vec();
    }
    let (mut i0, mut j0, mut best) = (0, 1, -1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = points[i].distance(points[j]);
            if d > best {
                best = d;
                i0 = i;
                j0 = j;
            }
        }
    }
    let mut keep = vec![false; n];
    keep[i0] = true;
    keep[j0] = true;
    simplify_range(points, i0, j0, epsilon, &mut keep);

    // Second arc j0 → n-1 → 0 → i0, unrolled into a contiguous buffer.
    let arc: Vec<Point> = (j0..n).chain(0..=i0).map(|k| points[k]).collect();
    let mut arc_keep = vec![false; arc.len()];
    simplify_range(&arc, 0, arc.len() - 1, epsilon, &mut arc_keep);
    for (k, kept) in arc_keep.into_iter().enumerate() {
        if kept {
            keep[(j0 + k) % n] = true;
        }
    }
    select(points, &keep)
}

fn select(points: &[Point], keep: &[bool]) -> Vec<Point> {
    points.iter().zip(keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect()
}
