use std::collections::VecDeque;

use super::{signed_area, Pixel, PixelSet, Point};

const NEIGHBORS_8: [Pixel; 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

/// 8-connected components, each as a pixel set, in order of their smallest pixel.
pub fn components_8(pixels: &PixelSet) -> Vec<PixelSet> {
    let mut seen = PixelSet::new();
    let mut out = Vec::new();
    for &start in pixels {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = PixelSet::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(p) = queue.pop_front() {
            comp.insert(p);
            for (dx, dy) in NEIGHBORS_8 {
                let q = (p.0 + dx, p.1 + dy);
                if pixels.contains(&q) && seen.insert(q) {
                    queue.push_back(q);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Pixels of `pixels` with at least one 8-neighbor outside the set.
pub fn boundary(pixels: &PixelSet) -> PixelSet {
    pixels
        .iter()
        .copied()
        .filter(|&(x, y)| NEIGHBORS_8.iter().any(|&(dx, dy)| !pixels.contains(&(x + dx, y + dy))))
        .collect()
}

/// Arithmetic mean of pixel coordinates.
///
/// Returns `None` for an empty set.
pub fn centroid(pixels: &PixelSet) -> Option<(f64, f64)> {
    if pixels.is_empty() {
        return None;
    }
    let (sx, sy) = pixels
        .iter()
        .fold((0i64, 0i64), |(sx, sy), &(x, y)| (sx + x as i64, sy + y as i64));
    let n = pixels.len() as f64;
    Some((sx as f64 / n, sy as f64 / n))
}

/// Ordered outer boundary of the largest 8-connected component.
///
/// Moore-neighbour tracing with Jacob's stopping criterion. The result is
/// oriented counterclockwise (positive shoelace area in `(x, y)`), and a
/// pixel on a one-pixel-wide spur appears once per visit. Ties between
/// equally large components go to the one holding the smallest pixel.
pub fn trace_contour(pixels: &PixelSet) -> Vec<Pixel> {
    let comps = components_8(pixels);
    let Some(comp) = comps.into_iter().fold(None::<PixelSet>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    }) else {
        return Vec::new();
    };

    let start = *comp.iter().min_by_key(|&&(x, y)| (y, x)).expect("nonempty component");
    // West of the top-left pixel is never a member.
    let mut backtrack = 4usize;
    let mut current = start;
    let mut path = vec![start];
    let mut first_move: Option<(Pixel, Pixel)> = None;

    loop {
        let mut next = None;
        for k in 1..=8 {
            let d = (backtrack + k) % 8;
            let cand = (current.0 + NEIGHBORS_8[d].0, current.1 + NEIGHBORS_8[d].1);
            if comp.contains(&cand) {
                let prev = (backtrack + k - 1) % 8;
                let empty = (current.0 + NEIGHBORS_8[prev].0, current.1 + NEIGHBORS_8[prev].1);
                let rel = (empty.0 - cand.0, empty.1 - cand.1);
                let nb = NEIGHBORS_8
                    .iter()
                    .position(|&o| o == rel)
                    .expect("adjacent Moore cells");
                next = Some((cand, nb));
                break;
            }
        }
        let Some((n, nb)) = next else {
            // isolated pixel
            return path;
        };
        match first_move {
            None => first_move = Some((current, n)),
            Some(m) if m == (current, n) => break,
            _ => {}
        }
        path.push(n);
        current = n;
        backtrack = nb;
    }
    // The loop re-enters the start pixel before detecting the repeated move.
    if path.len() > 1 && path.last() == Some(&start) {
        path.pop();
    }

    let pts: Vec<Point> = path.iter().copied().map(Point::from).collect();
    if signed_area(&pts) < 0.0 {
        path[1..].reverse();
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(x0: i32, y0: i32, w: i32, h: i32) -> PixelSet {
        (x0..x0 + w).flat_map(|x| (y0..y0 + h).map(move |y| (x, y))).collect()
    }

    #[test]
    fn single_pixel_contour() {
        assert_eq!(trace_contour(&PixelSet::from([(3, 4)])), vec![(3, 4)]);
    }

    #[test]
    fn square_contour_skips_center() {
        let c = trace_contour(&block(0, 0, 3, 3));
        assert_eq!(c.len(), 8);
        assert!(!c.contains(&(1, 1)));
        let unique: PixelSet = c.iter().copied().collect();
        assert_eq!(unique.len(), 8);
        let pts: Vec<Point> = c.iter().copied().map(Point::from).collect();
        assert!(signed_area(&pts) > 0.0);
    }

    #[test]
    fn contour_is_consecutive_8_adjacent() {
        let mut set = block(0, 0, 6, 4);
        set.extend(block(2, 4, 2, 3));
        let c = trace_contour(&set);
        for w in c.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!((a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1 && a != b);
        }
        for p in &c {
            assert!(set.contains(p));
        }
        assert!(c.iter().copied().collect::<PixelSet>().is_subset(&boundary(&set)));
    }

    #[test]
    fn only_the_larger_component_is_traced() {
        let mut set = PixelSet::from([(0, 0), (1, 0), (2, 0), (1, 1), (1, 2)]);
        set.extend([(10, 10), (11, 10)]);
        let c = trace_contour(&set);
        assert!(c.iter().all(|p| p.0 < 5));
        assert_eq!(c.iter().copied().collect::<PixelSet>().len(), 5);
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&PixelSet::from([(0, 0)])), Some((0.0, 0.0)));
        assert_eq!(centroid(&block(0, 0, 2, 2)), Some((0.5, 0.5)));
        let (cx, cy) = centroid(&PixelSet::from([(0, 0), (1, 0), (0, 1)])).unwrap();
        assert!((cx - 1.0 / 3.0).abs() < 1e-15 && (cy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(centroid(&PixelSet::new()), None);
    }

    #[test]
    fn boundary_of_square() {
        let b = boundary(&block(0, 0, 4, 4));
        assert_eq!(b.len(), 12);
    }
}
