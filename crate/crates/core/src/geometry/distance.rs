use super::{boundary, GeometryError, PixelSet};

/// Intersection over union; 0 when both sets are empty.
pub fn iou(a: &PixelSet, b: &PixelSet) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let inter = small.iter().filter(|p| large.contains(p)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn directed_sq(from: &[(i64, i64)], to: &[(i64, i64)]) -> i64 {
    from.iter()
        .map(|&(x, y)| {
            to.iter()
                .map(|&(u, v)| (x - u).pow(2) + (y - v).pow(2))
                .min()
                .unwrap_or(i64::MAX)
        })
        .max()
        .unwrap_or(0)
}

/// Symmetric Hausdorff distance between the boundaries of two masks.
///
/// Boundaries are the pixels 8-adjacent to a non-member; distances are
/// Euclidean between pixel centers.
pub fn hausdorff(a: &PixelSet, b: &PixelSet) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::EmptyInput);
    }
    let to_vec =
        |s: &PixelSet| -> Vec<(i64, i64)> { boundary(s).into_iter().map(|(x, y)| (x as i64, y as i64)).collect() };
    let (ba, bb) = (to_vec(a), to_vec(b));
    let d = directed_sq(&ba, &bb).max(directed_sq(&bb, &ba));
    Ok((d as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(x0: i32, y0: i32, w: i32, h: i32) -> PixelSet {
        (x0..x0 + w).flat_map(|x| (y0..y0 + h).map(move |y| (x, y))).collect()
    }

    #[test]
    fn iou_cases() {
        let a = block(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &block(20, 0, 3, 3)), 0.0);
        assert_eq!(iou(&a, &block(5, 0, 10, 10)), 50.0 / 150.0);
        assert_eq!(iou(&PixelSet::new(), &PixelSet::new()), 0.0);
    }

    #[test]
    fn hausdorff_cases() {
        let a = block(0, 0, 10, 10);
        assert_eq!(hausdorff(&a, &a), Ok(0.0));
        assert_eq!(hausdorff(&a, &block(5, 0, 10, 10)), Ok(5.0));
        assert_eq!(hausdorff(&PixelSet::from([(0, 0)]), &PixelSet::from([(3, 4)])), Ok(5.0));
        assert_eq!(hausdorff(&a, &PixelSet::new()), Err(GeometryError::EmptyInput));
    }
}
