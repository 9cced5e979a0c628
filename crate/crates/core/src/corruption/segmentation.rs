use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::log::{DistortionOutcome, EllipseSource, LogRecord};
use crate::geometry::{
    border_counts, douglas_peucker_closed, fit_ellipse, rasterize_polygon, sample_ellipse, smooth_mask, trace_contour,
    EllipseParams, PixelSet, Point, Polygon,
};
use crate::types::{AnnotatedImage, Dataset, SegmentationNoise};

/// What happened to one instance during contour distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionSummary {
    pub id: u32,
    pub source: EllipseSource,
    /// Fitted ellipse after scaling.
    pub ellipse: EllipseParams,
    /// Simplified polygon; `None` when simplification left fewer than 3 vertices.
    pub polygon: Option<Polygon>,
    pub outcome: DistortionOutcome,
    pub pixels_before: u64,
    pub pixels_after: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeSummary {
    pub kept: u32,
    pub absorbed: u32,
    pub shared_border: u64,
    /// Background pixels claimed by smoothing the merged mask.
    pub pixels_added: u64,
}

/// Axis-aligned ellipse spanning the pixel extents of `pixels`.
fn extent_ellipse(pixels: &PixelSet) -> EllipseParams {
    let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for &(x, y) in pixels {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    EllipseParams::new(
        (x0 + x1) as f64 / 2.0,
        (y0 + y1) as f64 / 2.0,
        (x1 - x0 + 1) as f64 / 2.0,
        (y1 - y0 + 1) as f64 / 2.0,
        0.0,
    )
}

fn fit_instance(pixels: &PixelSet) -> (EllipseSource, EllipseParams) {
    let contour: Vec<Point> = trace_contour(pixels).into_iter().map(Point::from).collect();
    match fit_ellipse(&contour) {
        Ok(e) if [e.cx, e.cy, e.a, e.b].iter().all(|v| v.is_finite()) => (EllipseSource::Direct, e),
        _ => (EllipseSource::ExtentFallback, extent_ellipse(pixels)),
    }
}

/// Replaces instance masks by rasterized polygons.
///
/// A polygon may claim the instance's own pixels and original background.
/// Background pixels claimed by more than one polygon stay background, so
/// instances never overwrite each other. An instance whose polygon is
/// missing or leaves it empty keeps its original mask.
pub(crate) fn apply_polygons(
    img: &AnnotatedImage,
    polygons: &BTreeMap<u32, Option<Polygon>>,
) -> (AnnotatedImage, BTreeMap<u32, (DistortionOutcome, u64, u64)>) {
    let (w, h) = (img.width(), img.height());
    let map = &img.instance_map;
    let originals = map.pixel_sets();

    let rasters: BTreeMap<u32, PixelSet> = polygons
        .iter()
        .filter_map(|(&id, p)| p.as_ref().map(|p| (id, rasterize_polygon(p, w, h))))
        .collect();
    let mut claims: BTreeMap<(i32, i32), u32> = BTreeMap::new();
    for raster in rasters.values() {
        for &p in raster {
            if map.at(p) == Some(0) {
                *claims.entry(p).or_insert(0) += 1;
            }
        }
    }

    let mut out = img.clone();
    let mut outcomes = BTreeMap::new();
    for (&id, _) in polygons {
        let before = originals.get(&id).map_or(0, |s| s.len() as u64);
        let new: PixelSet = rasters
            .get(&id)
            .map(|r| {
                r.iter()
                    .copied()
                    .filter(|&p| match map.at(p) {
                        Some(0) => claims.get(&p) == Some(&1),
                        Some(v) => v == id,
                        None => false,
                    })
                    .collect()
            })
            .unwrap_or_default();
        if new.is_empty() {
            outcomes.insert(id, (DistortionOutcome::KeptOriginal, before, before));
            continue;
        }
        if let Some(orig) = originals.get(&id) {
            for &p in orig.difference(&new) {
                out.instance_map.set_pixel(p, 0);
            }
        }
        for &p in &new {
            out.instance_map.set_pixel(p, id);
        }
        outcomes.insert(id, (DistortionOutcome::Replaced, before, new.len() as u64));
    }
    (out, outcomes)
}

/// Replaces every instance contour by a Douglas-Peucker simplification of its
/// fitted (and scaled) ellipse. Classes are unchanged.
pub fn distort_contours(img: &AnnotatedImage, params: &SegmentationNoise) -> (AnnotatedImage, Vec<DistortionSummary>) {
    let mut fits = Vec::new();
    let mut polygons = BTreeMap::new();
    for (id, pixels) in img.instance_map.pixel_sets() {
        let (source, ellipse) = fit_instance(&pixels);
        let ellipse = ellipse.scaled(params.ellipse_scale);
        let ring = sample_ellipse(&ellipse, params.ellipse_samples);
        let polygon = Polygon::new(douglas_peucker_closed(ring.vertices(), params.epsilon_px)).ok();
        polygons.insert(id, polygon);
        fits.push((id, source, ellipse));
    }
    let (out, outcomes) = apply_polygons(img, &polygons);
    let summaries = fits
        .into_iter()
        .map(|(id, source, ellipse)| {
            let (outcome, before, after) = outcomes[&id];
            DistortionSummary {
                id,
                source,
                ellipse,
                polygon: polygons.remove(&id).flatten(),
                outcome,
                pixels_before: before,
                pixels_after: after,
            }
        })
        .collect();
    (out, summaries)
}

/// Merges `absorbed` into `kept` and smooths the merged mask. Smoothing only
/// claims in-bounds background pixels.
pub(crate) fn merge_pair(img: &mut AnnotatedImage, kept: u32, absorbed: u32, radius: u32) -> u64 {
    img.instance_map.remap(|v| if v == absorbed { kept } else { v });
    img.classes.remove(&absorbed);
    let merged = img.instance_map.pixel_set(kept);
    let closed = smooth_mask(&merged, radius);
    let mut added = 0;
    for &p in closed.difference(&merged) {
        if img.instance_map.at(p) == Some(0) {
            img.instance_map.set_pixel(p, kept);
            added += 1;
        }
    }
    added
}

/// Merges touching same-class pairs, largest shared border first (ties by
/// id pair); each instance takes part in at most one merge and the smaller
/// id survives.
pub fn merge_adjacent(img: &AnnotatedImage, smooth_radius: u32) -> (AnnotatedImage, Vec<MergeSummary>) {
    let mut candidates: Vec<((u32, u32), u64)> = border_counts(&img.instance_map)
        .into_iter()
        .filter(|((a, b), _)| img.classes.get(a).is_some() && img.classes.get(a) == img.classes.get(b))
        .collect();
    candidates.sort_by(|(pa, ba), (pb, bb)| bb.cmp(ba).then(pa.cmp(pb)));

    let mut used = BTreeSet::new();
    let mut out = img.clone();
    let mut merges = Vec::new();
    for ((a, b), border) in candidates {
        if used.contains(&a) || used.contains(&b) {
            continue;
        }
        used.insert(a);
        used.insert(b);
        let added = merge_pair(&mut out, a, b, smooth_radius);
        merges.push(MergeSummary {
            kept: a,
            absorbed: b,
            shared_border: border,
            pixels_added: added,
        });
    }
    (out, merges)
}

pub(crate) fn distortion_record(image_id: &str, s: &DistortionSummary) -> LogRecord {
    LogRecord::Distorted {
        image_id: image_id.to_owned(),
        id: s.id,
        source: s.source,
        ellipse: s.ellipse,
        polygon: s.polygon.clone(),
        outcome: s.outcome,
        pixels_before: s.pixels_before,
        pixels_after: s.pixels_after,
    }
}

pub(crate) fn merge_record(image_id: &str, m: &MergeSummary) -> LogRecord {
    LogRecord::Merged {
        image_id: image_id.to_owned(),
        kept: m.kept,
        absorbed: m.absorbed,
        shared_border: m.shared_border,
        pixels_added: m.pixels_added,
    }
}

/// Distortion of every image, then merging when enabled.
pub(crate) fn apply_segmentation_noise(dataset: &Dataset, params: &SegmentationNoise) -> (Dataset, Vec<LogRecord>) {
    let results: Vec<(AnnotatedImage, Vec<LogRecord>)> = dataset
        .images
        .par_iter()
        .map(|img| {
            let (mut cur, summaries) = distort_contours(img, params);
            let mut records: Vec<LogRecord> = summaries.iter().map(|s| distortion_record(&img.image_id, s)).collect();
            if params.merge_enabled {
                let (merged, merges) = merge_adjacent(&cur, params.smooth_radius_px);
                cur = merged;
                records.extend(merges.iter().map(|m| merge_record(&img.image_id, m)));
            }
            (cur, records)
        })
        .collect();

    // Distortion records of all images first, then merges, matching stage order.
    let mut images = Vec::with_capacity(results.len());
    let (mut distortions, mut merges) = (Vec::new(), Vec::new());
    for (img, records) in results {
        images.push(img);
        for r in records {
            match r {
                LogRecord::Merged { .. } => merges.push(r),
                _ => distortions.push(r),
            }
        }
    }
    distortions.extend(merges);
    (
        Dataset {
            images,
            ..dataset.clone()
        },
        distortions,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou;
    use crate::types::{ClassId, InstanceMap};

    fn image_from_sets(w: u32, h: u32, sets: &[(u32, u16, PixelSet)]) -> AnnotatedImage {
        let mut map = InstanceMap::new(w, h);
        let mut classes = BTreeMap::new();
        for (id, class, set) in sets {
            for &p in set {
                map.set_pixel(p, *id);
            }
            classes.insert(*id, ClassId(*class));
        }
        AnnotatedImage::new("t", map, classes)
    }

    fn disk(cx: i32, cy: i32, r: i32) -> PixelSet {
        let mut s = PixelSet::new();
        for y in cy - r..=cy + r {
            for x in cx - r..=cx + r {
                if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                    s.insert((x, y));
                }
            }
        }
        s
    }

    fn block(x0: i32, y0: i32, w: i32, h: i32) -> PixelSet {
        (x0..x0 + w).flat_map(|x| (y0..y0 + h).map(move |y| (x, y))).collect()
    }

    #[test]
    fn disk_distortion_stays_close() {
        let d = disk(20, 20, 8);
        let img = image_from_sets(40, 40, &[(1, 1, d.clone())]);
        let params = SegmentationNoise {
            epsilon_px: 2.0,
            ..Default::default()
        };
        let (out, summaries) = distort_contours(&img, &params);
        let poly = summaries[0].polygon.as_ref().unwrap();
        assert!(poly.len() <= 12, "{} vertices", poly.len());
        assert_eq!(summaries[0].source, EllipseSource::Direct);
        let after = out.instance_map.pixel_set(1);
        assert!(iou(&d, &after) >= 0.7);
        assert_eq!(out.classes, img.classes);
    }

    #[test]
    fn tiny_instance_uses_extent_fallback() {
        let img = image_from_sets(10, 10, &[(4, 2, PixelSet::from([(3, 3), (4, 3), (5, 3)]))]);
        let (out, summaries) = distort_contours(&img, &SegmentationNoise::default());
        assert_eq!(summaries[0].source, EllipseSource::ExtentFallback);
        assert!(!out.instance_map.pixel_set(4).is_empty());
    }

    #[test]
    fn distortion_never_takes_neighbour_pixels() {
        let a = block(2, 2, 8, 8);
        let b = block(10, 2, 8, 8);
        let img = image_from_sets(24, 14, &[(1, 1, a.clone()), (2, 1, b.clone())]);
        let params = SegmentationNoise {
            epsilon_px: 0.0,
            ellipse_scale: 1.4,
            ..Default::default()
        };
        let (out, _) = distort_contours(&img, &params);
        for (p, v) in out.instance_map.iter() {
            if v == 1 {
                assert!(!b.contains(&p));
            }
            if v == 2 {
                assert!(!a.contains(&p));
            }
        }
    }

    fn chain() -> AnnotatedImage {
        // A: 10 rows tall touching B along 10 px; B touches C along 6 px.
        image_from_sets(
            30,
            12,
            &[
                (1, 1, block(0, 0, 5, 10)),
                (2, 1, block(5, 0, 5, 10)),
                (3, 1, block(10, 0, 5, 6)),
            ],
        )
    }

    #[test]
    fn greedy_merge_takes_largest_border() {
        let (out, merges) = merge_adjacent(&chain(), 0);
        assert_eq!(
            merges,
            vec![MergeSummary {
                kept: 1,
                absorbed: 2,
                shared_border: 10,
                pixels_added: 0
            }]
        );
        assert_eq!(out.classes.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(out.instance_map.pixel_set(1).len(), 100);
    }

    #[test]
    fn different_classes_never_merge() {
        let img = image_from_sets(20, 10, &[(1, 1, block(0, 0, 5, 5)), (2, 2, block(5, 0, 5, 5))]);
        let (out, merges) = merge_adjacent(&img, 2);
        assert!(merges.is_empty());
        assert_eq!(out, img);
    }

    #[test]
    fn no_touching_pairs_is_identity() {
        let img = image_from_sets(20, 10, &[(1, 1, block(0, 0, 4, 4)), (2, 1, block(6, 0, 4, 4))]);
        assert_eq!(merge_adjacent(&img, 3).0, img);
    }

    #[test]
    fn merge_smoothing_is_extensive() {
        let img = image_from_sets(
            20,
            12,
            &[
                (1, 1, block(2, 2, 4, 6)),
                (2, 1, block(6, 4, 4, 6)),
                (3, 2, block(12, 2, 3, 3)),
            ],
        );
        let fg_before = img.instance_map.as_slice().iter().filter(|&&v| v != 0).count();
        let (out, merges) = merge_adjacent(&img, 2);
        assert_eq!(merges.len(), 1);
        assert_eq!(out.instance_count(), img.instance_count() - 1);
        let fg_after = out.instance_map.as_slice().iter().filter(|&&v| v != 0).count();
        assert!(fg_after >= fg_before);
        assert!(merges[0].pixels_added > 0);
        assert_eq!(out.instance_map.pixel_set(3), block(12, 2, 3, 3));
    }
}
