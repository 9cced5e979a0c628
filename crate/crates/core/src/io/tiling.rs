use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::types::{AnnotatedImage, InstanceMap};

pub const DEFAULT_TILE_SIZE: u32 = 256;
/// Overlap for training tiles; test tiles use none.
pub const DEFAULT_TILE_OVERLAP: u32 = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub origin: (u32, u32),
    pub image: AnnotatedImage,
    /// Child instance id to parent instance id.
    pub remap: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSet {
    pub parent: String,
    pub parent_size: (u32, u32),
    pub size: u32,
    pub overlap: u32,
    /// Row-major over origins.
    pub tiles: Vec<Tile>,
}

/// Tile origins along one axis: multiples of `size - overlap`, with the last
/// origin clamped so the tile ends at the border. A dimension smaller than
/// `size` gets a single origin at 0.
pub fn tile_origins(dim: u32, size: u32, overlap: u32) -> Vec<u32> {
    let stride = size - overlap;
    if dim <= size {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut o = 0;
    while o + size < dim {
        out.push(o);
        o += stride;
    }
    out.push(dim - size);
    out
}

/// Cuts `img` into `size × size` tiles overlapping by `overlap` pixels.
/// Instances are clipped, never dropped; child ids are renumbered from 1 in
/// ascending parent-id order and classes are inherited. Empty tiles are kept.
pub fn tile_image(img: &AnnotatedImage, size: u32, overlap: u32) -> Result<TileSet, IoError> {
    if size == 0 {
        return Err(IoError::InvalidTiling("tile size must be at least 1".into()));
    }
    if overlap >= size {
        return Err(IoError::InvalidTiling(format!(
            "overlap {overlap} must be smaller than tile size {size}"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut tiles = Vec::new();
    for &oy in &tile_origins(h, size, overlap) {
        for &ox in &tile_origins(w, size, overlap) {
            let (tw, th) = (size.min(w), size.min(h));
            let mut parent_ids = std::collections::BTreeSet::new();
            for y in 0..th {
                for x in 0..tw {
                    let id = img.instance_map.get(ox + x, oy + y);
                    if id != 0 {
                        parent_ids.insert(id);
                    }
                }
            }
            let to_child: BTreeMap<u32, u32> = parent_ids.iter().enumerate().map(|(i, &p)| (p, i as u32 + 1)).collect();
            let mut map = InstanceMap::new(tw, th);
            for y in 0..th {
                for x in 0..tw {
                    let id = img.instance_map.get(ox + x, oy + y);
                    if id != 0 {
                        map.set(x, y, to_child[&id]);
                    }
                }
            }
            let classes = to_child
                .iter()
                .filter_map(|(p, &c)| img.classes.get(p).map(|&k| (c, k)))
                .collect();
            let mut tile_img = AnnotatedImage::new(format!("{}@{ox}_{oy}", img.image_id), map, classes);
            tile_img.metadata = img.metadata.clone();
            let remap: BTreeMap<u32, u32> = to_child.iter().map(|(&p, &c)| (c, p)).collect();
            tile_img.metadata.insert("tile.parent".into(), img.image_id.clone());
            tile_img.metadata.insert("tile.origin".into(), format!("{ox},{oy}"));
            tile_img.metadata.insert(
                "tile.remap".into(),
                remap
                    .iter()
                    .map(|(c, p)| format!("{c}:{p}"))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            tiles.push(Tile {
                origin: (ox, oy),
                image: tile_img,
                remap,
            });
        }
    }
    Ok(TileSet {
        parent: img.image_id.clone(),
        parent_size: (w, h),
        size,
        overlap,
        tiles,
    })
}

/// Reassembles the parent image. Overlapping tiles must agree after
/// remapping.
pub fn stitch_tiles(set: &TileSet) -> Result<AnnotatedImage, IoError> {
    let (w, h) = set.parent_size;
    let mut map = InstanceMap::new(w, h);
    let mut seen = vec![false; w as usize * h as usize];
    let mut classes = BTreeMap::new();
    for t in &set.tiles {
        let (ox, oy) = t.origin;
        let m = &t.image.instance_map;
        if ox + m.width() > w || oy + m.height() > h {
            return Err(IoError::InvalidTiling(format!(
                "tile at ({ox},{oy}) exceeds the parent"
            )));
        }
        for ((x, y), child) in m.iter() {
            let parent = match child {
                0 => 0,
                c => *t
                    .remap
                    .get(&c)
                    .ok_or_else(|| IoError::InvalidTiling(format!("child id {c} missing from remap")))?,
            };
            let (px, py) = (ox + x as u32, oy + y as u32);
            let i = (py * w + px) as usize;
            if seen[i] && map.get(px, py) != parent {
                return Err(IoError::InvalidTiling(format!("tiles disagree at ({px},{py})")));
            }
            seen[i] = true;
            map.set(px, py, parent);
        }
        for (c, k) in &t.image.classes {
            classes.insert(t.remap[c], *k);
        }
    }
    Ok(AnnotatedImage::new(set.parent.clone(), map, classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ClassId;

    fn image(w: u32, h: u32) -> AnnotatedImage {
        let mut m = InstanceMap::new(w, h);
        let mut classes = BTreeMap::new();
        let mut id = 0;
        for y0 in (3..h.saturating_sub(20)).step_by(37) {
            for x0 in (5..w.saturating_sub(20)).step_by(41) {
                id += 1;
                for y in y0..y0 + 20 {
                    for x in x0..x0 + 20 {
                        m.set(x, y, id);
                    }
                }
                classes.insert(id, ClassId(1 + (id % 3) as u16));
            }
        }
        AnnotatedImage::new("p", m, classes)
    }

    #[test]
    fn origins() {
        assert_eq!(tile_origins(512, 256, 0), vec![0, 256]);
        assert_eq!(tile_origins(512, 256, 128), vec![0, 128, 256]);
        assert_eq!(tile_origins(300, 256, 0), vec![0, 44]);
        assert_eq!(tile_origins(100, 256, 0), vec![0]);
        assert_eq!(tile_origins(256, 256, 0), vec![0]);
    }

    #[test]
    fn tile_counts() {
        let img = image(512, 512);
        assert_eq!(tile_image(&img, 256, 0).unwrap().tiles.len(), 4);
        assert_eq!(tile_image(&img, 256, 128).unwrap().tiles.len(), 9);
        let t = tile_image(&image(300, 300), 256, 0).unwrap();
        let origins: Vec<_> = t.tiles.iter().map(|t| t.origin).collect();
        assert_eq!(origins, vec![(0, 0), (44, 0), (0, 44), (44, 44)]);
        assert!(matches!(tile_image(&img, 256, 256), Err(IoError::InvalidTiling(_))));
    }

    #[test]
    fn small_image_single_truncated_tile() {
        let t = tile_image(&image(100, 60), 256, 0).unwrap();
        assert_eq!(t.tiles.len(), 1);
        assert_eq!((t.tiles[0].image.width(), t.tiles[0].image.height()), (100, 60));
    }

    #[test]
    fn stitch_is_identity() {
        let img = image(300, 280);
        for v in [0, 100] {
            let t = tile_image(&img, 128, v).unwrap();
            let mut back = stitch_tiles(&t).unwrap();
            back.metadata = img.metadata.clone();
            assert_eq!(back, img);
        }
    }

    #[test]
    fn child_ids_are_dense() {
        let t = tile_image(&image(300, 280), 128, 0).unwrap();
        for tile in &t.tiles {
            let ids: Vec<u32> = tile.image.instance_map.ids().into_iter().collect();
            assert_eq!(ids, (1..=ids.len() as u32).collect::<Vec<_>>());
            assert_eq!(tile.remap.len(), ids.len());
            assert_eq!(tile.image.classes.len(), ids.len());
        }
    }
}
