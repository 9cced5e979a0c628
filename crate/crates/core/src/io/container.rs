use std::collections::BTreeMap;
use std::path::Path;

use super::{read_file, write_atomic, IoError};
use crate::evaluation::PredictedImage;
use crate::types::{AnnotatedImage, ClassId, InstanceMap, PredictedClass};

pub const MAGIC: [u8; 4] = *b"SNWB";
pub const CONTAINER_VERSION: u16 = 1;
/// Class-plane code of predictions labelled `Other`.
pub const OTHER_CODE: u16 = u16::MAX;

const HEADER_LEN: usize = 4 + 2 + 4 + 4;

/// Decoded mask file: an instance plane and the matching class plane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskContainer {
    pub width: u32,
    pub height: u32,
    pub instances: Vec<u32>,
    pub classes: Vec<u16>,
}

fn class_plane(map: &InstanceMap, class_of: impl Fn(u32) -> Result<u16, IoError>) -> Result<Vec<u16>, IoError> {
    let mut cache: BTreeMap<u32, u16> = BTreeMap::new();
    map.as_slice()
        .iter()
        .map(|&id| match id {
            0 => Ok(0),
            _ => match cache.get(&id) {
                Some(&c) => Ok(c),
                None => {
                    let c = class_of(id)?;
                    cache.insert(id, c);
                    Ok(c)
                }
            },
        })
        .collect()
}

fn check_keys<V>(map: &InstanceMap, classes: &BTreeMap<u32, V>) -> Result<(), IoError> {
    let ids = map.ids();
    if let Some(id) = classes.keys().find(|id| !ids.contains(id)) {
        return Err(IoError::InvalidImage(format!("class given for absent instance {id}")));
    }
    Ok(())
}

impl MaskContainer {
    pub fn from_annotation(img: &AnnotatedImage) -> Result<Self, IoError> {
        check_keys(&img.instance_map, &img.classes)?;
        let classes = class_plane(&img.instance_map, |id| match img.classes.get(&id) {
            Some(c) if !c.is_background() && c.0 != OTHER_CODE => Ok(c.0),
            Some(c) => Err(IoError::InvalidImage(format!("instance {id} has reserved class {c}"))),
            None => Err(IoError::InvalidImage(format!("instance {id} has no class"))),
        })?;
        Ok(Self {
            width: img.width(),
            height: img.height(),
            instances: img.instance_map.as_slice().to_vec(),
            classes,
        })
    }

    pub fn from_prediction(img: &PredictedImage) -> Result<Self, IoError> {
        check_keys(&img.instance_map, &img.classes)?;
        let classes = class_plane(&img.instance_map, |id| match img.classes.get(&id) {
            Some(PredictedClass::Other) => Ok(OTHER_CODE),
            Some(PredictedClass::Class(c)) if !c.is_background() && c.0 != OTHER_CODE => Ok(c.0),
            Some(PredictedClass::Class(c)) => {
                Err(IoError::InvalidImage(format!("instance {id} has reserved class {c}")))
            }
            None => Err(IoError::InvalidImage(format!("instance {id} has no class"))),
        })?;
        Ok(Self {
            width: img.instance_map.width(),
            height: img.instance_map.height(),
            instances: img.instance_map.as_slice().to_vec(),
            classes,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.instances.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 6 * n + 4);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        for v in &self.instances {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.classes {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses and checks magic, version, length and checksum. Plane
    /// consistency is checked on conversion.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IoError> {
        if bytes.len() < HEADER_LEN + 4 {
            return Err(IoError::Truncated {
                expected: HEADER_LEN + 4,
                actual: bytes.len(),
            });
        }
        if bytes[..4] != MAGIC {
            return Err(IoError::BadMagic);
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
        let version = u16_at(4);
        if version != CONTAINER_VERSION {
            return Err(IoError::UnsupportedVersion(version));
        }
        let (width, height) = (u32_at(6), u32_at(10));
        let n = width as usize * height as usize;
        let expected = HEADER_LEN + 6 * n + 4;
        if bytes.len() != expected {
            return Err(IoError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        let body = &bytes[..expected - 4];
        let stored = u32_at(expected - 4);
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(IoError::Checksum { stored, actual });
        }
        let instances = (0..n).map(|i| u32_at(HEADER_LEN + 4 * i)).collect();
        let classes = (0..n).map(|i| u16_at(HEADER_LEN + 4 * n + 2 * i)).collect();
        Ok(Self {
            width,
            height,
            instances,
            classes,
        })
    }

    /// Class of every instance, checking that each instance carries a single
    /// nonzero class and background carries 0.
    fn assignment(&self) -> Result<BTreeMap<u32, u16>, IoError> {
        let mut out: BTreeMap<u32, u16> = BTreeMap::new();
        for (i, (&id, &c)) in self.instances.iter().zip(&self.classes).enumerate() {
            let at = || (i as u32 % self.width.max(1), i as u32 / self.width.max(1));
            match (id, c) {
                (0, 0) => {}
                (0, _) => {
                    return Err(IoError::InconsistentPlanes(format!(
                        "background pixel {:?} has class {c}",
                        at()
                    )))
                }
                (_, 0) => {
                    return Err(IoError::InconsistentPlanes(format!(
                        "instance {id} pixel {:?} has class 0",
                        at()
                    )))
                }
                _ => {
                    if let Some(&prev) = out.get(&id) {
                        if prev != c {
                            return Err(IoError::InconsistentPlanes(format!(
                                "instance {id} has classes {prev} and {c} (pixel {:?})",
                                at()
                            )));
                        }
                    } else {
                        out.insert(id, c);
                    }
                }
            }
        }
        Ok(out)
    }

    fn instance_map(&self) -> Result<InstanceMap, IoError> {
        InstanceMap::from_vec(self.width, self.height, self.instances.clone())
            .map_err(|e| IoError::InvalidImage(e.to_string()))
    }

    pub fn to_annotation(&self, image_id: &str) -> Result<AnnotatedImage, IoError> {
        let classes = self
            .assignment()?
            .into_iter()
            .map(|(id, c)| match c {
                OTHER_CODE => Err(IoError::InconsistentPlanes(format!(
                    "annotation instance {id} has class other"
                ))),
                c => Ok((id, ClassId(c))),
            })
            .collect::<Result<_, _>>()?;
        Ok(AnnotatedImage::new(image_id, self.instance_map()?, classes))
    }

    pub fn to_prediction(&self, image_id: &str) -> Result<PredictedImage, IoError> {
        let classes = self
            .assignment()?
            .into_iter()
            .map(|(id, c)| {
                let p = match c {
                    OTHER_CODE => PredictedClass::Other,
                    c => PredictedClass::Class(ClassId(c)),
                };
                (id, p)
            })
            .collect();
        Ok(PredictedImage::new(image_id, self.instance_map()?, classes))
    }
}

pub fn write_container(path: &Path, img: &AnnotatedImage) -> Result<(), IoError> {
    write_atomic(path, &MaskContainer::from_annotation(img)?.to_bytes())
}

/// Reads an annotation container; the image id comes from the manifest.
pub fn read_container(path: &Path, image_id: &str) -> Result<AnnotatedImage, IoError> {
    let bytes = read_file(path)?;
    MaskContainer::from_bytes(&bytes)
        .and_then(|c| c.to_annotation(image_id))
        .map_err(|e| e.at(path))
}

pub fn write_prediction_container(path: &Path, img: &PredictedImage) -> Result<(), IoError> {
    write_atomic(path, &MaskContainer::from_prediction(img)?.to_bytes())
}

pub fn read_prediction_container(path: &Path, image_id: &str) -> Result<PredictedImage, IoError> {
    let bytes = read_file(path)?;
    MaskContainer::from_bytes(&bytes)
        .and_then(|c| c.to_prediction(image_id))
        .map_err(|e| e.at(path))
}
