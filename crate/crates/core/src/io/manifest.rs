use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::container::{read_container, read_prediction_container, write_container, write_prediction_container};
use super::{read_file, write_atomic, IoError};
use crate::evaluation::PredictedImage;
use crate::types::{Dataset, DatasetManifest, ManifestEntry, Provenance, MANIFEST_SCHEMA_VERSION};

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, IoError> {
    let bytes = read_file(path)?;
    let m: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| IoError::Manifest(e.to_string()).at(path))?;
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(IoError::SchemaVersion(m.schema_version).at(path));
    }
    Ok(m)
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| IoError::Manifest(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().map(Path::to_owned).unwrap_or_default()
}

/// `images/{index}_{id}.snwb`, with characters outside `[A-Za-z0-9._-]`
/// replaced so any image id gives a portable file name.
pub fn container_file_name(index: usize, image_id: &str) -> PathBuf {
    let safe: String = image_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    PathBuf::from("images").join(format!("{index:05}_{safe}.snwb"))
}

/// Writes one container per image next to the manifest, then the manifest.
/// `weights`, when given, holds one sampling weight per image.
pub fn write_dataset(
    manifest_path: &Path,
    dataset: &Dataset,
    provenance: Option<Provenance>,
    weights: Option<&[f64]>,
) -> Result<DatasetManifest, IoError> {
    let dir = base_dir(manifest_path);
    if let Some(w) = weights {
        if w.len() != dataset.images.len() {
            return Err(IoError::Manifest(format!(
                "{} weights for {} images",
                w.len(),
                dataset.images.len()
            )));
        }
    }
    let entries = dataset
        .images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let rel = container_file_name(i, &img.image_id);
            write_container(&dir.join(&rel), img)?;
            Ok(ManifestEntry {
                image_id: img.image_id.clone(),
                container: rel,
                metadata: img.metadata.clone(),
                sampling_weight: weights.map(|w| w[i]),
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        name: dataset.name.clone(),
        class_names: dataset.class_names.clone(),
        images: entries,
        provenance,
    };
    write_manifest(manifest_path, &manifest)?;
    Ok(manifest)
}

fn check_unique(manifest: &DatasetManifest) -> Result<(), IoError> {
    let mut seen = std::collections::BTreeSet::new();
    for e in &manifest.images {
        if !seen.insert(e.image_id.as_str()) {
            return Err(IoError::Manifest(format!("duplicate image id {}", e.image_id)));
        }
    }
    Ok(())
}

/// Loads every container listed by the manifest, resolving paths against
/// the manifest's directory.
pub fn load_dataset(manifest_path: &Path) -> Result<(DatasetManifest, Dataset), IoError> {
    let manifest = read_manifest(manifest_path)?;
    check_unique(&manifest).map_err(|e| e.at(manifest_path))?;
    let dir = base_dir(manifest_path);
    let images = manifest
        .images
        .par_iter()
        .map(|e| {
            let mut img = read_container(&dir.join(&e.container), &e.image_id)?;
            img.metadata = e.metadata.clone();
            Ok(img)
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let ds = Dataset {
        name: manifest.name.clone(),
        class_names: manifest.class_names.clone(),
        images,
    };
    Ok((manifest, ds))
}

pub fn write_predictions(
    manifest_path: &Path,
    name: &str,
    class_names: &[String],
    predictions: &[PredictedImage],
) -> Result<DatasetManifest, IoError> {
    let dir = base_dir(manifest_path);
    let entries = predictions
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let rel = container_file_name(i, &p.image_id);
            write_prediction_container(&dir.join(&rel), p)?;
            Ok(ManifestEntry {
                image_id: p.image_id.clone(),
                container: rel,
                metadata: Default::default(),
                sampling_weight: None,
            })
        })
        .collect::<Result<Vec<_>, IoError>>()?;
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        name: name.to_owned(),
        class_names: class_names.to_vec(),
        images: entries,
        provenance: None,
    };
    write_manifest(manifest_path, &manifest)?;
    Ok(manifest)
}

pub fn load_predictions(manifest_path: &Path) -> Result<(DatasetManifest, Vec<PredictedImage>), IoError> {
    let manifest = read_manifest(manifest_path)?;
    check_unique(&manifest).map_err(|e| e.at(manifest_path))?;
    let dir = base_dir(manifest_path);
    let preds = manifest
        .images
        .par_iter()
        .map(|e| read_prediction_container(&dir.join(&e.container), &e.image_id))
        .collect::<Result<Vec<_>, IoError>>()?;
    Ok((manifest, preds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AnnotatedImage, ClassId, InstanceMap, PredictedClass};

    fn dataset() -> Dataset {
        let mut images = Vec::new();
        for k in 0..3u32 {
            let mut m = InstanceMap::new(6, 4);
            m.set(k, 1, 1);
            m.set(k + 1, 1, 2);
            let mut img = AnnotatedImage::new(format!("slide {k}/a"), m, [(1, ClassId(1)), (2, ClassId(2))].into());
            img.metadata.insert("patient".into(), format!("p{k}"));
            images.push(img);
        }
        Dataset {
            name: "toy".into(),
            class_names: vec!["E".into(), "L".into()],
            images,
        }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/manifest.json");
        let ds = dataset();
        let m = write_dataset(&path, &ds, None, Some(&[1.0, 2.0, 0.5])).unwrap();
        assert_eq!(m.images[0].container, PathBuf::from("images/00000_slide_0_a.snwb"));
        let (m2, back) = load_dataset(&path).unwrap();
        assert_eq!(m2, m);
        assert_eq!(back, ds);
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.json");
        let mut preds: Vec<_> = dataset().images.iter().map(PredictedImage::from_annotation).collect();
        preds[1].classes.insert(2, PredictedClass::Other);
        write_predictions(&path, "p", &["E".into(), "L".into()], &preds).unwrap();
        assert_eq!(load_predictions(&path).unwrap().1, preds);
    }

    #[test]
    fn bad_schema_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = write_dataset(&path, &dataset(), None, None).unwrap();
        let mut bad = m.clone();
        bad.schema_version = 9;
        write_manifest(&path, &bad).unwrap();
        assert!(load_dataset(&path)
            .unwrap_err()
            .to_string()
            .contains("schema version 9"));
        write_manifest(&path, &m).unwrap();
        std::fs::remove_file(dir.path().join(&m.images[1].container)).unwrap();
        assert!(matches!(load_dataset(&path), Err(IoError::Io { .. })));
    }
}
