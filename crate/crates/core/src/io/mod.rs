//! On-disk formats: mask containers, manifests, tiles, sampling weights and
//! metric reports.

mod container;
mod manifest;
mod report;
mod tiling;
mod weights;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use container::{
    read_container, read_prediction_container, write_container, write_prediction_container, MaskContainer,
    CONTAINER_VERSION, MAGIC, OTHER_CODE,
};
pub use manifest::{
    container_file_name, load_dataset, load_predictions, read_manifest, write_dataset, write_manifest,
    write_predictions,
};
pub use report::{class_label, format_value, render_report_csv, render_report_json, write_report};
pub use tiling::{stitch_tiles, tile_image, tile_origins, Tile, TileSet, DEFAULT_TILE_OVERLAP, DEFAULT_TILE_SIZE};
pub use weights::sampling_weights;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<IoError>,
    },
    #[error("not a mask container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:08x}, computed {actual:08x}")]
    Checksum { stored: u32, actual: u32 },
    #[error("truncated container: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("inconsistent planes: {0}")]
    InconsistentPlanes(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("unsupported manifest schema version {0}")]
    SchemaVersion(u32),
    #[error("invalid tiling: {0}")]
    InvalidTiling(String),
}

impl IoError {
    pub(crate) fn at(self, path: &Path) -> IoError {
        match self {
            e @ (IoError::Io { .. } | IoError::InFile { .. }) => e,
            e => IoError::InFile {
                path: path.to_owned(),
                source: Box::new(e),
            },
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let io = |source| IoError::Io {
        path: path.to_owned(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
