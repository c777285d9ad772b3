//! File formats: Slicer-style markup JSON, measurement tables, an NRRD
//! subset, P5 graymap slides with JSON sidecars, 4x4 transform text files
//! and case manifests.

mod case;
mod manifest;
mod markups;
mod measurements;
mod nrrd;
mod slide;
mod transform;

pub use case::{write_case, CaseFiles};
pub use manifest::{load_manifest, CaseManifest, InputRef, VolumeInputs};
pub use markups::{
    markups_to_string, parse_markups, parse_markups_declared, read_markups, read_markups_declared,
    write_markups, CoordinateSystem, MarkupSet,
};
pub use measurements::{
    measurements_to_string, parse_measurements, read_measurements, write_measurements,
    MeasurementTable,
};
pub use nrrd::{decode_volume, encode_volume, read_volume, write_volume};
pub use slide::{read_slide, read_slide_declared, sidecar_path, write_slide};
pub use transform::{parse_transform, read_transform, transform_to_string, write_transform};

use std::path::Path;

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::histology::HistologyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown coordinate system `{0}`")]
    UnknownCoordinateSystem(String),
    #[error("markup `{0}` has no control points")]
    EmptyMarkup(String),
    #[error("duplicate measurement index {0}")]
    DuplicateIndex(u32),
    #[error("negative distance on measurement {0}")]
    NegativeDistance(u32),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("missing entry `{0}`")]
    Missing(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Histology(#[from] HistologyError),
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| file_error(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| file_error(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| file_error(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| file_error(path, e))
}

pub(crate) fn file_error(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub(crate) fn parse_error(e: impl std::fmt::Display) -> IoError {
    IoError::Parse(e.to_string())
}
