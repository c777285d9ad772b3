use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{file_error, parse_error, read_text, CoordinateSystem, IoError};

/// A referenced input file with its declared coordinate system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InputRef {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate_system: Option<CoordinateSystem>,
}

impl InputRef {
    pub fn new(path: impl Into<PathBuf>, cs: CoordinateSystem) -> Self {
        Self {
            path: path.into(),
            coordinate_system: Some(cs),
        }
    }
}

/// The two CT halves with their paired fiducial picks (ordered lists).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VolumeInputs {
    pub fixed: PathBuf,
    pub moving: PathBuf,
    pub fiducials_fixed: InputRef,
    pub fiducials_moving: InputRef,
}

/// Inputs of one specimen bisection. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CaseManifest {
    pub specimen_id: String,
    #[serde(default)]
    pub bisection_id: String,
    pub markups: InputRef,
    pub curve_a: String,
    pub curve_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_edge: Option<String>,
    pub fiducial: String,
    pub measurements: PathBuf,
    #[serde(default)]
    pub slides: Vec<InputRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volumes: Option<VolumeInputs>,
    /// Second reading of the same curves, for sensitivity analysis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_markups: Option<InputRef>,
}

impl CaseManifest {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        let mut out = vec![&mut self.markups.path, &mut self.measurements];
        out.extend(self.slides.iter_mut().map(|s| &mut s.path));
        if let Some(v) = &mut self.volumes {
            out.extend([
                &mut v.fixed,
                &mut v.moving,
                &mut v.fiducials_fixed.path,
                &mut v.fiducials_moving.path,
            ]);
        }
        if let Some(v) = &mut self.variant_markups {
            out.push(&mut v.path);
        }
        out
    }
}

/// Loads a manifest, resolving paths and checking that every file exists.
pub fn load_manifest(path: &Path) -> Result<CaseManifest, IoError> {
    let mut m: CaseManifest = serde_json::from_str(&read_text(path)?).map_err(parse_error)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in m.paths_mut() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
        if !p.is_file() {
            return Err(file_error(p, "referenced file does not exist"));
        }
    }
    for s in &m.slides {
        let sidecar = super::sidecar_path(&s.path);
        if !sidecar.is_file() {
            return Err(file_error(&sidecar, "slide metadata does not exist"));
        }
    }
    Ok(m)
}
