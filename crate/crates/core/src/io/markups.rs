use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{parse_error, read_text, write_bytes, IoError};
use crate::geometry::{FiducialReference, MarkupCurve, Point3};

/// Patient coordinate convention of a file. Internal coordinates are RAS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CoordinateSystem {
    #[default]
    #[serde(rename = "RAS")]
    Ras,
    #[serde(rename = "LPS")]
    Lps,
}

impl CoordinateSystem {
    /// Converts between this system and RAS (the map is its own inverse).
    pub fn convert(self, p: [f64; 3]) -> [f64; 3] {
        match self {
            CoordinateSystem::Ras => p,
            CoordinateSystem::Lps => [-p[0], -p[1], p[2]],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoordinateSystem::Ras => "RAS",
            CoordinateSystem::Lps => "LPS",
        }
    }
}

impl FromStr for CoordinateSystem {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, IoError> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RAS" => Ok(Self::Ras),
            "LPS" => Ok(Self::Lps),
            _ => Err(IoError::UnknownCoordinateSystem(s.to_string())),
        }
    }
}

/// Curves and fiducials of a markup document, in internal RAS millimetres.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkupSet {
    pub curves: Vec<MarkupCurve>,
    pub fiducials: Vec<FiducialReference>,
}

impl MarkupSet {
    pub fn curve(&self, label: &str) -> Result<&MarkupCurve, IoError> {
        self.curves
            .iter()
            .find(|c| c.label == label)
            .ok_or_else(|| IoError::Missing(format!("curve {label}")))
    }

    pub fn fiducial(&self, label: &str) -> Result<&FiducialReference, IoError> {
        self.fiducials
            .iter()
            .find(|f| f.label == label)
            .ok_or_else(|| IoError::Missing(format!("fiducial {label}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    #[serde(rename = "@schema", default, skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    markups: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Entry {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    coordinate_system: String,
    control_points: Vec<ControlPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ControlPoint {
    #[serde(default)]
    label: String,
    position: [f64; 3],
}

pub fn parse_markups(text: &str) -> Result<MarkupSet, IoError> {
    parse_markups_declared(text, None)
}

/// Like [`parse_markups`], additionally requiring every entry to use the
/// `declared` coordinate system when one is given.
pub fn parse_markups_declared(
    text: &str,
    declared: Option<CoordinateSystem>,
) -> Result<MarkupSet, IoError> {
    let doc: Document = serde_json::from_str(text).map_err(parse_error)?;
    let mut set = MarkupSet::default();
    for (n, entry) in doc.markups.into_iter().enumerate() {
        let cs: CoordinateSystem = entry.coordinate_system.parse()?;
        if declared.is_some_and(|d| d != cs) {
            return Err(IoError::HeaderMismatch(format!(
                "markup declares {}, manifest declares {}",
                cs.as_str(),
                declared.unwrap().as_str()
            )));
        }
        let name = entry.name.clone().unwrap_or_else(|| format!("markup_{n}"));
        if entry.control_points.is_empty() {
            return Err(IoError::EmptyMarkup(name));
        }
        let point = |cp: &ControlPoint| -> Result<Point3, IoError> {
            if cp.position.iter().any(|x| !x.is_finite()) {
                return Err(IoError::Parse(format!("non-finite position in `{name}`")));
            }
            Ok(Point3::from(cs.convert(cp.position)))
        };
        match entry.kind.as_str() {
            "Curve" | "ClosedCurve" => {
                let points = entry
                    .control_points
                    .iter()
                    .map(point)
                    .collect::<Result<Vec<_>, _>>()?;
                set.curves.push(MarkupCurve::new(name, points));
            }
            "Fiducial" => {
                for cp in &entry.control_points {
                    set.fiducials
                        .push(FiducialReference::new(cp.label.clone(), point(cp)?));
                }
            }
            other => return Err(IoError::Parse(format!("unsupported markup type `{other}`"))),
        }
    }
    Ok(set)
}

pub fn read_markups(path: &Path) -> Result<MarkupSet, IoError> {
    parse_markups(&read_text(path)?)
}

pub fn read_markups_declared(
    path: &Path,
    declared: Option<CoordinateSystem>,
) -> Result<MarkupSet, IoError> {
    parse_markups_declared(&read_text(path)?, declared)
}

/// Serializes curves (one entry each) and fiducials (one entry) in `cs`.
pub fn markups_to_string(set: &MarkupSet, cs: CoordinateSystem) -> String {
    let mut markups: Vec<Entry> = set
        .curves
        .iter()
        .map(|c| Entry {
            kind: "Curve".into(),
            name: Some(c.label.clone()),
            coordinate_system: cs.as_str().into(),
            control_points: c
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| ControlPoint {
                    label: format!("{}-{}", c.label, i + 1),
                    position: cs.convert([p.x, p.y, p.z]),
                })
                .collect(),
        })
        .collect();
    if !set.fiducials.is_empty() {
        markups.push(Entry {
            kind: "Fiducial".into(),
            name: Some("fiducials".into()),
            coordinate_system: cs.as_str().into(),
            control_points: set
                .fiducials
                .iter()
                .map(|f| ControlPoint {
                    label: f.label.clone(),
                    position: cs.convert([f.position.x, f.position.y, f.position.z]),
                })
                .collect(),
        });
    }
    let doc = Document {
        schema: None,
        markups,
    };
    serde_json::to_string_pretty(&doc).expect("markup serialization")
}

pub fn write_markups(path: &Path, set: &MarkupSet, cs: CoordinateSystem) -> Result<(), IoError> {
    write_bytes(path, markups_to_string(set, cs).as_bytes())
}
