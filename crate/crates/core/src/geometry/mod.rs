//! Foundational 3D types: markups, fitted cubic curves and transforms.
//!
//! All coordinates are millimetres in a right-handed RAS patient frame.
//! File readers convert other frames at the boundary.

mod curve;
mod transform;

pub use curve::{fit_parametric_cubic, FiducialReference, MarkupCurve, ParametricCubic};
pub use transform::{RigidTransform, SimilarityTransform2D};

use thiserror::Error;

pub type Point3 = nalgebra::Point3<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Vec2 = nalgebra::Vector2<f64>;

/// Minimum chord between consecutive markup points.
pub const MIN_CHORD_MM: f64 = 1e-6;
/// Minimum total chord length of a curve that can be fitted.
pub const MIN_TOTAL_CHORD_MM: f64 = 1e-3;
/// Derivative norm below which a curve point is treated as stationary.
pub const STATIONARY_NORM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("curve `{label}` has {count} control points, at least 4 are required")]
    TooFewPoints { label: String, count: usize },
    #[error("curve `{label}` has coincident consecutive points at index {index}")]
    DegenerateChord { label: String, index: usize },
    #[error("curve `{label}` has total chord length {length} mm")]
    ShortCurve { label: String, length: f64 },
    #[error("curve derivative vanishes at t = {t}")]
    StationaryPoint { t: f64 },
    #[error("non-finite coordinate in `{0}`")]
    NonFinite(String),
    #[error("matrix is not a proper rigid transform: {0}")]
    NotRigid(String),
    #[error("similarity scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

/// Unit vector, or `None` when the norm is below `eps`.
pub fn try_normalize(v: &Vec3, eps: f64) -> Option<Vec3> {
    let n = v.norm();
    (n >= eps && n.is_finite()).then(|| v / n)
}

/// Angle between two vectors in radians, accurate near 0 and pi.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}
