//! Dissection-cut planes solved from laboratory distance measurements.
//!
//! Each cut is modelled as flat, containing the chord between its two
//! bisection-edge intersections, and perpendicular to the local direction
//! of the bisection (the averaged unit tangent of both edges).

mod root;

pub use root::{solve_intersection, IntersectionSolution, RootMethod, SCAN_SAMPLES, SEARCH_DOMAIN};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    try_normalize, FiducialReference, GeometryError, ParametricCubic, Point3, Vec3,
};

/// Minimum anchor separation for a plane to be defined.
pub const MIN_CHORD_MM: f64 = 1e-3;
const DEGENERACY_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlaneError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no intersection at distance {distance} mm on the search domain")]
    NoRoot { distance: f64 },
    #[error("root residual {residual} mm exceeds tolerance")]
    ResidualTooLarge { residual: f64 },
    #[error("edge tangents oppose each other; averaged tangent is undefined")]
    DegenerateTangents,
    #[error("averaged tangent is parallel to the anchor chord")]
    TangentParallelToChord,
    #[error("anchors are {length} mm apart")]
    ShortChord { length: f64 },
    #[error("measurement indices must be unique and increasing (index {0})")]
    Unsorted(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One laboratory record for dissection cut `index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissectionMeasurement {
    pub index: u32,
    /// Distance from the fiducial to the cut corner on edge a (mm).
    pub d_a: f64,
    /// Distance from the fiducial to the cut corner on edge b (mm).
    pub d_b: f64,
    /// The pathologist recorded the cut as curved.
    pub curved_cut: bool,
    /// Signed shift along the plane normal (microtome shavings, blade kerf).
    pub offset: f64,
}

impl DissectionMeasurement {
    pub fn new(index: u32, d_a: f64, d_b: f64) -> Self {
        Self {
            index,
            d_a,
            d_b,
            curved_cut: false,
            offset: 0.0,
        }
    }
}

/// Oriented plane of one dissection cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissectionPlane {
    pub index: u32,
    pub origin: Point3,
    pub normal: Vec3,
    pub u_axis: Vec3,
    pub v_axis: Vec3,
    pub anchor_a: Point3,
    pub anchor_b: Point3,
    pub param_a: f64,
    pub param_b: f64,
}

impl DissectionPlane {
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&(p - self.origin))
    }

    /// Plane coordinates `(u, v)` of the orthogonal projection of `p`.
    pub fn project(&self, p: &Point3) -> nalgebra::Vector2<f64> {
        let r = p - self.origin;
        nalgebra::Vector2::new(self.u_axis.dot(&r), self.v_axis.dot(&r))
    }

    pub fn to_world(&self, u: f64, v: f64) -> Point3 {
        self.origin + self.u_axis * u + self.v_axis * v
    }

    /// The same plane shifted by `offset` mm along its normal.
    pub fn with_offset(&self, offset: f64) -> Self {
        let shift = self.normal * offset;
        Self {
            origin: self.origin + shift,
            anchor_a: self.anchor_a + shift,
            anchor_b: self.anchor_b + shift,
            ..self.clone()
        }
    }

    /// Plane through two anchors with the averaged-tangent normal rule.
    pub fn from_anchors(
        index: u32,
        anchor_a: Point3,
        anchor_b: Point3,
        tangent_a: &Vec3,
        tangent_b: &Vec3,
    ) -> Result<Self, PlaneError> {
        let chord = anchor_b - anchor_a;
        let length = chord.norm();
        if !(length > MIN_CHORD_MM) {
            return Err(PlaneError::ShortChord { length });
        }
        let chord = chord / length;
        let ta = try_normalize(tangent_a, 0.0).ok_or(PlaneError::DegenerateTangents)?;
        let tb = try_normalize(tangent_b, 0.0).ok_or(PlaneError::DegenerateTangents)?;
        let t_avg =
            try_normalize(&(ta + tb), DEGENERACY_EPS).ok_or(PlaneError::DegenerateTangents)?;
        let normal = try_normalize(&(t_avg - chord * t_avg.dot(&chord)), DEGENERACY_EPS)
            .ok_or(PlaneError::TangentParallelToChord)?;
        // One more projection removes the rounding left by the first.
        let normal = (normal - chord * normal.dot(&chord)).normalize();
        let v_axis = normal.cross(&chord);
        Ok(Self {
            index,
            origin: nalgebra::center(&anchor_a, &anchor_b),
            normal,
            u_axis: chord,
            v_axis,
            anchor_a,
            anchor_b,
            param_a: f64::NAN,
            param_b: f64::NAN,
        })
    }
}

/// A solved plane with the two intersection diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignedPlane {
    pub plane: DissectionPlane,
    pub a: IntersectionSolution,
    pub b: IntersectionSolution,
}

/// Solves the plane of one dissection cut.
pub fn assign_plane(
    curve_a: &ParametricCubic,
    curve_b: &ParametricCubic,
    f_ref: &FiducialReference,
    m: &DissectionMeasurement,
    seed_a: f64,
    seed_b: f64,
) -> Result<AssignedPlane, PlaneError> {
    let a = solve_intersection(curve_a, f_ref, m.d_a, seed_a)?;
    let b = solve_intersection(curve_b, f_ref, m.d_b, seed_b)?;
    let ta = curve_a.tangent(a.t)?;
    let tb = curve_b.tangent(b.t)?;
    let mut plane = DissectionPlane::from_anchors(m.index, a.point, b.point, &ta, &tb)?;
    plane.param_a = a.t;
    plane.param_b = b.t;
    if m.offset != 0.0 {
        plane = plane.with_offset(m.offset);
    }
    Ok(AssignedPlane { plane, a, b })
}

/// Outcome for one measurement in a batch; failed planes are kept as errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneOutcome {
    pub index: u32,
    pub result: Result<AssignedPlane, PlaneError>,
}

/// Solves all planes in index order, seeding each solve with the previous
/// plane's parameters (the first from 0). Failures do not stop the batch.
pub fn assign_all_planes(
    curve_a: &ParametricCubic,
    curve_b: &ParametricCubic,
    f_ref: &FiducialReference,
    measurements: &[DissectionMeasurement],
) -> Result<Vec<PlaneOutcome>, PlaneError> {
    for w in measurements.windows(2) {
        if w[1].index <= w[0].index {
            return Err(PlaneError::Unsorted(w[1].index));
        }
    }
    let (mut seed_a, mut seed_b) = (0.0, 0.0);
    let mut out = Vec::with_capacity(measurements.len());
    for m in measurements {
        let result = assign_plane(curve_a, curve_b, f_ref, m, seed_a, seed_b);
        if let Ok(p) = &result {
            seed_a = p.a.t;
            seed_b = p.b.t;
        } else if let Err(e) = &result {
            log::warn!("plane {} failed: {e}", m.index);
        }
        out.push(PlaneOutcome {
            index: m.index,
            result,
        });
    }
    Ok(out)
}

/// The successfully solved planes of a batch, in order.
pub fn solved_planes(outcomes: &[PlaneOutcome]) -> Vec<DissectionPlane> {
    outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|p| p.plane.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parallel_lines() -> (ParametricCubic, ParametricCubic, FiducialReference) {
        (
            ParametricCubic::line(Point3::origin(), Point3::new(100., 0., 0.)),
            ParametricCubic::line(Point3::new(0., 10., 0.), Point3::new(100., 10., 0.)),
            FiducialReference::new("f", Point3::origin()),
        )
    }

    fn check_frame(p: &DissectionPlane) {
        assert!(p.u_axis.dot(&p.v_axis).abs() < 1e-9);
        assert!(p.u_axis.dot(&p.normal).abs() < 1e-9);
        assert!(p.v_axis.dot(&p.normal).abs() < 1e-9);
        assert!((p.u_axis.cross(&p.v_axis) - p.normal).norm() < 1e-9);
        assert!(p.signed_distance(&p.anchor_a).abs() < 1e-9);
        assert!(p.signed_distance(&p.anchor_b).abs() < 1e-9);
    }

    #[test]
    fn parallel_edges_equal_distances() {
        let (a, b, f) = parallel_lines();
        // d_b is measured from the fiducial, so the corner at x = 30 on y = 10
        // sits at distance sqrt(30^2 + 10^2).
        let m = DissectionMeasurement::new(1, 30.0, (900.0f64 + 100.0).sqrt());
        let p = assign_plane(&a, &b, &f, &m, 0.0, 0.0).unwrap().plane;
        assert!((p.anchor_a - Point3::new(30., 0., 0.)).norm() < 1e-9);
        assert!((p.anchor_b - Point3::new(30., 10., 0.)).norm() < 1e-9);
        assert!((p.normal - Vec3::new(1., 0., 0.)).norm() < 1e-9);
        assert!((p.origin - Point3::new(30., 5., 0.)).norm() < 1e-9);
        check_frame(&p);
    }

    #[test]
    fn skewed_chord_keeps_normal_in_plane_of_edges() {
        let (a, b, f) = parallel_lines();
        let m = DissectionMeasurement::new(1, 30.0, (1600.0f64 + 100.0).sqrt());
        let p = assign_plane(&a, &b, &f, &m, 0.0, 0.0).unwrap().plane;
        assert!((p.anchor_b - Point3::new(40., 10., 0.)).norm() < 1e-9);
        assert!(p.normal.dot(&(p.anchor_b - p.anchor_a)).abs() < 1e-9);
        assert!(p.normal.z.abs() < 1e-12);
        check_frame(&p);
    }

    #[test]
    fn offset_round_trip() {
        let (a, b, f) = parallel_lines();
        let mut m = DissectionMeasurement::new(1, 30.0, 40.0);
        let p = assign_plane(&a, &b, &f, &m, 0.0, 0.0).unwrap().plane;
        let back = p.with_offset(0.37).with_offset(-0.37);
        assert!((back.origin - p.origin).norm() < 1e-12);
        assert!((back.anchor_a - p.anchor_a).norm() < 1e-12);
        m.offset = 0.5;
        let q = assign_plane(&a, &b, &f, &m, 0.0, 0.0).unwrap().plane;
        assert!((q.signed_distance(&p.origin) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn batch_of_parallel_planes() {
        let (a, b, f) = parallel_lines();
        let ms: Vec<_> = [30.0f64, 50.0, 80.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| DissectionMeasurement::new(i as u32 + 1, x, (x * x + 100.0).sqrt()))
            .collect();
        let out = assign_all_planes(&a, &b, &f, &ms).unwrap();
        let planes = solved_planes(&out);
        assert_eq!(planes.len(), 3);
        for (p, x) in planes.iter().zip([30.0, 50.0, 80.0]) {
            assert!((p.origin.x - x).abs() < 1e-9);
            assert!((p.normal - Vec3::x()).norm() < 1e-9);
        }
        assert!(assign_all_planes(&a, &b, &f, &[]).unwrap().is_empty());
    }

    #[test]
    fn failed_planes_are_marked_absent() {
        let (a, b, f) = parallel_lines();
        let ms = vec![
            DissectionMeasurement::new(1, 30.0, 31.0),
            DissectionMeasurement::new(2, 500.0, 500.0),
            DissectionMeasurement::new(3, 60.0, 61.0),
        ];
        let out = assign_all_planes(&a, &b, &f, &ms).unwrap();
        assert!(out[0].result.is_ok());
        assert!(matches!(out[1].result, Err(PlaneError::NoRoot { .. })));
        assert!(out[2].result.is_ok());
        assert_eq!(solved_planes(&out).len(), 2);
        let unsorted = vec![ms[2].clone(), ms[0].clone()];
        assert!(assign_all_planes(&a, &b, &f, &unsorted).is_err());
    }

    #[test]
    fn opposing_tangents_rejected() {
        let r = DissectionPlane::from_anchors(
            1,
            Point3::origin(),
            Point3::new(0., 10., 0.),
            &Vec3::x(),
            &-Vec3::x(),
        );
        assert_eq!(r, Err(PlaneError::DegenerateTangents));
        let r = DissectionPlane::from_anchors(
            1,
            Point3::origin(),
            Point3::new(0., 10., 0.),
            &Vec3::y(),
            &Vec3::y(),
        );
        assert_eq!(r, Err(PlaneError::TangentParallelToChord));
    }
}
