use nalgebra::{Matrix3, Matrix4, Rotation3, Unit};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3, Vec2, Vec3};

const RIGID_TOL: f64 = 1e-9;

/// 4x4 homogeneous rigid transform (rotation + translation, mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 4]", into = "[[f64; 4]; 4]")]
pub struct RigidTransform {
    matrix: Matrix4<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    /// Builds from a rotation block and translation, validating the rotation.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, GeometryError> {
        check_rotation(&rotation)?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("translation".into()));
        }
        Ok(Self::from_parts_unchecked(rotation, translation))
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self { matrix: m }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self::from_parts_unchecked(*r.matrix(), translation)
    }

    pub fn translation_only(t: Vec3) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), t)
    }

    /// Validates an arbitrary 4x4 matrix.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self, GeometryError> {
        let last = m.row(3);
        if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > RIGID_TOL {
            return Err(GeometryError::NotRigid(format!(
                "last row must be (0, 0, 0, 1), got {last}"
            )));
        }
        Self::from_parts(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            matrix: self.matrix * other.matrix,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        Self::from_parts_unchecked(rt, t)
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation() * p.coords + self.translation())
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation() * v
    }

    /// Rotation angle of the rotation block, in degrees.
    pub fn rotation_angle_deg(&self) -> f64 {
        let r = self.rotation();
        // acos of the trace is ill-conditioned near 0; use the skew part instead.
        let skew = Vec3::new(
            r[(2, 1)] - r[(1, 2)],
            r[(0, 2)] - r[(2, 0)],
            r[(1, 0)] - r[(0, 1)],
        );
        let trace = r.trace();
        (skew.norm()).atan2(trace - 1.0).to_degrees()
    }

    /// Rotation angle and translation norm of `self⁻¹ ∘ other`.
    pub fn difference(&self, other: &RigidTransform) -> (f64, f64) {
        let d = self.inverse().compose(other);
        (d.rotation_angle_deg(), d.translation().norm())
    }

    /// Largest absolute elementwise difference between the two matrices.
    pub fn max_abs_diff(&self, other: &RigidTransform) -> f64 {
        (self.matrix - other.matrix).amax()
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let mut rows = [[0.0; 4]; 4];
        for (r, row) in rows.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.matrix[(r, c)];
            }
        }
        rows
    }
}

impl TryFrom<[[f64; 4]; 4]> for RigidTransform {
    type Error = GeometryError;

    fn try_from(rows: [[f64; 4]; 4]) -> Result<Self, Self::Error> {
        Self::from_matrix(Matrix4::from_fn(|r, c| rows[r][c]))
    }
}

impl From<RigidTransform> for [[f64; 4]; 4] {
    fn from(t: RigidTransform) -> Self {
        t.to_rows()
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<(), GeometryError> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("rotation".into()));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    if ortho > RIGID_TOL {
        return Err(GeometryError::NotRigid(format!(
            "rotation block deviates from orthonormal by {ortho:e}"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > RIGID_TOL {
        return Err(GeometryError::NotRigid(format!("det(R) = {det}")));
    }
    Ok(())
}

/// In-plane similarity `q = s * Rot(theta) * p + translation`.
///
/// The histology fit uses `rotation_rad = 0` (scale and translation only);
/// the rotation term exists for the optional Procrustes mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform2D {
    pub scale: f64,
    pub translation: Vec2,
    #[serde(default)]
    pub rotation_rad: f64,
}

impl SimilarityTransform2D {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            translation: Vec2::zeros(),
            rotation_rad: 0.0,
        }
    }

    pub fn new(scale: f64, translation: Vec2) -> Result<Self, GeometryError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GeometryError::InvalidScale(scale));
        }
        Ok(Self {
            scale,
            translation,
            rotation_rad: 0.0,
        })
    }

    /// Linear part as a 2x2 matrix.
    pub fn linear(&self) -> nalgebra::Matrix2<f64> {
        let (s, c) = self.rotation_rad.sin_cos();
        nalgebra::Matrix2::new(c, -s, s, c) * self.scale
    }

    pub fn apply(&self, p: &Vec2) -> Vec2 {
        self.linear() * p + self.translation
    }
}
