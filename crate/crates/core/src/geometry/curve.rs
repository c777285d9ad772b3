use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{GeometryError, Point3, Vec3, MIN_CHORD_MM, MIN_TOTAL_CHORD_MM, STATIONARY_NORM};

/// Ordered control points placed along a bisection edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkupCurve {
    pub label: String,
    pub points: Vec<Point3>,
}

impl MarkupCurve {
    pub fn new(label: impl Into<String>, points: Vec<Point3>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }

    /// Checks the point-count, finiteness and chord invariants.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.points.len() < 4 {
            return Err(GeometryError::TooFewPoints {
                label: self.label.clone(),
                count: self.points.len(),
            });
        }
        if self
            .points
            .iter()
            .any(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::NonFinite(self.label.clone()));
        }
        for (i, w) in self.points.windows(2).enumerate() {
            if (w[1] - w[0]).norm() <= MIN_CHORD_MM {
                return Err(GeometryError::DegenerateChord {
                    label: self.label.clone(),
                    index: i + 1,
                });
            }
        }
        Ok(())
    }

    /// Normalized cumulative chord-length parameters, first 0 and last 1.
    pub fn chord_params(&self) -> Result<Vec<f64>, GeometryError> {
        self.validate()?;
        let mut acc = Vec::with_capacity(self.points.len());
        let mut total = 0.0;
        acc.push(0.0);
        for w in self.points.windows(2) {
            total += (w[1] - w[0]).norm();
            acc.push(total);
        }
        if total <= MIN_TOTAL_CHORD_MM {
            return Err(GeometryError::ShortCurve {
                label: self.label.clone(),
                length: total,
            });
        }
        for a in acc.iter_mut() {
            *a /= total;
        }
        *acc.last_mut().unwrap() = 1.0;
        Ok(acc)
    }
}

/// Reference landmark from which laboratory distances are measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiducialReference {
    pub label: String,
    pub position: Point3,
}

impl FiducialReference {
    pub fn new(label: impl Into<String>, position: Point3) -> Self {
        Self {
            label: label.into(),
            position,
        }
    }
}

/// Per-axis cubic polynomial `C(t) = c0 + c1 t + c2 t^2 + c3 t^3` over `t` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricCubic {
    /// `coefficients[axis][power]`, ascending powers.
    pub coefficients: [[f64; 4]; 3],
    /// Parameters assigned to the control points during fitting.
    pub chord_params: Vec<f64>,
    /// RMS distance between the control points and the fitted curve (mm).
    pub residual_rms: f64,
}

impl ParametricCubic {
    /// Curve from explicit coefficients, with the trivial parameter set `[0, 1]`.
    pub fn from_coefficients(coefficients: [[f64; 4]; 3]) -> Self {
        Self {
            coefficients,
            chord_params: vec![0.0, 1.0],
            residual_rms: 0.0,
        }
    }

    /// Straight segment from `a` (t = 0) to `b` (t = 1).
    pub fn line(a: Point3, b: Point3) -> Self {
        let d = b - a;
        Self::from_coefficients([
            [a.x, d.x, 0.0, 0.0],
            [a.y, d.y, 0.0, 0.0],
            [a.z, d.z, 0.0, 0.0],
        ])
    }

    pub fn eval(&self, t: f64) -> Point3 {
        let c = &self.coefficients;
        Point3::new(horner(&c[0], t), horner(&c[1], t), horner(&c[2], t))
    }

    /// Analytic first derivative, not normalized.
    pub fn derivative(&self, t: f64) -> Vec3 {
        let d = |a: &[f64; 4]| a[1] + t * (2.0 * a[2] + t * 3.0 * a[3]);
        let c = &self.coefficients;
        Vec3::new(d(&c[0]), d(&c[1]), d(&c[2]))
    }

    /// Analytic second derivative.
    pub fn second_derivative(&self, t: f64) -> Vec3 {
        let d = |a: &[f64; 4]| 2.0 * a[2] + 6.0 * a[3] * t;
        let c = &self.coefficients;
        Vec3::new(d(&c[0]), d(&c[1]), d(&c[2]))
    }

    /// First derivative, rejecting stationary points.
    pub fn tangent(&self, t: f64) -> Result<Vec3, GeometryError> {
        let d = self.derivative(t);
        if d.norm() <= STATIONARY_NORM {
            return Err(GeometryError::StationaryPoint { t });
        }
        Ok(d)
    }

    /// Applies a rigid transform to the curve's image (exact for polynomials).
    pub fn transformed(&self, m: &super::RigidTransform) -> Self {
        let r = m.rotation();
        let t = m.translation();
        let mut out = self.clone();
        for p in 0..4 {
            let v = Vec3::new(
                self.coefficients[0][p],
                self.coefficients[1][p],
                self.coefficients[2][p],
            );
            let mut w = r * v;
            if p == 0 {
                w += t;
            }
            for axis in 0..3 {
                out.coefficients[axis][p] = w[axis];
            }
        }
        out
    }
}

#[inline]
fn horner(a: &[f64; 4], t: f64) -> f64 {
    a[0] + t * (a[1] + t * (a[2] + t * a[3]))
}

/// Least-squares cubic fit per axis against normalized chord-length parameters.
pub fn fit_parametric_cubic(curve: &MarkupCurve) -> Result<ParametricCubic, GeometryError> {
    let params = curve.chord_params()?;
    let n = params.len();
    let design = DMatrix::from_fn(n, 4, |r, c| params[r].powi(c as i32));
    let svd = design.svd(true, true);

    let mut coefficients = [[0.0; 4]; 3];
    for (axis, row) in coefficients.iter_mut().enumerate() {
        let rhs = DVector::from_iterator(n, curve.points.iter().map(|p| p[axis]));
        let sol = svd
            .solve(&rhs, 1e-14)
            .map_err(|e| GeometryError::NotRigid(e.to_string()))?;
        row.copy_from_slice(sol.as_slice());
    }

    let mut fitted = ParametricCubic {
        coefficients,
        chord_params: params,
        residual_rms: 0.0,
    };
    let sq: f64 = curve
        .points
        .iter()
        .zip(&fitted.chord_params)
        .map(|(p, &t)| (fitted.eval(t) - p).norm_squared())
        .sum();
    fitted.residual_rms = (sq / n as f64).sqrt();
    Ok(fitted)
}
