use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::geometry::{Point3, RigidTransform, Vec3};

/// Result of a paired-point rigid registration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiducialFit {
    /// Maps moving points onto fixed points.
    pub transform: RigidTransform,
    /// Fiducial registration error: RMS residual after alignment (mm).
    pub fre: f64,
}

fn centroid(points: &[Point3]) -> Point3 {
    Point3::from(points.iter().map(|p| p.coords).sum::<Vec3>() / points.len() as f64)
}

/// Least-squares rigid transform taking `moving[i]` to `fixed[i]`
/// (cross-covariance SVD with reflection correction).
pub fn fiducial_register(moving: &[Point3], fixed: &[Point3]) -> Result<FiducialFit, FusionError> {
    if moving.len() != fixed.len() {
        return Err(FusionError::PairMismatch(moving.len(), fixed.len()));
    }
    if moving.len() < 3 {
        return Err(FusionError::TooFewPairs(moving.len()));
    }
    let cm = centroid(moving);
    let cf = centroid(fixed);

    let mut spread = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    for (m, f) in moving.iter().zip(fixed) {
        let dm = m - cm;
        spread += dm * dm.transpose();
        cov += dm * (f - cf).transpose();
    }
    // Second singular value of the moving scatter vanishes for collinear sets.
    let mut sv = spread.symmetric_eigenvalues();
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(sv[1] > 1e-12 * sv[0].max(1e-300)) {
        return Err(FusionError::CollinearFiducials);
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let translation = cf.coords - rotation * cm.coords;
    let transform = RigidTransform::from_parts_unchecked(rotation, translation);

    let sq: f64 = moving
        .iter()
        .zip(fixed)
        .map(|(m, f)| (transform.apply_point(m) - f).norm_squared())
        .sum();
    Ok(FiducialFit {
        transform,
        fre: (sq / moving.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tetra() -> Vec<Point3> {
        vec![
            Point3::new(0., 0., 0.),
            Point3::new(10., 0., 0.),
            Point3::new(0., 10., 0.),
            Point3::new(0., 0., 10.),
        ]
    }

    #[test]
    fn identity_on_identical_sets() {
        let fit = fiducial_register(&tetra(), &tetra()).unwrap();
        assert!(fit.transform.max_abs_diff(&RigidTransform::identity()) < 1e-12);
        assert!(fit.fre < 1e-12);
    }

    #[test]
    fn recovers_quarter_turn() {
        let truth = RigidTransform::from_axis_angle(
            &Vec3::z(),
            std::f64::consts::FRAC_PI_2,
            Vec3::new(1., 2., 3.),
        );
        let fixed: Vec<_> = tetra().iter().map(|p| truth.apply_point(p)).collect();
        let fit = fiducial_register(&tetra(), &fixed).unwrap();
        assert!(fit.transform.max_abs_diff(&truth) < 1e-12);
    }

    #[test]
    fn reflection_is_corrected() {
        // Planar sets admit a reflection; the result must stay proper.
        let moving = vec![
            Point3::new(0., 0., 0.),
            Point3::new(1., 0., 0.),
            Point3::new(0., 2., 0.),
        ];
        let fixed: Vec<_> = moving.iter().map(|p| Point3::new(p.x, p.y, -p.z)).collect();
        let fit = fiducial_register(&moving, &fixed).unwrap();
        assert!((fit.transform.rotation().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let line: Vec<_> = (0..4).map(|i| Point3::new(i as f64, 0., 0.)).collect();
        assert_eq!(
            fiducial_register(&line, &line),
            Err(FusionError::CollinearFiducials)
        );
        assert_eq!(
            fiducial_register(&tetra()[..2], &tetra()[..2]),
            Err(FusionError::TooFewPairs(2))
        );
    }
}
