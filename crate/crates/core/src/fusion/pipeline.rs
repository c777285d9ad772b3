use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{
    fiducial_register, icp_refine_with, mask_surface_points_with, stitch_volumes_with,
    threshold_segment, FusionError, IcpOptions, IcpResult, PointCloud, StitchOptions, StitchResult,
    VolumeGrid, DEFAULT_THRESHOLD_HU,
};
use crate::exec::Exec;
use crate::geometry::{Point3, RigidTransform, Vec3};

/// Settings for the two-half reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseOptions {
    pub threshold_hu: f64,
    pub icp: IcpOptions,
    pub surface_stride: usize,
    /// Surface points kept around the cut face, as a multiple of the
    /// largest voxel spacing. Non-positive keeps whole surfaces.
    pub face_slab_voxels: f64,
    pub stitch: StitchOptions,
}

impl Default for FuseOptions {
    fn default() -> Self {
        Self {
            threshold_hu: DEFAULT_THRESHOLD_HU,
            icp: IcpOptions::default(),
            surface_stride: 1,
            face_slab_voxels: 0.75,
            stitch: StitchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseOutcome {
    pub fiducial_fre: f64,
    pub initial: RigidTransform,
    pub icp: IcpResult,
    /// Moving-to-fixed transform used for stitching.
    pub t_fuse: RigidTransform,
    pub stitched: StitchResult,
}

/// Least-squares plane through points: centroid and unit normal.
fn fit_plane(points: &[Point3]) -> (Point3, Vec3) {
    let n = points.len() as f64;
    let c = Point3::from(points.iter().map(|p| p.coords).sum::<Vec3>() / n);
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - c;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let i = eig.eigenvalues.imin();
    (c, eig.eigenvectors.column(i).into_owned())
}

fn face_surface(
    volume: &VolumeGrid,
    fiducials: &[Point3],
    options: &FuseOptions,
    exec: Exec,
) -> Result<PointCloud, FusionError> {
    let mask = threshold_segment(volume, options.threshold_hu);
    let cloud = mask_surface_points_with(&mask, options.surface_stride, exec)?;
    if options.face_slab_voxels <= 0.0 {
        return Ok(cloud);
    }
    // Start from the fiducial plane and pull it onto the dense face layer.
    // The slab stays under one voxel so walls and other structures crossing
    // the cut cannot tilt the fit.
    let voxel = volume.spacing.iter().cloned().fold(0.0, f64::max);
    let (mut c, mut n) = fit_plane(fiducials);
    for width in [0.5; 4] {
        let slab = cloud.crop_slab(&c, &n, width * voxel);
        if slab.len() < 3 {
            break;
        }
        (c, n) = fit_plane(&slab.points);
    }
    let cropped = cloud.crop_slab(&c, &n, options.face_slab_voxels * voxel);
    if cropped.is_empty() {
        return Err(FusionError::EmptyMask);
    }
    Ok(cropped)
}

/// Reconstructs the whole specimen from two bisection halves: fiducial
/// registration of the paired picks, trimmed ICP between the cut-face
/// bone surfaces, then stitching into the fixed frame.
pub fn fuse_halves(
    fixed: &VolumeGrid,
    moving: &VolumeGrid,
    fiducials_fixed: &[Point3],
    fiducials_moving: &[Point3],
    options: &FuseOptions,
    exec: Exec,
) -> Result<FuseOutcome, FusionError> {
    let fit = fiducial_register(fiducials_moving, fiducials_fixed)?;
    let fixed_surface = face_surface(fixed, fiducials_fixed, options, exec)?;
    let moving_surface = face_surface(moving, fiducials_moving, options, exec)?;
    let icp = icp_refine_with(
        &moving_surface,
        &fixed_surface,
        &fit.transform,
        &options.icp,
        exec,
    )?;
    let t_fuse = icp.transform;
    let stitched = stitch_volumes_with(fixed, moving, &t_fuse, &options.stitch, exec)?;
    Ok(FuseOutcome {
        fiducial_fre: fit.fre,
        initial: fit.transform,
        icp,
        t_fuse,
        stitched,
    })
}
