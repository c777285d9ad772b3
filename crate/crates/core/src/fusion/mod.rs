//! Whole-specimen CT reconstruction from the two bisection scans:
//! threshold segmentation, surface extraction, fiducial and ICP rigid
//! registration, and volume stitching.

mod icp;
mod pipeline;
mod register;
mod stitch;
mod volume;

pub use icp::{icp_refine, icp_refine_with, IcpOptions, IcpResult};
pub use pipeline::{fuse_halves, FuseOptions, FuseOutcome};
pub use register::{fiducial_register, FiducialFit};
pub use stitch::{stitch_volumes, stitch_volumes_with, OverlapRule, StitchOptions, StitchResult};
pub use volume::{
    mask_surface_points, mask_surface_points_with, threshold_segment, PointCloud, VolumeGrid,
    VoxelType, DEFAULT_THRESHOLD_HU,
};

use thiserror::Error;

/// CT value written where no source volume contributes (air).
pub const BACKGROUND_HU: f32 = -1024.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("need at least 3 fiducial pairs, got {0}")]
    TooFewPairs(usize),
    #[error("fiducial lists differ in length ({0} vs {1})")]
    PairMismatch(usize, usize),
    #[error("fiducials are collinear")]
    CollinearFiducials,
    #[error("point cloud `{0}` is empty")]
    EmptyCloud(&'static str),
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
}
