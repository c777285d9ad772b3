use serde::{Deserialize, Serialize};

use super::{FusionError, VolumeGrid, BACKGROUND_HU};
use crate::exec::Exec;
use crate::geometry::RigidTransform;

/// How voxels covered by both volumes are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapRule {
    /// Arithmetic mean of the contributing values.
    #[default]
    Mean,
    /// The fixed volume's value wherever it exists.
    FixedWins,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StitchOptions {
    pub rule: OverlapRule,
    pub background: f32,
}

impl Default for StitchOptions {
    fn default() -> Self {
        Self {
            rule: OverlapRule::Mean,
            background: BACKGROUND_HU,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchResult {
    pub volume: VolumeGrid,
    /// Offset of the output grid in fixed-grid index units.
    pub fixed_offset: [i64; 3],
    pub overlap_voxels: usize,
    /// Set when the two volumes do not overlap at all.
    pub warning: Option<String>,
}

/// Fuses `moving` into the frame of `fixed`. `t_fuse` maps moving
/// coordinates to fixed coordinates.
///
/// The output shares the fixed grid's spacing, direction and lattice and
/// spans the union of both extents; fixed voxels are copied without
/// interpolation, moving voxels are resampled trilinearly.
pub fn stitch_volumes(
    fixed: &VolumeGrid,
    moving: &VolumeGrid,
    t_fuse: &RigidTransform,
    options: &StitchOptions,
) -> Result<StitchResult, FusionError> {
    stitch_volumes_with(fixed, moving, t_fuse, options, Exec::default())
}

pub fn stitch_volumes_with(
    fixed: &VolumeGrid,
    moving: &VolumeGrid,
    t_fuse: &RigidTransform,
    options: &StitchOptions,
    exec: Exec,
) -> Result<StitchResult, FusionError> {
    fixed.validate()?;
    moving.validate()?;
    if fixed.is_empty() || moving.is_empty() {
        return Err(FusionError::InvalidVolume("empty volume".into()));
    }

    // Union extent in fixed index space.
    let mut lo = [0i64; 3];
    let mut hi: [i64; 3] = std::array::from_fn(|a| fixed.dims[a] as i64 - 1);
    for corner in 0..8 {
        let idx: [f64; 3] = std::array::from_fn(|a| {
            if corner >> a & 1 == 1 {
                (moving.dims[a] - 1) as f64
            } else {
                0.0
            }
        });
        let w = t_fuse.apply_point(&moving.world(idx));
        let c = fixed.continuous_index(&w);
        for a in 0..3 {
            lo[a] = lo[a].min((c[a] - 1e-6).ceil() as i64);
            hi[a] = hi[a].max((c[a] + 1e-6).floor() as i64);
        }
    }
    let dims: [usize; 3] = std::array::from_fn(|a| (hi[a] - lo[a] + 1) as usize);
    let origin = fixed.world([lo[0] as f64, lo[1] as f64, lo[2] as f64]);
    let inverse = t_fuse.inverse();
    let total = dims[0] * dims[1] * dims[2];

    let mut voxels = vec![0f32; total];
    let mut overlap = vec![0u8; total];
    let mut values: Vec<(f32, u8)> = vec![(0.0, 0); total];
    exec.fill_chunks(&mut values, dims[0] * dims[1], |start, out| {
        for (n, slot) in out.iter_mut().enumerate() {
            let o = start + n;
            let i = (o % dims[0]) as i64 + lo[0];
            let j = ((o / dims[0]) % dims[1]) as i64 + lo[1];
            let k = (o / (dims[0] * dims[1])) as i64 + lo[2];
            let fixed_value = (i >= 0
                && j >= 0
                && k >= 0
                && (i as usize) < fixed.dims[0]
                && (j as usize) < fixed.dims[1]
                && (k as usize) < fixed.dims[2])
                .then(|| fixed.get(i as usize, j as usize, k as usize));
            let world = fixed.world([i as f64, j as f64, k as f64]);
            let moving_value = moving.sample_trilinear(&inverse.apply_point(&world));
            *slot = match (fixed_value, moving_value) {
                (Some(f), Some(m)) => {
                    let v = match options.rule {
                        OverlapRule::Mean => ((f as f64 + m) * 0.5) as f32,
                        OverlapRule::FixedWins => f,
                    };
                    (v, 1)
                }
                (Some(f), None) => (f, 0),
                (None, Some(m)) => (m as f32, 0),
                (None, None) => (options.background, 0),
            };
        }
    });
    for (n, (v, o)) in values.into_iter().enumerate() {
        voxels[n] = v;
        overlap[n] = o;
    }
    let overlap_voxels = overlap.iter().filter(|&&o| o == 1).count();
    let warning = (overlap_voxels == 0).then(|| {
        log::warn!("stitched volumes do not overlap");
        "volumes do not overlap".to_string()
    });

    Ok(StitchResult {
        volume: VolumeGrid {
            dims,
            spacing: fixed.spacing,
            origin,
            direction: fixed.direction,
            voxels,
            voxel_type: fixed.voxel_type,
        },
        fixed_offset: lo,
        overlap_voxels,
        warning,
    })
}
