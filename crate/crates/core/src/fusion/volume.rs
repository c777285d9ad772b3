use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::exec::Exec;
use crate::geometry::{Point3, Vec3};

/// Bone threshold applied before manual segmentation refinement.
pub const DEFAULT_THRESHOLD_HU: f64 = 226.0;

const INDEX_EPS: f64 = 1e-6;

/// Storage type of the voxels on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoxelType {
    Short,
    Float,
}

/// Regular 3D grid; voxel `(i, j, k)` sits at
/// `origin + direction * (spacing .* (i, j, k))`, x index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: Point3,
    pub direction: Matrix3<f64>,
    pub voxels: Vec<f32>,
    pub voxel_type: VoxelType,
}

impl VolumeGrid {
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: Point3,
        direction: Matrix3<f64>,
        voxels: Vec<f32>,
        voxel_type: VoxelType,
    ) -> Result<Self, FusionError> {
        let g = Self {
            dims,
            spacing,
            origin,
            direction,
            voxels,
            voxel_type,
        };
        g.validate()?;
        Ok(g)
    }

    /// Axis-aligned grid filled with `value`.
    pub fn filled(dims: [usize; 3], spacing: [f64; 3], origin: Point3, value: f32) -> Self {
        Self {
            dims,
            spacing,
            origin,
            direction: Matrix3::identity(),
            voxels: vec![value; dims[0] * dims[1] * dims[2]],
            voxel_type: VoxelType::Float,
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        if self.spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(FusionError::InvalidVolume(format!(
                "spacing {:?}",
                self.spacing
            )));
        }
        let ortho = (self.direction.transpose() * self.direction - Matrix3::identity()).amax();
        if !(ortho <= 1e-9) {
            return Err(FusionError::InvalidVolume(format!(
                "direction not orthonormal ({ortho:e})"
            )));
        }
        if self.voxels.len() != self.len() {
            return Err(FusionError::InvalidVolume(format!(
                "{} voxels for dims {:?}",
                self.voxels.len(),
                self.dims
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn index_of(&self, offset: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [offset % nx, (offset / nx) % ny, offset / (nx * ny)]
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.voxels[self.offset(i, j, k)]
    }

    /// World position of a (possibly fractional or out-of-range) index.
    #[inline]
    pub fn world(&self, idx: [f64; 3]) -> Point3 {
        let scaled = Vec3::new(
            idx[0] * self.spacing[0],
            idx[1] * self.spacing[1],
            idx[2] * self.spacing[2],
        );
        self.origin + self.direction * scaled
    }

    /// Continuous index of a world position.
    #[inline]
    pub fn continuous_index(&self, p: &Point3) -> [f64; 3] {
        let local = self.direction.transpose() * (p - self.origin);
        [
            local.x / self.spacing[0],
            local.y / self.spacing[1],
            local.z / self.spacing[2],
        ]
    }

    /// Trilinear interpolation at a world position; `None` outside the grid.
    pub fn sample_trilinear(&self, p: &Point3) -> Option<f64> {
        let idx = self.continuous_index(p);
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let hi = (n - 1) as f64;
            let x = idx[a];
            if n == 0 || x < -INDEX_EPS || x > hi + INDEX_EPS {
                return None;
            }
            let x = x.clamp(0.0, hi);
            let b = (x.floor() as usize).min(n.saturating_sub(2));
            base[a] = b;
            frac[a] = if n == 1 { 0.0 } else { x - b as f64 };
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut ijk = [0usize; 3];
            for a in 0..3 {
                let up = corner >> a & 1 == 1;
                if self.dims[a] == 1 && up {
                    w = 0.0;
                    break;
                }
                ijk[a] = base[a] + up as usize;
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.get(ijk[0], ijk[1], ijk[2]) as f64;
            }
        }
        Some(acc)
    }

    /// Copy of the geometry with new voxel values.
    pub fn with_voxels(&self, voxels: Vec<f32>, voxel_type: VoxelType) -> Self {
        Self {
            dims: self.dims,
            spacing: self.spacing,
            origin: self.origin,
            direction: self.direction,
            voxels,
            voxel_type,
        }
    }
}

/// Binary mask: 1 where the value is at least `threshold_hu`, else 0.
pub fn threshold_segment(volume: &VolumeGrid, threshold_hu: f64) -> VolumeGrid {
    let voxels = volume
        .voxels
        .iter()
        .map(|&v| if v as f64 >= threshold_hu { 1.0 } else { 0.0 })
        .collect();
    volume.with_voxels(voxels, VoxelType::Short)
}

/// 3D points, optionally with normals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &crate::geometry::RigidTransform) -> Self {
        Self {
            points: self.points.iter().map(|p| t.apply_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
        }
    }

    /// Points within `radius` of any of `centers`.
    pub fn crop_spheres(&self, centers: &[Point3], radius: f64) -> Self {
        let r2 = radius * radius;
        Self::new(
            self.points
                .iter()
                .filter(|p| centers.iter().any(|c| (*p - c).norm_squared() <= r2))
                .copied()
                .collect(),
        )
    }

    /// Points within `half_width` of the plane through `point` with `normal`.
    pub fn crop_slab(&self, point: &Point3, normal: &Vec3, half_width: f64) -> Self {
        let n = normal.normalize();
        Self::new(
            self.points
                .iter()
                .filter(|p| n.dot(&(*p - point)).abs() <= half_width)
                .copied()
                .collect(),
        )
    }
}

/// World centres of foreground voxels with at least one background
/// 6-neighbour (outside the grid counts as background), every `stride`-th
/// in scan order.
pub fn mask_surface_points(mask: &VolumeGrid, stride: usize) -> Result<PointCloud, FusionError> {
    mask_surface_points_with(mask, stride, Exec::default())
}

pub fn mask_surface_points_with(
    mask: &VolumeGrid,
    stride: usize,
    exec: Exec,
) -> Result<PointCloud, FusionError> {
    let [nx, ny, nz] = mask.dims;
    let fg = |i: isize, j: isize, k: isize| -> bool {
        if i < 0 || j < 0 || k < 0 || i >= nx as isize || j >= ny as isize || k >= nz as isize {
            return false;
        }
        mask.get(i as usize, j as usize, k as usize) != 0.0
    };
    let slices: Vec<Vec<usize>> = exec.map_range(nz, |k| {
        let mut out = Vec::new();
        let k = k as isize;
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                if !fg(i, j, k) {
                    continue;
                }
                let boundary = !fg(i - 1, j, k)
                    || !fg(i + 1, j, k)
                    || !fg(i, j - 1, k)
                    || !fg(i, j + 1, k)
                    || !fg(i, j, k - 1)
                    || !fg(i, j, k + 1);
                if boundary {
                    out.push(mask.offset(i as usize, j as usize, k as usize));
                }
            }
        }
        out
    });
    let boundary: Vec<usize> = slices.into_iter().flatten().collect();
    if boundary.is_empty() {
        return Err(FusionError::EmptyMask);
    }
    let stride = stride.max(1);
    let points = boundary
        .iter()
        .step_by(stride)
        .map(|&o| {
            let [i, j, k] = mask.index_of(o);
            mask.world([i as f64, j as f64, k as f64])
        })
        .collect();
    Ok(PointCloud::new(points))
}
