use nalgebra::{Matrix3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::fusion::{VolumeGrid, VoxelType, BACKGROUND_HU};
use crate::geometry::{Point3, RigidTransform, Vec3};

pub const CORTEX_HU: f32 = 1200.0;
pub const MARROW_HU: f32 = 100.0;
pub const SOFT_TISSUE_HU: f32 = 40.0;

/// Volumetric phantom parameters: a tapered elliptic cortical tube along x
/// wrapped in soft tissue, bisected by the plane through its axis normal to y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// Grid size; `dims[1]` must be odd so the bisection plane is a node layer.
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Outer semi-axes (y, z) of the cortex at the proximal end (mm).
    pub outer_radii: [f64; 2],
    pub cortex_thickness: f64,
    /// Fractional radius reduction from proximal to distal end.
    pub taper: f64,
    /// Radius of an off-axis cortical knob at the distal end, which breaks
    /// the tube's near-symmetries (mm). Zero disables it.
    pub knob_radius: f64,
    /// Rise of the tube axis at mid-length over its ends, along z (mm); the
    /// bowed axis is centred on the grid.
    pub bow_mm: f64,
    /// Truth displacement of the moving half; random when absent.
    pub truth: Option<RigidTransform>,
    pub max_rotation_deg: f64,
    pub max_translation_mm: f64,
    pub fiducials: usize,
    /// Pick noise on fiducial positions (mm).
    pub fiducial_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: [61, 41, 41],
            spacing: [1.0, 1.0, 1.0],
            outer_radii: [13.0, 10.0],
            cortex_thickness: 3.0,
            taper: 0.3,
            knob_radius: 8.0,
            bow_mm: 8.0,
            truth: None,
            max_rotation_deg: 15.0,
            max_translation_mm: 30.0,
            fiducials: 6,
            fiducial_sigma: 0.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.dims.iter().any(|&d| d < 5) || self.dims[1].is_multiple_of(2) {
            return bad("phantom dims must be >= 5 with an odd y count");
        }
        if self.spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("phantom spacing must be positive");
        }
        let [ry, rz] = self.outer_radii;
        if !(self.cortex_thickness > 0.0
            && ry > self.cortex_thickness
            && rz > self.cortex_thickness)
        {
            return bad("cortex thickness must be positive and below both radii");
        }
        if !self.bow_mm.is_finite() {
            return bad("bow must be finite");
        }
        if !(self.knob_radius >= 0.0 && self.knob_radius.is_finite()) {
            return bad("knob radius must be >= 0");
        }
        if !(0.0..1.0).contains(&self.taper) {
            return bad("taper must lie in [0, 1)");
        }
        if self.fiducials < 3 {
            return bad("need at least 3 fiducials");
        }
        if !(self.fiducial_sigma >= 0.0
            && self.max_rotation_deg >= 0.0
            && self.max_translation_mm >= 0.0)
        {
            return bad("negative noise or displacement bound");
        }
        Ok(())
    }

    fn extent(&self, axis: usize) -> f64 {
        (self.dims[axis] - 1) as f64 * self.spacing[axis]
    }

    /// Tube start/end along x and axis position (y, z).
    fn layout(&self) -> (f64, f64, f64, f64) {
        let margin = 0.1 * self.extent(0);
        (
            margin,
            self.extent(0) - margin,
            0.5 * self.extent(1),
            0.5 * self.extent(2),
        )
    }

    fn radii(&self, x: f64) -> Option<[f64; 2]> {
        let (x0, x1, _, _) = self.layout();
        if x < x0 || x > x1 {
            return None;
        }
        let s = 1.0 - self.taper * (x - x0) / (x1 - x0);
        Some([self.outer_radii[0] * s, self.outer_radii[1] * s])
    }

    /// Height of the tube axis at `x`; the axis bows within the bisection plane.
    fn axis_z(&self, x: f64) -> f64 {
        let (x0, x1, _, cz) = self.layout();
        let s = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        cz + self.bow_mm * (4.0 * s * (1.0 - s) - 0.5)
    }

    /// Knob centre: on the distal rim, below the bisection plane.
    fn knob_centre(&self) -> Point3 {
        let (_, x1, cy, _) = self.layout();
        let r = self.outer_radii.map(|v| v * (1.0 - self.taper));
        Point3::new(x1, cy - 0.5 * r[0], self.axis_z(x1) + 0.5 * r[1])
    }

    /// Analytic HU at a point of the unsplit phantom frame.
    pub fn hu(&self, p: &Point3) -> f32 {
        if self.knob_radius > 0.0 && (p - self.knob_centre()).norm() <= self.knob_radius {
            return CORTEX_HU;
        }
        let (_, _, cy, _) = self.layout();
        let (dy, dz) = (p.y - cy, p.z - self.axis_z(p.x));
        let inside = |ry: f64, rz: f64| (dy / ry).powi(2) + (dz / rz).powi(2) <= 1.0;
        let soft = 4.0;
        let r = self.outer_radii;
        let envelope = if inside(r[0] + soft, r[1] + soft) {
            SOFT_TISSUE_HU
        } else {
            BACKGROUND_HU
        };
        let Some([ry, rz]) = self.radii(p.x) else {
            return envelope;
        };
        let t = self.cortex_thickness;
        if inside(ry - t, rz - t) {
            MARROW_HU
        } else if inside(ry, rz) {
            CORTEX_HU
        } else {
            envelope
        }
    }
}

/// Split phantom with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub spec: PhantomSpec,
    /// Unsplit phantom on the fixed lattice.
    pub original: VolumeGrid,
    /// Nodes with `j <= mid`, in the original frame.
    pub fixed: VolumeGrid,
    /// Nodes with `j >= mid`, expressed in the displaced scanner frame.
    pub moving: VolumeGrid,
    /// Maps moving coordinates onto fixed coordinates.
    pub truth: RigidTransform,
    pub mid: usize,
    /// Cut-face fiducial picks, paired, in each half's frame.
    pub fiducials_fixed: Vec<Point3>,
    pub fiducials_moving: Vec<Point3>,
    /// Voxels of the original at cortical density.
    pub cortical_voxels: usize,
}

fn random_rotation(rng: &mut ChaCha8Rng, max_deg: f64) -> Matrix3<f64> {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(-1.0..=1.0) * max_deg.to_radians();
    *nalgebra::Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::from(axis)), angle).matrix()
}

/// Voxelizes the phantom, splits it along the bisection layer and displaces
/// the second half by the truth transform.
///
/// The displaced half keeps the same lattice nodes, re-expressed in the
/// moving frame, so resampling it through the truth transform lands on
/// its nodes.
pub fn render_phantom(spec: &PhantomSpec) -> Result<Phantom, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let truth = match &spec.truth {
        Some(t) => *t,
        None => {
            let r = random_rotation(&mut rng, spec.max_rotation_deg);
            let dir: [f64; 3] = UnitSphere.sample(&mut rng);
            let t = Vec3::from(dir) * rng.random_range(0.0..=spec.max_translation_mm);
            RigidTransform::from_parts(r, t).map_err(SynthError::Geometry)?
        }
    };
    let [nx, ny, nz] = spec.dims;
    let mid = ny / 2;
    let mut original = VolumeGrid::filled(spec.dims, spec.spacing, Point3::origin(), 0.0);
    original.voxel_type = VoxelType::Short;
    for o in 0..original.len() {
        let [i, j, k] = original.index_of(o);
        original.voxels[o] = spec.hu(&original.world([i as f64, j as f64, k as f64]));
    }
    let cortical_voxels = original.voxels.iter().filter(|&&v| v == CORTEX_HU).count();

    let slab = |j0: usize, j1: usize| -> Vec<f32> {
        let mut out = Vec::with_capacity(nx * (j1 - j0 + 1) * nz);
        for k in 0..nz {
            for j in j0..=j1 {
                for i in 0..nx {
                    out.push(original.get(i, j, k));
                }
            }
        }
        out
    };
    let fixed = VolumeGrid {
        dims: [nx, mid + 1, nz],
        voxels: slab(0, mid),
        ..original.clone()
    };
    let inverse = truth.inverse();
    let moving = VolumeGrid {
        dims: [nx, ny - mid, nz],
        origin: inverse.apply_point(&original.world([0.0, mid as f64, 0.0])),
        direction: inverse.rotation() * original.direction,
        voxels: slab(mid, ny - 1),
        ..original.clone()
    };

    // Fiducials on the cut face, alternating between the two cortical strips.
    let (x0, x1, cy, _) = spec.layout();
    let noise = Normal::new(0.0, spec.fiducial_sigma.max(f64::MIN_POSITIVE)).expect("sigma");
    let mut fiducials_fixed = Vec::with_capacity(spec.fiducials);
    let mut fiducials_moving = Vec::with_capacity(spec.fiducials);
    for f in 0..spec.fiducials {
        let x = x0 + (x1 - x0) * (0.1 + 0.8 * f as f64 / (spec.fiducials - 1) as f64);
        let rz = spec.radii(x).expect("inside tube")[1];
        let side = if f % 2 == 0 { 1.0 } else { -1.0 };
        let p = Point3::new(
            x,
            cy,
            spec.axis_z(x) + side * (rz - 0.5 * spec.cortex_thickness),
        );
        let mut jitter = || {
            if spec.fiducial_sigma > 0.0 {
                Vec3::new(noise.sample(&mut rng), 0.0, noise.sample(&mut rng))
            } else {
                Vec3::zeros()
            }
        };
        fiducials_fixed.push(p + jitter());
        let q = p + jitter();
        fiducials_moving.push(inverse.apply_point(&q));
    }

    Ok(Phantom {
        spec: spec.clone(),
        original,
        fixed,
        moving,
        truth,
        mid,
        fiducials_fixed,
        fiducials_moving,
        cortical_voxels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_share_the_seam_layer() {
        let p = render_phantom(&PhantomSpec {
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(p.fixed.dims[1] + p.moving.dims[1], p.original.dims[1] + 1);
        // A moving node maps back onto the original lattice node.
        let w = p.truth.apply_point(&p.moving.world([7.0, 0.0, 20.0]));
        let q = p.original.world([7.0, p.mid as f64, 20.0]);
        assert!((w - q).norm() < 1e-9);
        assert_eq!(p.moving.get(7, 0, 20), p.original.get(7, p.mid, 20));
        assert!(p.cortical_voxels > 0);
    }

    #[test]
    fn same_seed_same_phantom() {
        let s = PhantomSpec {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(render_phantom(&s).unwrap(), render_phantom(&s).unwrap());
    }
}
