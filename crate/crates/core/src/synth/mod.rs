//! Synthetic specimens with exact ground truth: curved bisection edges,
//! dissection planes, laboratory measurements, phantom CT halves and
//! rendered histology slides.
//!
//! Truth edges are the cubic fits of their own markup samples, so the
//! pipeline's fit reproduces them exactly and any error downstream is
//! attributable to plane assignment alone.

mod cubic;
mod phantom;
mod slide;

pub use cubic::truth_edge;
pub use phantom::{render_phantom, Phantom, PhantomSpec, CORTEX_HU, MARROW_HU, SOFT_TISSUE_HU};
pub use slide::render_slide;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Exec;
use crate::geometry::{
    fit_parametric_cubic, FiducialReference, MarkupCurve, ParametricCubic, Point3, Vec3,
};
use crate::histology::HistologySlide;
use crate::plane::{
    assign_all_planes, solved_planes, DissectionMeasurement, DissectionPlane, PlaneError,
};
use crate::stats::{compute_estimates, PhysicalWidths, SlabEstimate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("plane {index}: {source}")]
    Pipeline { index: u32, source: PlaneError },
    #[error(transparent)]
    Stats(#[from] crate::stats::StatsError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Straight parallel edges 10 mm apart, fiducial at the start of edge a.
    ParallelLines,
    /// Concentric arcs bounding the flat face of a bent half-cylinder.
    HalfCylinder,
    /// Two independently bent and twisted 3D edges.
    BentPrism,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::ParallelLines, Shape::HalfCylinder, Shape::BentPrism];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub shape: Shape,
    /// Edge length for lines and prisms, arc radius for the half-cylinder (mm).
    pub extent_mm: f64,
    pub cuts: usize,
    /// Caliper noise on each slab width; accumulates along the measurements (mm).
    pub measurement_sigma: f64,
    /// Noise on histology landmark picks (mm).
    pub landmark_sigma: f64,
    pub seed: u64,
    pub points_per_curve: usize,
    /// Explicit cut parameters on edge a; random when absent.
    pub cut_params: Option<Vec<f64>>,
}

impl SynthParams {
    pub fn new(shape: Shape, cuts: usize, seed: u64) -> Self {
        Self {
            shape,
            extent_mm: match shape {
                Shape::HalfCylinder => 40.0,
                _ => 100.0,
            },
            cuts,
            measurement_sigma: 0.0,
            landmark_sigma: 0.0,
            seed,
            points_per_curve: 10,
            cut_params: None,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidParams(m.to_string()));
        if self.cuts < 1 {
            return bad("cut count must be >= 1");
        }
        if !(self.extent_mm > 0.0 && self.extent_mm.is_finite()) {
            return bad("extent must be positive");
        }
        if !(self.measurement_sigma >= 0.0 && self.landmark_sigma >= 0.0) {
            return bad("noise sigma must be >= 0");
        }
        if self.points_per_curve < 4 {
            return bad("need at least 4 points per curve");
        }
        if let Some(c) = &self.cut_params {
            if c.len() != self.cuts || c.windows(2).any(|w| w[1] <= w[0]) {
                return bad("cut parameters must be increasing, one per cut");
            }
            if c.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return bad("cut parameters must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Ground truth of one generated specimen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpecimen {
    pub params: SynthParams,
    pub curve_a: ParametricCubic,
    pub curve_b: ParametricCubic,
    pub curve_edge: ParametricCubic,
    pub markup_a: MarkupCurve,
    pub markup_b: MarkupCurve,
    pub markup_edge: MarkupCurve,
    pub f_ref: FiducialReference,
    pub planes: Vec<DissectionPlane>,
    /// Noise-free measurements.
    pub true_measurements: Vec<DissectionMeasurement>,
    /// Measurements as recorded (with caliper noise when sigma > 0).
    pub measurements: Vec<DissectionMeasurement>,
    /// True slab widths keyed by the closing cut.
    pub slabs: Vec<SlabEstimate>,
}

impl SyntheticSpecimen {
    pub fn physical(&self, index: u32) -> PhysicalWidths {
        self.slabs
            .iter()
            .find(|s| s.index == index)
            .map(|s| PhysicalWidths {
                d1: Some(s.d1),
                d2: s.d2,
                d3: Some(s.d3),
            })
            .unwrap_or_default()
    }
}

fn coeffs(x: [f64; 4], y: [f64; 4], z: [f64; 4]) -> ParametricCubic {
    ParametricCubic::from_coefficients([x, y, z])
}

fn arc_cubic(radius: f64, sweep: f64, z: f64) -> ParametricCubic {
    // Least-squares cubic through a dense sampling of the arc.
    let samples: Vec<Point3> = (0..64)
        .map(|i| {
            let th = sweep * i as f64 / 63.0;
            Point3::new(radius * th.sin(), radius * (1.0 - th.cos()), z)
        })
        .collect();
    let design = nalgebra::DMatrix::from_fn(64, 4, |r, c| (r as f64 / 63.0).powi(c as i32));
    let svd = design.svd(true, true);
    let mut out = [[0.0; 4]; 3];
    for (a, row) in out.iter_mut().enumerate() {
        let rhs = nalgebra::DVector::from_iterator(64, samples.iter().map(|p| p[a]));
        row.copy_from_slice(svd.solve(&rhs, 1e-14).unwrap().as_slice());
    }
    ParametricCubic::from_coefficients(out)
}

fn seed_curves(shape: Shape, extent: f64, rng: &mut ChaCha8Rng) -> [ParametricCubic; 3] {
    match shape {
        Shape::ParallelLines => [
            coeffs([0., extent, 0., 0.], [0.; 4], [0.; 4]),
            coeffs([0., extent, 0., 0.], [10., 0., 0., 0.], [0.; 4]),
            coeffs([0., extent, 0., 0.], [5., 0., 0., 0.], [3., 0., 0., 0.]),
        ],
        Shape::HalfCylinder => {
            let sweep = rng.random_range(1.2..1.8);
            let a = arc_cubic(extent, sweep, 0.0);
            // Concentric arc 12 mm further out, sharing the centre (0, R).
            let outer = arc_cubic(extent + 12.0, sweep, 0.0);
            let b = outer.transformed(&crate::geometry::RigidTransform::translation_only(
                Vec3::new(0.0, -12.0, 0.0),
            ));
            let mid = arc_cubic(extent + 6.0, sweep, 8.0).transformed(
                &crate::geometry::RigidTransform::translation_only(Vec3::new(0.0, -6.0, 0.0)),
            );
            [a, b, mid]
        }
        Shape::BentPrism => {
            let mut j = |s: f64| rng.random_range(-s..s);
            let width = 10.0 + j(4.0).abs();
            let a = coeffs(
                [0., extent, j(5.), j(5.)],
                [0., j(8.), 15. + j(8.), j(6.)],
                [0., j(5.), j(6.), 8. + j(4.)],
            );
            let b = coeffs(
                [j(2.), extent + j(5.), j(5.), j(5.)],
                [width, j(8.), 15. + j(8.), j(6.)],
                [j(2.), j(5.), j(6.), 8. + j(4.)],
            );
            let mut e = [[0.0; 4]; 3];
            for (ax, row) in e.iter_mut().enumerate() {
                for (p, v) in row.iter_mut().enumerate() {
                    *v = 0.5 * (a.coefficients[ax][p] + b.coefficients[ax][p]);
                }
            }
            e[2][0] += 6.0;
            [a, b, ParametricCubic::from_coefficients(e)]
        }
    }
}

/// Dense-scan bisection crossing of `curve` with a plane, nearest its origin.
fn reference_crossing(plane: &DissectionPlane, curve: &ParametricCubic) -> Option<Point3> {
    const N: usize = 20_000;
    let s = |t: f64| plane.signed_distance(&curve.eval(t));
    let at = |i: usize| -0.05 + 1.1 * i as f64 / (N - 1) as f64;
    let mut best: Option<(f64, f64, f64)> = None;
    for i in 0..N - 1 {
        let (a, b) = (at(i), at(i + 1));
        if (s(a) < 0.0) != (s(b) < 0.0) || s(a) == 0.0 {
            let d = (curve.eval(a) - plane.origin).norm();
            if best.is_none_or(|x| d < x.0) {
                best = Some((d, a, b));
            }
        }
    }
    let (_, mut a, mut b) = best?;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (s(m) < 0.0) == (s(a) < 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    Some(curve.eval(0.5 * (a + b)))
}

/// Generates a specimen; identical parameters give identical output.
pub fn generate(params: &SynthParams) -> Result<SyntheticSpecimen, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds = seed_curves(params.shape, params.extent_mm, &mut rng);
    let n = params.points_per_curve;
    let (curve_a, markup_a) = truth_edge("spline_a", &seeds[0], n)?;
    let (curve_b, markup_b) = truth_edge("spline_b", &seeds[1], n)?;
    let (curve_edge, markup_edge) = truth_edge("spline_edge", &seeds[2], n)?;

    let f_ref = match params.shape {
        Shape::ParallelLines => FiducialReference::new("f_ref", curve_a.eval(0.0)),
        _ => {
            let back = curve_a.derivative(0.0).normalize();
            FiducialReference::new("f_ref", curve_a.eval(0.0) - back * 12.0)
        }
    };

    let cut_params: Vec<f64> = match &params.cut_params {
        Some(c) => c.clone(),
        None => {
            // Evenly spread cuts with jitter, keeping slabs at least a few mm wide.
            let (lo, hi) = (0.12, 0.92);
            let step = (hi - lo) / params.cuts as f64;
            (0..params.cuts)
                .map(|i| lo + step * (i as f64 + 0.5) + rng.random_range(-0.3..0.3) * step)
                .collect()
        }
    };

    let mut planes = Vec::with_capacity(params.cuts);
    let mut true_measurements = Vec::with_capacity(params.cuts);
    for (i, &ta) in cut_params.iter().enumerate() {
        let skew = match params.shape {
            Shape::ParallelLines | Shape::HalfCylinder => 0.0,
            Shape::BentPrism => rng.random_range(-0.01..0.01),
        };
        let tb = ta + skew;
        let index = i as u32 + 1;
        let pa = curve_a.eval(ta);
        let pb = curve_b.eval(tb);
        let mut plane = DissectionPlane::from_anchors(
            index,
            pa,
            pb,
            &curve_a.derivative(ta),
            &curve_b.derivative(tb),
        )
        .map_err(|source| SynthError::Pipeline { index, source })?;
        plane.param_a = ta;
        plane.param_b = tb;
        planes.push(plane);
        true_measurements.push(DissectionMeasurement::new(
            index,
            (pa - f_ref.position).norm(),
            (pb - f_ref.position).norm(),
        ));
    }

    // Slab widths are measured with the caliper; their errors accumulate
    // along the distances from the fiducial.
    let mut measurements = true_measurements.clone();
    if params.measurement_sigma > 0.0 {
        let normal = Normal::new(0.0, params.measurement_sigma).expect("sigma");
        let (mut ea, mut eb) = (0.0, 0.0);
        for m in measurements.iter_mut() {
            ea += normal.sample(&mut rng);
            eb += normal.sample(&mut rng);
            m.d_a += ea;
            m.d_b += eb;
        }
    }

    let mut slabs = Vec::new();
    let crossings: Vec<Option<Point3>> = planes
        .iter()
        .map(|p| reference_crossing(p, &curve_edge))
        .collect();
    for (i, w) in planes.windows(2).enumerate() {
        slabs.push(SlabEstimate {
            index: w[1].index,
            d1: (w[1].anchor_a - w[0].anchor_a).norm(),
            d2: match (crossings[i], crossings[i + 1]) {
                (Some(x), Some(y)) => Some((y - x).norm()),
                _ => None,
            },
            d3: (w[1].anchor_b - w[0].anchor_b).norm(),
        });
    }

    Ok(SyntheticSpecimen {
        params: params.clone(),
        markup_a,
        markup_b,
        markup_edge,
        curve_a,
        curve_b,
        curve_edge,
        f_ref,
        planes,
        true_measurements,
        measurements,
        slabs,
    })
}

/// Fit, plane assignment and slab estimates from a specimen's markups.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub curves: [ParametricCubic; 3],
    pub planes: Vec<DissectionPlane>,
    pub estimates: Vec<SlabEstimate>,
}

pub fn run_pipeline(
    markups: [&MarkupCurve; 3],
    f_ref: &FiducialReference,
    measurements: &[DissectionMeasurement],
) -> Result<PipelineOutput, SynthError> {
    let a = fit_parametric_cubic(markups[0])?;
    let b = fit_parametric_cubic(markups[1])?;
    let e = fit_parametric_cubic(markups[2])?;
    let outcomes = assign_all_planes(&a, &b, f_ref, measurements)
        .map_err(|source| SynthError::Pipeline { index: 0, source })?;
    if let Some(o) = outcomes.iter().find(|o| o.result.is_err()) {
        return Err(SynthError::Pipeline {
            index: o.index,
            source: o.result.clone().unwrap_err(),
        });
    }
    let planes = solved_planes(&outcomes);
    let estimates = compute_estimates(&planes, Some(&e))?;
    Ok(PipelineOutput {
        curves: [a, b, e],
        planes,
        estimates,
    })
}

impl SyntheticSpecimen {
    pub fn markups(&self) -> [&MarkupCurve; 3] {
        [&self.markup_a, &self.markup_b, &self.markup_edge]
    }

    pub fn run_pipeline(&self) -> Result<PipelineOutput, SynthError> {
        run_pipeline(self.markups(), &self.f_ref, &self.measurements)
    }

    /// Histology slides rendered from the truth planes.
    pub fn render_slides(&self, shrink: f64) -> Vec<HistologySlide> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed ^ 0x5eed_511de);
        self.planes
            .iter()
            .map(|p| render_slide(p, shrink, self.params.landmark_sigma, &mut rng).0)
            .collect()
    }
}

/// Markup with every control point displaced uniformly within `+-amplitude` mm per axis.
pub fn jitter_markup(m: &MarkupCurve, amplitude: f64, rng: &mut impl Rng) -> MarkupCurve {
    MarkupCurve::new(
        m.label.clone(),
        m.points
            .iter()
            .map(|p| {
                p + Vec3::new(
                    rng.random_range(-amplitude..=amplitude),
                    rng.random_range(-amplitude..=amplitude),
                    rng.random_range(-amplitude..=amplitude),
                )
            })
            .collect(),
    )
}

/// Slab-width errors pooled over a batch of noisy specimens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudy {
    /// `d_est - d_true` for d1 and d3 of every slab of every solved specimen.
    pub errors: Vec<f64>,
    pub specimens: usize,
    /// Specimens whose noisy measurements have no consistent plane set,
    /// e.g. a distance pushed beyond the reach of its edge.
    pub unsolved: usize,
}

/// Runs the pipeline on one noisy specimen per seed. Generator errors abort
/// the study; pipeline refusals caused by the noise are counted instead.
pub fn noise_propagation(
    base: &SynthParams,
    seeds: &[u64],
    exec: Exec,
) -> Result<NoiseStudy, SynthError> {
    let runs = exec.map(seeds, |&seed| -> Result<Option<Vec<f64>>, SynthError> {
        let params = SynthParams {
            seed,
            ..base.clone()
        };
        let s = generate(&params)?;
        let Ok(out) = s.run_pipeline() else {
            return Ok(None);
        };
        Ok(Some(
            out.estimates
                .iter()
                .zip(&s.slabs)
                .flat_map(|(e, t)| [e.d1 - t.d1, e.d3 - t.d3])
                .collect(),
        ))
    });
    let mut study = NoiseStudy {
        errors: Vec::new(),
        specimens: seeds.len(),
        unsolved: 0,
    };
    for r in runs {
        match r? {
            Some(e) => study.errors.extend(e),
            None => study.unsolved += 1,
        }
    }
    Ok(study)
}
