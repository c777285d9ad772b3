//! Worked examples checked against independent oracles computed here.

#![allow(clippy::needless_range_loop)]

use colocate::fusion::{
    fuse_halves, mask_surface_points, threshold_segment, FuseOptions, DEFAULT_THRESHOLD_HU,
};
use colocate::geometry::{fit_parametric_cubic, MarkupCurve, ParametricCubic, Vec2};
use colocate::histology::{fit_inplane_similarity, place_slide, plane_pose};
use colocate::io::{read_measurements, write_case, CoordinateSystem};
use colocate::plane::solve_intersection;
use colocate::stats::{error_report, summarize, ValidationRecord};
use colocate::synth::{
    generate, render_phantom, render_slide, PhantomSpec, Shape, SynthParams, CORTEX_HU,
};
use colocate::{Exec, FiducialReference, Point3, RigidTransform, Vec3};
use nalgebra::{DMatrix, DVector, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn chord_params(points: &[Point3]) -> Vec<f64> {
    let mut acc = vec![0.0];
    for w in points.windows(2) {
        acc.push(acc.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *acc.last().unwrap();
    acc.iter().map(|s| s / total).collect()
}

/// Per-axis least squares through a QR factorization of the Vandermonde matrix.
fn lsq_cubic(points: &[Point3]) -> [[f64; 4]; 3] {
    let t = chord_params(points);
    let v = DMatrix::from_fn(points.len(), 4, |r, c| t[r].powi(c as i32));
    let qr = v.qr();
    let mut out = [[0.0; 4]; 3];
    for (axis, row) in out.iter_mut().enumerate() {
        let rhs = DVector::from_iterator(points.len(), points.iter().map(|p| p[axis]));
        let qtb = qr.q().transpose() * rhs;
        let x = qr.r().solve_upper_triangular(&qtb).unwrap();
        row.copy_from_slice(x.as_slice());
    }
    out
}

fn poly(c: &[f64; 4], t: f64) -> f64 {
    c[0] + t * (c[1] + t * (c[2] + t * c[3]))
}

#[test]
fn fit_matches_independent_least_squares() {
    let points: Vec<Point3> = (0..8)
        .map(|k| {
            let t = k as f64 / 7.0;
            Point3::new(10.0 * t, 5.0 * t * t, 2.0 * t * t * t)
        })
        .collect();
    let fit = fit_parametric_cubic(&MarkupCurve::new("c", points.clone())).unwrap();
    let oracle = lsq_cubic(&points);
    for axis in 0..3 {
        for p in 0..4 {
            assert!((fit.coefficients[axis][p] - oracle[axis][p]).abs() < 1e-9);
        }
    }
    let at = fit.eval(0.37);
    for axis in 0..3 {
        assert!((at[axis] - poly(&oracle[axis], 0.37)).abs() < 1e-9);
    }
    for (k, t) in chord_params(&points).iter().enumerate() {
        assert!((fit.chord_params[k] - t).abs() < 1e-12);
    }
}

fn random_fitted_cubic(rng: &mut ChaCha8Rng) -> ParametricCubic {
    let c: [[f64; 4]; 3] =
        std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-40.0..40.0)));
    let seed = ParametricCubic::from_coefficients(c);
    let points = (0..10).map(|i| seed.eval(i as f64 / 9.0)).collect();
    fit_parametric_cubic(&MarkupCurve::new("r", points)).unwrap()
}

#[test]
fn tangent_matches_central_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    let mut checked = 0;
    for _ in 0..200 {
        let c = random_fitted_cubic(&mut rng);
        let t = rng.random_range(0.0..1.0);
        let d = c.derivative(t);
        if d.norm() <= 0.1 {
            continue;
        }
        let fd = (c.eval(t + h) - c.eval(t - h)) / (2.0 * h);
        assert!((d - fd).norm() / d.norm() < 1e-5, "t={t}");
        checked += 1;
    }
    assert!(checked > 150);
}

#[test]
fn compose_matches_matrix_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let mut random = || {
            let axis = Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5);
            let t = Vec3::new(rng.random(), rng.random(), rng.random()) * 100.0;
            RigidTransform::from_axis_angle(&axis, rng.random_range(-3.0..3.0), t)
        };
        let (a, b) = (random(), random());
        let m: Matrix4<f64> = a.matrix() * b.matrix();
        assert!((a.compose(&b).matrix() - m).amax() < 1e-12);
    }
}

#[test]
fn quarter_circle_root_matches_dense_scan() {
    let r = 50.0;
    let points: Vec<Point3> = (0..10)
        .map(|i| {
            let th = std::f64::consts::FRAC_PI_2 * i as f64 / 9.0;
            Point3::new(r * th.sin(), r * (1.0 - th.cos()), 0.0)
        })
        .collect();
    let c = fit_parametric_cubic(&MarkupCurve::new("q", points)).unwrap();
    let f = FiducialReference::new("f", c.eval(0.0));
    let d = 30.0;
    let s = solve_intersection(&c, &f, d, 0.0).unwrap();

    let n = 10_000_000;
    let g = |t: f64| ((c.eval(t) - f.position).norm() - d).abs();
    let best = (0..=n)
        .map(|i| i as f64 / n as f64)
        .min_by(|a, b| g(*a).total_cmp(&g(*b)))
        .unwrap();
    assert!((s.t - best).abs() < 1e-6, "{} vs {best}", s.t);
}

#[test]
fn parallel_lines_three_cuts() {
    let params = SynthParams {
        cut_params: Some(vec![0.3, 0.5, 0.8]),
        ..SynthParams::new(Shape::ParallelLines, 3, 0)
    };
    let s = generate(&params).unwrap();
    for (m, d) in s.measurements.iter().zip([30.0, 50.0, 80.0]) {
        // Edge b runs 10 mm off the fiducial, so its distance is to the corner.
        assert!((m.d_a - d).abs() < 1e-9);
        assert!((m.d_b - (d * d + 100.0f64).sqrt()).abs() < 1e-9);
    }
    let out = s.run_pipeline().unwrap();
    for (p, x) in out.planes.iter().zip([30.0, 50.0, 80.0]) {
        assert!((p.origin - Point3::new(x, 5.0, 0.0)).norm() < 1e-9);
        assert!((p.normal.x.abs() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn half_cylinder_six_cuts() {
    let s = generate(&SynthParams::new(Shape::HalfCylinder, 6, 4)).unwrap();
    let out = s.run_pipeline().unwrap();
    assert_eq!(out.planes.len(), 6);
    for (p, t) in out.planes.iter().zip(&s.planes) {
        let angle = p
            .normal
            .cross(&t.normal)
            .norm()
            .atan2(p.normal.dot(&t.normal));
        assert!(angle < 1e-6);
        assert!((p.anchor_a - t.anchor_a).norm() < 1e-6);
        assert!((p.anchor_b - t.anchor_b).norm() < 1e-6);
    }
    for (e, t) in out.estimates.iter().zip(&s.slabs) {
        assert!((e.d1 - t.d1).abs() < 1e-6 && (e.d3 - t.d3).abs() < 1e-6);
        if let (Some(a), Some(b)) = (e.d2, t.d2) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn plane_pose_is_a_proper_frame() {
    let s = generate(&SynthParams::new(Shape::BentPrism, 5, 21)).unwrap();
    for p in &s.planes {
        let pose = plane_pose(p);
        let r = pose.rotation();
        assert!((r.transpose() * r - nalgebra::Matrix3::identity()).amax() < 1e-12);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((pose.apply_vector(&Vec3::x()) - p.u_axis).norm() < 1e-12);
        assert!((pose.apply_vector(&Vec3::y()) - p.v_axis).norm() < 1e-12);
    }
}

#[test]
fn similarity_fit_beats_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let noise = Normal::new(0.0, 0.3).unwrap();
    for _ in 0..3 {
        let s = rng.random_range(0.6..1.9);
        let tau = Vec2::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
        let image: Vec<Vec2> = (0..3)
            .map(|_| Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)))
            .collect();
        let target: Vec<Vec2> = image
            .iter()
            .map(|p| p * s + tau + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        let fit = fit_inplane_similarity(&image, &target).unwrap();
        let sse = |s: f64, tx: f64, ty: f64| -> f64 {
            image
                .iter()
                .zip(&target)
                .map(|(p, q)| (p.x * s + tx - q.x).powi(2) + (p.y * s + ty - q.y).powi(2))
                .sum()
        };
        let best = fit.residual_rms.powi(2) * 3.0;
        for si in 0..=1500 {
            let sc = 0.5 + si as f64 * 1e-3;
            for xi in 0..=200 {
                let tx = -10.0 + xi as f64 * 0.1;
                for yi in 0..=200 {
                    let ty = -10.0 + yi as f64 * 0.1;
                    assert!(sse(sc, tx, ty) >= best - 1e-9);
                }
            }
        }
    }
}

#[test]
fn rendered_slides_placed_on_truth() {
    let s = generate(&SynthParams::new(Shape::BentPrism, 4, 31)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for plane in &s.planes {
        let shrink = 0.8;
        let (slide, truth) = render_slide(plane, shrink, 0.0, &mut rng);
        let placed = place_slide(&slide, plane).unwrap();
        assert!((placed.in_plane.scale - 1.0 / shrink).abs() < 1e-9);
        let mut worst: f64 = 0.0;
        for row in 0..slide.height {
            for col in 0..slide.width {
                let uv = truth.apply(&slide.image_mm(col as f64, row as f64));
                let expected = plane.to_world(uv.x, uv.y);
                let got = placed.pixel_world(col as f64, row as f64);
                worst = worst.max((got - expected).norm());
                assert!(plane.signed_distance(&got).abs() < 1e-9);
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }
}

#[test]
fn error_report_matches_direct_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let dist = Normal::new(0.19, 1.8).unwrap();
    let diffs: Vec<f64> = (0..114).map(|_| dist.sample(&mut rng)).collect();
    let records: Vec<ValidationRecord> = diffs
        .iter()
        .enumerate()
        .map(|(i, &d)| ValidationRecord {
            dissection_index: i as u32 + 1,
            d1_est: 10.0 + d,
            d2_est: None,
            d3_est: 0.0,
            d1_phy: Some(10.0),
            d2_phy: None,
            d3_phy: None,
            curved_cut: false,
        })
        .collect();
    let report = error_report(&records, false).unwrap();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // Differences are formed from the records, so compare with a small
    // absolute margin for the est - phy rounding.
    let stats = summarize(&report.differences);
    assert_eq!(report.n, 114);
    assert!((report.mean - mean).abs() < 1e-13);
    assert!((report.stdev - var.sqrt()).abs() < 1e-13);
    assert!((stats.mean.unwrap() - report.mean).abs() <= 1e-12 * report.mean.abs());
    assert_eq!(report.d13.n, 114);
    assert_eq!(report.d2.n, 0);
}

#[test]
fn threshold_counts_cortex() {
    let p = render_phantom(&PhantomSpec::default()).unwrap();
    let mask = threshold_segment(&p.original, DEFAULT_THRESHOLD_HU);
    let count = mask.voxels.iter().filter(|&&v| v != 0.0).count();
    let direct = p
        .original
        .voxels
        .iter()
        .filter(|&&v| v == CORTEX_HU)
        .count();
    assert_eq!(count, p.cortical_voxels);
    assert_eq!(count, direct);
}

#[test]
fn half_phantom_boundary_lies_on_analytic_surface() {
    let p = render_phantom(&PhantomSpec::default()).unwrap();
    let mask = threshold_segment(&p.fixed, DEFAULT_THRESHOLD_HU);
    let cloud = mask_surface_points(&mask, 1).unwrap();
    let spacing = p.spec.spacing;
    let diagonal = spacing.iter().map(|s| s * s).sum::<f64>().sqrt();
    let cut_y = p.original.world([0.0, p.mid as f64, 0.0]).y;
    let far = p.original.world(p.original.dims.map(|d| (d - 1) as f64));
    let cortex = |q: &Point3| p.spec.hu(q) >= DEFAULT_THRESHOLD_HU as f32;
    for pt in &cloud.points {
        assert!(cortex(pt));
        // The cut face and the grid faces truncate the bone.
        let on_grid_face = (0..3).any(|a| pt[a] <= spacing[a] || far[a] - pt[a] <= spacing[a]);
        if (pt.y - cut_y).abs() <= spacing[1] || on_grid_face {
            continue;
        }
        // Walk towards every lattice neighbour; the analytic boundary must be
        // crossed within one voxel diagonal.
        let mut nearest = f64::INFINITY;
        for di in -1..=1 {
            for dj in -1..=1 {
                for dk in -1..=1 {
                    if (di, dj, dk) == (0, 0, 0) {
                        continue;
                    }
                    let step = Vec3::new(
                        di as f64 * spacing[0],
                        dj as f64 * spacing[1],
                        dk as f64 * spacing[2],
                    );
                    for s in 1..=64 {
                        let q = pt + step * (s as f64 / 64.0);
                        if !cortex(&q) {
                            nearest = nearest.min((q - pt).norm());
                            break;
                        }
                    }
                }
            }
        }
        assert!(nearest <= diagonal, "{pt:?} is {nearest} from the surface");
    }
}

fn fuse_with_truth(truth: RigidTransform) -> (f64, f64) {
    let p = render_phantom(&PhantomSpec {
        truth: Some(truth),
        ..Default::default()
    })
    .unwrap();
    let out = fuse_halves(
        &p.fixed,
        &p.moving,
        &p.fiducials_fixed,
        &p.fiducials_moving,
        &FuseOptions::default(),
        Exec::default(),
    )
    .unwrap();
    out.t_fuse.difference(&p.truth)
}

#[test]
fn phantom_identity_truth() {
    let (rot, trans) = fuse_with_truth(RigidTransform::identity());
    assert!(rot < 0.1 && trans < 0.1, "{rot} deg {trans} mm");
}

#[test]
fn phantom_large_displacement() {
    let truth = RigidTransform::from_axis_angle(
        &Vec3::new(0.3, 0.5, 0.8),
        15f64.to_radians(),
        Vec3::new(1.0, 1.0, 1.0).normalize() * 30.0,
    );
    let (rot, trans) = fuse_with_truth(truth);
    assert!(rot < 0.5 && trans < 1.0, "{rot} deg {trans} mm");
}

#[test]
fn synthetic_measurement_table_reads_back() {
    let s = generate(&SynthParams {
        measurement_sigma: 0.7,
        ..SynthParams::new(Shape::BentPrism, 7, 41)
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_case(dir.path(), &s, &[], None, None, CoordinateSystem::Lps).unwrap();
    let table = read_measurements(&files.measurements).unwrap();
    assert_eq!(table.measurements, s.measurements);
    assert!(table.has_physical);
    for m in &s.measurements {
        assert_eq!(table.physical_for(m.index), s.physical(m.index));
    }
}
