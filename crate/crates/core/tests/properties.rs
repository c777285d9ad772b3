use colocate::fusion::{
    fiducial_register, icp_refine, stitch_volumes, threshold_segment, IcpOptions, PointCloud,
    StitchOptions, VolumeGrid, VoxelType,
};
use colocate::geometry::{MarkupCurve, ParametricCubic};
use colocate::io::{
    decode_volume, encode_volume, markups_to_string, measurements_to_string, parse_markups,
    parse_measurements, parse_transform, transform_to_string, CoordinateSystem, MarkupSet,
    MeasurementTable,
};
use colocate::plane::{assign_all_planes, solved_planes, DissectionMeasurement};
use colocate::stats::{
    error_report, sensitivity_analysis, shapiro_wilk, CurveVariant, PhysicalWidths,
    ValidationRecord,
};
use colocate::synth::{generate, jitter_markup, Shape, SynthParams};
use colocate::{FiducialReference, Point3, RigidTransform, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e3..1e3f64,
        -1e-3..1e-3f64,
        any::<i16>().prop_map(f64::from)
    ]
}

fn point() -> impl Strategy<Value = Point3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn rigid() -> impl Strategy<Value = RigidTransform> {
    (
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
        -3.1..3.1f64,
        (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64),
    )
        .prop_filter("axis", |(a, _, _)| a.0.abs() + a.1.abs() + a.2.abs() > 1e-3)
        .prop_map(|(a, angle, t)| {
            RigidTransform::from_axis_angle(
                &Vec3::new(a.0, a.1, a.2),
                angle,
                Vec3::new(t.0, t.1, t.2),
            )
        })
}

fn markup_set() -> impl Strategy<Value = MarkupSet> {
    (
        prop::collection::vec(prop::collection::vec(point(), 4..10), 1..4),
        prop::collection::vec(point(), 0..3),
    )
        .prop_map(|(curves, fids)| MarkupSet {
            curves: curves
                .into_iter()
                .enumerate()
                .map(|(i, p)| MarkupCurve::new(format!("edge {i}"), p))
                .collect(),
            fiducials: fids
                .into_iter()
                .enumerate()
                .map(|(i, p)| FiducialReference::new(format!("F{i}"), p))
                .collect(),
        })
}

fn measurement_table() -> impl Strategy<Value = MeasurementTable> {
    let row = (
        1u32..5,
        0.0..300.0f64,
        0.0..300.0f64,
        any::<bool>(),
        coord(),
        prop::option::of(0.0..50.0f64),
        prop::option::of(0.0..50.0f64),
        prop::option::of(0.0..50.0f64),
    );
    (prop::collection::vec(row, 1..12), any::<bool>()).prop_map(|(rows, has_physical)| {
        let mut index = 0;
        let mut table = MeasurementTable {
            has_physical,
            ..Default::default()
        };
        for (step, da, db, curved, offset, d1, d2, d3) in rows {
            index += step;
            let mut m = DissectionMeasurement::new(index, da, db);
            m.curved_cut = curved;
            m.offset = offset;
            table.measurements.push(m);
            table.physical.push(if has_physical {
                PhysicalWidths { d1, d2, d3 }
            } else {
                PhysicalWidths::default()
            });
        }
        table
    })
}

fn volume() -> impl Strategy<Value = VolumeGrid> {
    (
        [1usize..7, 1usize..7, 1usize..7],
        any::<bool>(),
        rigid(),
        point(),
    )
        .prop_flat_map(|(dims, short, pose, origin)| {
            let len = dims[0] * dims[1] * dims[2];
            let voxel = if short {
                any::<i16>().prop_map(f32::from).boxed()
            } else {
                any::<f32>()
                    .prop_filter("finite", |v| v.is_finite())
                    .boxed()
            };
            (
                prop::collection::vec(voxel, len),
                [0.05..5.0f64, 0.05..5.0f64, 0.05..5.0f64],
            )
                .prop_map(move |(voxels, spacing)| VolumeGrid {
                    dims,
                    spacing,
                    origin,
                    direction: pose.rotation(),
                    voxels,
                    voxel_type: if short {
                        VoxelType::Short
                    } else {
                        VoxelType::Float
                    },
                })
        })
}

proptest! {
    #[test]
    fn markups_round_trip(set in markup_set(), lps in any::<bool>()) {
        let cs = if lps { CoordinateSystem::Lps } else { CoordinateSystem::Ras };
        prop_assert_eq!(parse_markups(&markups_to_string(&set, cs)).unwrap(), set);
    }

    #[test]
    fn measurements_round_trip(table in measurement_table()) {
        prop_assert_eq!(parse_measurements(&measurements_to_string(&table)).unwrap(), table);
    }

    #[test]
    fn transform_round_trip(t in rigid()) {
        let back = parse_transform(&transform_to_string(&t)).unwrap();
        prop_assert_eq!(back.matrix(), t.matrix());
    }

    #[test]
    fn volume_round_trip(v in volume()) {
        let w = decode_volume(&encode_volume(&v)).unwrap();
        prop_assert_eq!(w.dims, v.dims);
        prop_assert_eq!(w.voxel_type, v.voxel_type);
        prop_assert!(w.voxels.iter().zip(&v.voxels).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert!((w.origin - v.origin).amax() < 1e-12);
        prop_assert!((w.direction - v.direction).amax() < 1e-12);
        for a in 0..3 {
            prop_assert!((w.spacing[a] - v.spacing[a]).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_group_laws(a in rigid(), b in rigid(), c in rigid()) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!(left.max_abs_diff(&right) < 1e-9);
        prop_assert!(a.compose(&a.inverse()).max_abs_diff(&RigidTransform::identity()) < 1e-12);
        prop_assert!((a.compose(&b).rotation().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shapiro_invariance(
        samples in prop::collection::vec(-50.0..50.0f64, 3..200),
        a in 0.01..100.0f64,
        b in -1e3..1e3f64,
        rotate in 0usize..200,
    ) {
        let base = shapiro_wilk(&samples);
        prop_assume!(base.is_ok());
        let w = base.unwrap().w;
        prop_assert!(w > 0.0 && w <= 1.0);
        let mapped: Vec<f64> = samples.iter().map(|x| a * x + b).collect();
        prop_assert!((shapiro_wilk(&mapped).unwrap().w - w).abs() < 1e-9);
        let mut permuted = samples.clone();
        let k = rotate % permuted.len();
        permuted.rotate_left(k);
        permuted.reverse();
        prop_assert!((shapiro_wilk(&permuted).unwrap().w - w).abs() < 1e-12);
    }

    #[test]
    fn curved_exclusion_without_flags(diffs in prop::collection::vec(-5.0..5.0f64, 2..40)) {
        let records: Vec<ValidationRecord> = diffs
            .iter()
            .enumerate()
            .map(|(i, d)| ValidationRecord {
                dissection_index: i as u32,
                d1_est: *d,
                d2_est: None,
                d3_est: 1.0,
                d1_phy: Some(0.0),
                d2_phy: None,
                d3_phy: None,
                curved_cut: false,
            })
            .collect();
        prop_assert_eq!(error_report(&records, true).ok(), error_report(&records, false).ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fiducial_register_is_locally_optimal(
        pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -50.0..50.0f64), 4..12),
        noise in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 12),
        truth in rigid(),
        kicks in prop::collection::vec(rigid(), 20),
    ) {
        let moving: Vec<Point3> = pts.iter().map(|p| Point3::new(p.0, p.1, p.2)).collect();
        let fixed: Vec<Point3> = moving
            .iter()
            .zip(&noise)
            .map(|(p, n)| truth.apply_point(p) + Vec3::new(n.0, n.1, n.2))
            .collect();
        let Ok(fit) = fiducial_register(&moving, &fixed) else {
            return Ok(());
        };
        let fre = |t: &RigidTransform| -> f64 {
            let sq: f64 = moving.iter().zip(&fixed).map(|(m, f)| (t.apply_point(m) - f).norm_squared()).sum();
            (sq / moving.len() as f64).sqrt()
        };
        prop_assert!((fre(&fit.transform) - fit.fre).abs() < 1e-9);
        for k in &kicks {
            // Shrink each random transform to a small nudge about the fit.
            let nudge = RigidTransform::from_axis_angle(
                &k.rotation().column(0).into_owned(),
                k.rotation_angle_deg().to_radians() * 1e-3,
                k.translation() * 1e-3,
            );
            prop_assert!(fre(&nudge.compose(&fit.transform)) >= fit.fre - 1e-12);
        }
    }

    #[test]
    fn icp_history_is_monotone(
        truth_angle in -0.03..0.03f64,
        shift in (-1.5..1.5f64, -1.5..1.5f64, -1.5..1.5f64),
        trim in 0.0..0.3f64,
    ) {
        let mut pts = Vec::new();
        for i in 0..15 {
            for j in 0..9 {
                let (x, y) = (i as f64, j as f64 * 1.4);
                pts.push(Point3::new(x, y, 0.03 * x * x - 0.02 * y * y + 0.015 * x * y));
            }
        }
        let cloud = PointCloud::new(pts);
        let t = RigidTransform::from_axis_angle(
            &Vec3::new(0.3, 1.0, 0.2),
            truth_angle,
            Vec3::new(shift.0, shift.1, shift.2),
        );
        let fixed = cloud.transformed(&t);
        let opts = IcpOptions { trim_fraction: trim, ..Default::default() };
        let r = icp_refine(&cloud, &fixed, &RigidTransform::identity(), &opts).unwrap();
        prop_assert!(r.rms_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(r.rms_history[0], r.initial_rms);
        prop_assert!(r.final_rms <= r.initial_rms);
    }

    #[test]
    fn plane_invariants(shape in 0usize..3, cuts in 1usize..8, seed in any::<u64>(), delta in -5.0..5.0f64) {
        let s = generate(&SynthParams::new(Shape::ALL[shape], cuts, seed)).unwrap();
        let outcomes = assign_all_planes(&s.curve_a, &s.curve_b, &s.f_ref, &s.measurements).unwrap();
        let planes = solved_planes(&outcomes);
        prop_assert_eq!(planes.len(), cuts);
        for (p, m) in planes.iter().zip(&s.measurements) {
            prop_assert!(((p.anchor_a - s.f_ref.position).norm() - m.d_a).abs() < 1e-6);
            prop_assert!(((p.anchor_b - s.f_ref.position).norm() - m.d_b).abs() < 1e-6);
            prop_assert!(p.signed_distance(&p.anchor_a).abs() < 1e-9);
            prop_assert!(p.signed_distance(&p.anchor_b).abs() < 1e-9);
            prop_assert!(p.normal.dot(&(p.anchor_b - p.anchor_a)).abs() < 1e-9);
            prop_assert!((p.u_axis.cross(&p.v_axis) - p.normal).norm() < 1e-9);
            let back = p.with_offset(delta).with_offset(-delta);
            prop_assert!((back.origin - p.origin).norm() < 1e-12);
            prop_assert!((back.anchor_a - p.anchor_a).norm() < 1e-12);
        }
        for w in planes.windows(2) {
            prop_assert!(w[1].param_a > w[0].param_a && w[1].param_b > w[0].param_b);
        }
    }

    #[test]
    fn sensitivity_is_symmetric(seed in any::<u64>(), cuts in 2usize..7, amplitude in 0.0..0.5f64) {
        let s = generate(&SynthParams::new(Shape::BentPrism, cuts, seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fit = |m: &MarkupCurve| colocate::geometry::fit_parametric_cubic(m).unwrap();
        let a = CurveVariant { a: s.curve_a.clone(), b: s.curve_b.clone(), edge: Some(s.curve_edge.clone()) };
        let b = CurveVariant {
            a: fit(&jitter_markup(&s.markup_a, amplitude, &mut rng)),
            b: fit(&jitter_markup(&s.markup_b, amplitude, &mut rng)),
            edge: Some(fit(&jitter_markup(&s.markup_edge, amplitude, &mut rng))),
        };
        let (Ok(ab), Ok(ba)) = (
            sensitivity_analysis(&a, &b, &s.f_ref, &s.measurements),
            sensitivity_analysis(&b, &a, &s.f_ref, &s.measurements),
        ) else {
            return Ok(());
        };
        prop_assert_eq!(ab.rotation_deg.len(), ba.rotation_deg.len());
        for (x, y) in ab.rotation_deg.iter().zip(&ba.rotation_deg) {
            prop_assert!((x.1 - y.1).abs() < 1e-9);
        }
        for (x, y) in ab.translation_mm.iter().zip(&ba.translation_mm) {
            prop_assert_eq!(x.value, y.value);
        }
        let same = sensitivity_analysis(&a, &a, &s.f_ref, &s.measurements).unwrap();
        prop_assert!(same.rotation_deg.iter().all(|r| r.1 == 0.0));
        prop_assert!(same.translation_mm.iter().all(|t| t.value == 0.0));
    }

    #[test]
    fn stitch_keeps_fixed_voxels(
        values in prop::collection::vec(-1000.0..2000.0f32, 4 * 5 * 3),
        shift in (-6i32..6, -6i32..6, -4i32..4),
    ) {
        let mut v = VolumeGrid::filled([4, 5, 3], [1.0, 1.0, 1.0], Point3::origin(), 0.0);
        v.voxels = values;
        let t = RigidTransform::translation_only(Vec3::new(shift.0 as f64, shift.1 as f64, shift.2 as f64));
        let r = stitch_volumes(&v, &v, &t, &StitchOptions::default()).unwrap();
        let o = r.fixed_offset;
        let inv = t.inverse();
        for k in 0..3 {
            for j in 0..5 {
                for i in 0..4 {
                    let w = v.world([i as f64, j as f64, k as f64]);
                    if v.sample_trilinear(&inv.apply_point(&w)).is_some() {
                        continue;
                    }
                    let got = r.volume.get(
                        (i as i64 - o[0]) as usize,
                        (j as i64 - o[1]) as usize,
                        (k as i64 - o[2]) as usize,
                    );
                    prop_assert_eq!(got.to_bits(), v.get(i, j, k).to_bits());
                }
            }
        }
    }

    #[test]
    fn threshold_is_idempotent(bits in prop::collection::vec(any::<bool>(), 3 * 4 * 5)) {
        let mut m = VolumeGrid::filled([3, 4, 5], [1.0, 2.0, 0.5], Point3::origin(), 0.0);
        m.voxels = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        prop_assert_eq!(threshold_segment(&m, 0.5).voxels, m.voxels);
    }

    #[test]
    fn synth_is_deterministic(shape in 0usize..3, cuts in 1usize..10, seed in any::<u64>()) {
        let p = SynthParams { measurement_sigma: 1.0, ..SynthParams::new(Shape::ALL[shape], cuts, seed) };
        prop_assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
    }
}

#[test]
fn sensitivity_identity_on_curves() {
    let c = ParametricCubic::line(Point3::origin(), Point3::new(100.0, 0.0, 0.0));
    let d = ParametricCubic::line(Point3::new(0.0, 10.0, 0.0), Point3::new(100.0, 10.0, 0.0));
    let v = CurveVariant {
        a: c,
        b: d,
        edge: None,
    };
    let f = FiducialReference::new("f", Point3::origin());
    let ms = [
        DissectionMeasurement::new(1, 20.0, (400.0f64 + 100.0).sqrt()),
        DissectionMeasurement::new(2, 45.0, (2025.0f64 + 100.0).sqrt()),
    ];
    let r = sensitivity_analysis(&v, &v, &f, &ms).unwrap();
    assert_eq!(r.max_rotation_deg, 0.0);
    assert_eq!(r.mean_translation_mm, Some(0.0));
}
