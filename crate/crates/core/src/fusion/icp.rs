use kiddo::{ImmutableKdTree, SquaredEuclidean};
use serde::{Deserialize, Serialize};

use super::{fiducial_register, FusionError, PointCloud};
use crate::exec::Exec;
use crate::geometry::{Point3, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpOptions {
    /// Fraction of worst correspondences dropped each iteration.
    pub trim_fraction: f64,
    pub max_iterations: usize,
    /// Stop when the RMS improves by less than this (mm).
    pub tolerance: f64,
}

impl Default for IcpOptions {
    fn default() -> Self {
        Self {
            trim_fraction: 0.1,
            max_iterations: 100,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub initial_rms: f64,
    pub final_rms: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Trimmed RMS after each accepted iterate, starting with the initial pose.
    pub rms_history: Vec<f64>,
}

struct Matching {
    rms: f64,
    /// `(moving index, fixed index)` of the kept pairs.
    kept: Vec<(usize, usize)>,
}

fn match_points(
    tree: &ImmutableKdTree<f64, 3>,
    moving: &[Point3],
    pose: &RigidTransform,
    keep: usize,
    exec: Exec,
) -> Matching {
    let mut pairs: Vec<(f64, usize, usize)> = exec.map_range(moving.len(), |i| {
        let q = pose.apply_point(&moving[i]);
        let nn = tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        (nn.distance, i, nn.item as usize)
    });
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    pairs.truncate(keep);
    let sq: f64 = pairs.iter().map(|p| p.0).sum();
    Matching {
        rms: (sq / keep as f64).sqrt(),
        kept: pairs.into_iter().map(|(_, m, f)| (m, f)).collect(),
    }
}

/// Trimmed point-to-point ICP of `moving` onto `fixed`, starting at `init`.
///
/// With trimming enabled, an untrimmed pass over half the iteration budget
/// runs first: dropping the worst pairs also drops the few points that pin
/// sliding along near-symmetric surfaces, which leaves spurious minima
/// close to the start. Its pose is kept only if it lowers the trimmed RMS,
/// so the trimmed RMS is non-increasing across the reported history.
/// Non-convergence is reported in the result rather than as an error.
pub fn icp_refine(
    moving: &PointCloud,
    fixed: &PointCloud,
    init: &RigidTransform,
    options: &IcpOptions,
) -> Result<IcpResult, FusionError> {
    icp_refine_with(moving, fixed, init, options, Exec::default())
}

struct Stage {
    pose: RigidTransform,
    matching: Matching,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    tree: &ImmutableKdTree<f64, 3>,
    moving: &PointCloud,
    fixed: &PointCloud,
    init: RigidTransform,
    keep: usize,
    budget: usize,
    tolerance: f64,
    exec: Exec,
) -> Stage {
    let mut pose = init;
    let mut current = match_points(tree, &moving.points, &pose, keep, exec);
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = current.rms == 0.0;
    while !converged && iterations < budget && current.kept.len() >= 3 {
        let (src, dst): (Vec<Point3>, Vec<Point3>) = current
            .kept
            .iter()
            .map(|&(m, f)| (moving.points[m], fixed.points[f]))
            .unzip();
        let Ok(step) = fiducial_register(&src, &dst) else {
            break;
        };
        iterations += 1;
        let next = match_points(tree, &moving.points, &step.transform, keep, exec);
        if next.rms > current.rms {
            // Rounding can only make the trimmed objective grow by ulps.
            converged = true;
            break;
        }
        let improvement = current.rms - next.rms;
        pose = step.transform;
        current = next;
        history.push(current.rms);
        if improvement < tolerance {
            converged = true;
        }
    }
    Stage {
        pose,
        matching: current,
        iterations,
        converged,
        history,
    }
}

pub fn icp_refine_with(
    moving: &PointCloud,
    fixed: &PointCloud,
    init: &RigidTransform,
    options: &IcpOptions,
    exec: Exec,
) -> Result<IcpResult, FusionError> {
    if moving.is_empty() {
        return Err(FusionError::EmptyCloud("moving"));
    }
    if fixed.is_empty() {
        return Err(FusionError::EmptyCloud("fixed"));
    }
    let coords: Vec<[f64; 3]> = fixed.points.iter().map(|p| [p.x, p.y, p.z]).collect();
    let tree = ImmutableKdTree::new_from_slice(&coords);
    let trim = options.trim_fraction.clamp(0.0, 0.95);
    let keep = (((1.0 - trim) * moving.len() as f64).round() as usize).clamp(1, moving.len());

    let initial = match_points(&tree, &moving.points, init, keep, exec);
    let initial_rms = initial.rms;
    let mut start = *init;
    let mut history = vec![initial_rms];
    let mut spent = 0;
    if keep < moving.len() && initial_rms > 0.0 {
        let warm = run_stage(
            &tree,
            moving,
            fixed,
            *init,
            moving.len(),
            options.max_iterations / 2,
            options.tolerance,
            exec,
        );
        spent = warm.iterations;
        let trimmed = match_points(&tree, &moving.points, &warm.pose, keep, exec).rms;
        if trimmed < initial_rms {
            start = warm.pose;
            history.push(trimmed);
        }
    }
    let stage = run_stage(
        &tree,
        moving,
        fixed,
        start,
        keep,
        options.max_iterations - spent,
        options.tolerance,
        exec,
    );
    history.extend(&stage.history);

    Ok(IcpResult {
        transform: stage.pose,
        initial_rms,
        final_rms: stage.matching.rms,
        iterations: spent + stage.iterations,
        converged: stage.converged,
        rms_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn blob() -> PointCloud {
        // Anisotropic lattice patch, no rotational symmetry.
        let mut pts = Vec::new();
        for i in 0..12 {
            for j in 0..7 {
                let x = i as f64;
                let y = j as f64 * 1.3;
                pts.push(Point3::new(
                    x,
                    y,
                    0.02 * x * x + 0.05 * y * y + 0.01 * x * y,
                ));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn identical_clouds() {
        let c = blob();
        let r = icp_refine(&c, &c, &RigidTransform::identity(), &IcpOptions::default()).unwrap();
        assert!(r.transform.max_abs_diff(&RigidTransform::identity()) < 1e-12);
        assert_eq!(r.final_rms, 0.0);
        assert!(r.iterations <= 2);
    }

    #[test]
    fn exact_init_terminates_quickly() {
        let c = blob();
        let t =
            RigidTransform::from_axis_angle(&Vec3::new(1., 1., 0.), 0.3, Vec3::new(5., -2., 1.));
        let fixed = c.transformed(&t);
        let r = icp_refine(&c, &fixed, &t, &IcpOptions::default()).unwrap();
        assert!(r.iterations <= 2);
        assert!(r.final_rms < 1e-9);
    }

    #[test]
    fn small_perturbation_recovered_monotonically() {
        let c = blob();
        let t = RigidTransform::from_axis_angle(
            &Vec3::new(0.2, 1., 0.3),
            1.5f64.to_radians(),
            Vec3::new(0.4, -0.3, 0.2),
        );
        let fixed = c.transformed(&t);
        let opts = IcpOptions {
            trim_fraction: 0.0,
            ..Default::default()
        };
        let r = icp_refine(&c, &fixed, &RigidTransform::identity(), &opts).unwrap();
        assert!(r.final_rms <= r.initial_rms);
        assert!(r.rms_history.windows(2).all(|w| w[1] <= w[0]));
        let (rot, trans) = r.transform.difference(&t);
        assert!(rot < 1e-6 && trans < 1e-6, "{rot} {trans}");
    }

    #[test]
    fn empty_clouds() {
        let c = blob();
        let e = PointCloud::default();
        let id = RigidTransform::identity();
        assert!(icp_refine(&e, &c, &id, &IcpOptions::default()).is_err());
        assert!(icp_refine(&c, &e, &id, &IcpOptions::default()).is_err());
    }
}
