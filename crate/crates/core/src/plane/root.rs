//! Distance-constrained intersection of a fitted curve with a sphere about
//! the fiducial reference: the root of `g(t) = |C(t) - f_ref| - d`.

use serde::{Deserialize, Serialize};

use super::PlaneError;
use crate::geometry::{FiducialReference, ParametricCubic, Point3};

/// Parameter domain searched for roots, including the extrapolation margin.
pub const SEARCH_DOMAIN: (f64, f64) = (-0.05, 1.05);
/// Samples used to bracket roots when Newton iteration is not trusted.
pub const SCAN_SAMPLES: usize = 4096;
pub const NEWTON_TOL_MM: f64 = 1e-9;
pub const NEWTON_MAX_ITER: usize = 50;
pub const BISECTION_TOL: f64 = 1e-9;
pub const MAX_RESIDUAL_MM: f64 = 1e-6;
const MIN_SLOPE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootMethod {
    Newton,
    BisectionFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSolution {
    pub t: f64,
    pub point: Point3,
    /// `| |point - f_ref| - d |` in mm.
    pub residual: f64,
    pub iterations: usize,
    pub method: RootMethod,
    /// Number of sign-change brackets found on the search domain.
    pub bracket_count: usize,
}

impl IntersectionSolution {
    pub fn extrapolated(&self) -> bool {
        self.t < 0.0 || self.t > 1.0
    }
}

/// Signed distance residual and its analytic derivative.
#[inline]
fn residual(c: &ParametricCubic, f: &Point3, d: f64, t: f64) -> (f64, f64) {
    let r = c.eval(t) - f;
    let dist = r.norm();
    // At the fiducial itself the forward one-sided derivative is the speed.
    let slope = if dist > 0.0 {
        r.dot(&c.derivative(t)) / dist
    } else {
        c.derivative(t).norm()
    };
    (dist - d, slope)
}

#[derive(Debug, Clone, Copy)]
struct Bracket {
    lo: f64,
    hi: f64,
}

fn scan_brackets(g: impl Fn(f64) -> f64) -> (Vec<Bracket>, f64) {
    let (lo, hi) = SEARCH_DOMAIN;
    let step = (hi - lo) / (SCAN_SAMPLES - 1) as f64;
    let at = |i: usize| {
        if i == SCAN_SAMPLES - 1 {
            hi
        } else {
            lo + i as f64 * step
        }
    };
    let mut out = Vec::new();
    let mut prev_t = at(0);
    let mut prev = g(prev_t);
    if prev == 0.0 {
        out.push(Bracket {
            lo: prev_t,
            hi: prev_t,
        });
    }
    for i in 1..SCAN_SAMPLES {
        let t = at(i);
        let v = g(t);
        if v == 0.0 {
            out.push(Bracket { lo: t, hi: t });
        } else if prev != 0.0 && (prev < 0.0) != (v < 0.0) {
            out.push(Bracket { lo: prev_t, hi: t });
        }
        prev = v;
        prev_t = t;
    }
    (out, step)
}

fn newton(c: &ParametricCubic, f: &Point3, d: f64, seed: f64) -> Option<(f64, usize)> {
    let mut t = seed;
    for it in 0..=NEWTON_MAX_ITER {
        let (g, slope) = residual(c, f, d, t);
        if !g.is_finite() {
            return None;
        }
        if g.abs() < NEWTON_TOL_MM {
            return Some((t, it));
        }
        if it == NEWTON_MAX_ITER || slope.abs() < MIN_SLOPE {
            return None;
        }
        t -= g / slope;
        if !(SEARCH_DOMAIN.0..=SEARCH_DOMAIN.1).contains(&t) {
            return None;
        }
    }
    None
}

fn bisect(c: &ParametricCubic, f: &Point3, d: f64, b: Bracket) -> (f64, usize) {
    let g = |t: f64| residual(c, f, d, t).0;
    let (mut lo, mut hi) = (b.lo, b.hi);
    let mut g_lo = g(lo);
    let mut iterations = 0;
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        iterations += 1;
        if g_mid == 0.0 {
            return (mid, iterations);
        }
        if (g_mid < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    let mut t = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    // Newton polish, kept only while it stays in the bracket and improves.
    for _ in 0..3 {
        let (gt, slope) = residual(c, f, d, t);
        if gt.abs() < NEWTON_TOL_MM || slope.abs() < MIN_SLOPE {
            break;
        }
        let next = t - gt / slope;
        if next < b.lo || next > b.hi || g(next).abs() >= gt.abs() {
            break;
        }
        t = next;
        iterations += 1;
    }
    (t, iterations)
}

/// Solves `|C(t) - f_ref| = d` starting Newton iteration at `t_seed`.
///
/// When several roots exist the smallest root at or beyond `t_seed` is
/// returned; if all roots lie before the seed, the nearest one is used.
/// When Newton from the seed lands on a different root it is restarted
/// inside the selected scan bracket; if that also fails the bracket is
/// bisected.
pub fn solve_intersection(
    curve: &ParametricCubic,
    f_ref: &FiducialReference,
    d: f64,
    t_seed: f64,
) -> Result<IntersectionSolution, PlaneError> {
    if !(d >= 0.0 && d.is_finite()) {
        return Err(PlaneError::InvalidInput(format!(
            "distance must be >= 0, got {d}"
        )));
    }
    if !(SEARCH_DOMAIN.0..=SEARCH_DOMAIN.1).contains(&t_seed) {
        return Err(PlaneError::InvalidInput(format!(
            "seed parameter {t_seed} outside search domain"
        )));
    }
    let f = f_ref.position;
    let (brackets, step) = scan_brackets(|t| residual(curve, &f, d, t).0);
    let target = brackets
        .iter()
        .find(|b| b.hi >= t_seed)
        .or_else(|| brackets.last())
        .copied();

    let newton_hit = newton(curve, &f, d, t_seed);
    let (t, iterations, method) = match (newton_hit, target) {
        (Some((t, it)), Some(b)) if t >= b.lo - step && t <= b.hi + step => {
            (t, it, RootMethod::Newton)
        }
        // Newton found a root the scan could not bracket (tangential contact).
        (Some((t, it)), Some(b)) if t >= t_seed && t < b.lo => (t, it, RootMethod::Newton),
        (Some((t, it)), None) => (t, it, RootMethod::Newton),
        // Newton from the seed reached another root; restart it inside the
        // selected bracket before giving up on it.
        (first, Some(b)) => {
            let spent = first.map_or(0, |(_, it)| it);
            match newton(curve, &f, d, 0.5 * (b.lo + b.hi)) {
                Some((t, it)) if t >= b.lo - step && t <= b.hi + step => {
                    (t, spent + it, RootMethod::Newton)
                }
                _ => {
                    let (t, it) = bisect(curve, &f, d, b);
                    (t, spent + it, RootMethod::BisectionFallback)
                }
            }
        }
        (None, None) => return Err(PlaneError::NoRoot { distance: d }),
    };

    let point = curve.eval(t);
    let residual = ((point - f).norm() - d).abs();
    if residual >= MAX_RESIDUAL_MM {
        return Err(PlaneError::ResidualTooLarge { residual });
    }
    let solution = IntersectionSolution {
        t,
        point,
        residual,
        iterations,
        method,
        bracket_count: brackets.len(),
    };
    if solution.extrapolated() {
        log::warn!("intersection at t = {t:.4} extrapolates beyond the marked curve");
    }
    Ok(solution)
}
