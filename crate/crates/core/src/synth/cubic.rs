//! Truth edges for synthetic specimens.
//!
//! Markup samples of a cubic taken at equal parameter steps do not sit at
//! their own chord-length parameters unless the cubic has constant speed,
//! so refitting them does not return the generating cubic. The truth edge
//! is therefore the fit of the samples itself: the pipeline's fit then
//! reproduces it exactly and fitting error cannot leak into plane errors.

use crate::geometry::{fit_parametric_cubic, GeometryError, MarkupCurve, ParametricCubic};

/// Samples `seed` at `count` equally spaced parameters and returns the
/// markup together with its least-squares cubic, which serves as truth.
pub fn truth_edge(
    label: &str,
    seed: &ParametricCubic,
    count: usize,
) -> Result<(ParametricCubic, MarkupCurve), GeometryError> {
    let points = (0..count)
        .map(|i| seed.eval(i as f64 / (count - 1).max(1) as f64))
        .collect();
    let markup = MarkupCurve::new(label, points);
    let curve = fit_parametric_cubic(&markup)?;
    Ok((curve, markup))
}
