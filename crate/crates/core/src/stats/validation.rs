use serde::{Deserialize, Serialize};

use super::{shapiro_wilk, ShapiroWilk, StatsError};
use crate::geometry::{ParametricCubic, Point3};
use crate::plane::{DissectionMeasurement, DissectionPlane, SCAN_SAMPLES, SEARCH_DOMAIN};

/// Computed slab widths between two consecutive planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabEstimate {
    /// Index of the plane closing the slab.
    pub index: u32,
    pub d1: f64,
    pub d2: Option<f64>,
    pub d3: f64,
}

/// Crossing of the edge curve with a plane: dense scan of the signed
/// distance, the crossing nearest the plane origin, refined by Newton
/// (bisection if Newton leaves the bracket).
pub fn edge_intersection(
    plane: &DissectionPlane,
    edge: &ParametricCubic,
) -> Result<(f64, Point3), StatsError> {
    let s = |t: f64| plane.signed_distance(&edge.eval(t));
    let (lo, hi) = SEARCH_DOMAIN;
    let step = (hi - lo) / (SCAN_SAMPLES - 1) as f64;
    let mut best: Option<(f64, f64, f64)> = None; // (distance to origin, lo, hi)
    let mut prev_t = lo;
    let mut prev = s(lo);
    let mut consider = |a: f64, b: f64| {
        let mid = edge.eval(0.5 * (a + b));
        let dist = (mid - plane.origin).norm();
        if best.is_none_or(|(d, _, _)| dist < d) {
            best = Some((dist, a, b));
        }
    };
    if prev == 0.0 {
        consider(lo, lo);
    }
    for i in 1..SCAN_SAMPLES {
        let t = if i == SCAN_SAMPLES - 1 {
            hi
        } else {
            lo + i as f64 * step
        };
        let v = s(t);
        if v == 0.0 {
            consider(t, t);
        } else if prev != 0.0 && (prev < 0.0) != (v < 0.0) {
            consider(prev_t, t);
        }
        prev = v;
        prev_t = t;
    }
    let (_, mut a, mut b) =
        best.ok_or(StatsError::EdgeIntersectionMissing { index: plane.index })?;
    if a == b {
        return Ok((a, edge.eval(a)));
    }

    let mut t = 0.5 * (a + b);
    for _ in 0..50 {
        let v = s(t);
        if v.abs() < 1e-12 {
            return Ok((t, edge.eval(t)));
        }
        let slope = plane.normal.dot(&edge.derivative(t));
        let next = t - v / slope;
        if !(slope.abs() > 1e-12) || next < a || next > b {
            break;
        }
        t = next;
    }
    let mut sa = s(a);
    while b - a > 1e-13 {
        let m = 0.5 * (a + b);
        let sm = s(m);
        if sm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if (sm < 0.0) == (sa < 0.0) {
            a = m;
            sa = sm;
        } else {
            b = m;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, edge.eval(t)))
}

/// Slab-width estimates for each pair of consecutive planes.
///
/// `d1`/`d3` are anchor-to-anchor distances on edges a and b; `d2` is the
/// distance between consecutive plane crossings of `edge`, when given.
pub fn compute_estimates(
    planes: &[DissectionPlane],
    edge: Option<&ParametricCubic>,
) -> Result<Vec<SlabEstimate>, StatsError> {
    if planes.len() < 2 {
        return Ok(Vec::new());
    }
    let crossings = match edge {
        Some(e) => Some(
            planes
                .iter()
                .map(|p| edge_intersection(p, e).map(|(_, x)| x))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    Ok(planes
        .windows(2)
        .enumerate()
        .map(|(i, w)| SlabEstimate {
            index: w[1].index,
            d1: (w[1].anchor_a - w[0].anchor_a).norm(),
            d2: crossings.as_ref().map(|c| (c[i + 1] - c[i]).norm()),
            d3: (w[1].anchor_b - w[0].anchor_b).norm(),
        })
        .collect())
}

/// Estimated and caliper slab widths of one dissection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub dissection_index: u32,
    pub d1_est: f64,
    pub d2_est: Option<f64>,
    pub d3_est: f64,
    pub d1_phy: Option<f64>,
    pub d2_phy: Option<f64>,
    pub d3_phy: Option<f64>,
    pub curved_cut: bool,
}

impl ValidationRecord {
    /// `(channel, est - phy)` for every channel with both values.
    pub fn differences(&self) -> impl Iterator<Item = (Channel, f64)> + '_ {
        [
            (Channel::D1, Some(self.d1_est), self.d1_phy),
            (Channel::D2, self.d2_est, self.d2_phy),
            (Channel::D3, Some(self.d3_est), self.d3_phy),
        ]
        .into_iter()
        .filter_map(|(c, e, p)| Some((c, e? - p?)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    D1,
    D2,
    D3,
}

/// Caliper widths recorded on the row of the closing cut.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhysicalWidths {
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub d3: Option<f64>,
}

/// Joins slab estimates with caliper widths keyed by the closing cut's index.
/// A slab is flagged curved when either bounding cut was recorded curved.
pub fn build_records(
    estimates: &[SlabEstimate],
    measurements: &[DissectionMeasurement],
    physical: &dyn Fn(u32) -> PhysicalWidths,
) -> Vec<ValidationRecord> {
    let curved = |i: u32| measurements.iter().any(|m| m.index == i && m.curved_cut);
    let mut prev_index = None;
    let mut out = Vec::with_capacity(estimates.len());
    for e in estimates {
        let opening = measurements
            .iter()
            .filter(|m| m.index < e.index)
            .map(|m| m.index)
            .max()
            .or(prev_index);
        let phy = physical(e.index);
        out.push(ValidationRecord {
            dissection_index: e.index,
            d1_est: e.d1,
            d2_est: e.d2,
            d3_est: e.d3,
            d1_phy: phy.d1,
            d2_phy: phy.d2,
            d3_phy: phy.d3,
            curved_cut: curved(e.index) || opening.is_some_and(curved),
        });
        prev_index = Some(e.index);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub n: usize,
    pub mean: Option<f64>,
    pub stdev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Normality {
    Tested(ShapiroWilk),
    NotTested { reason: String },
}

impl Normality {
    pub fn w(&self) -> Option<f64> {
        match self {
            Normality::Tested(s) => Some(s.w),
            Normality::NotTested { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n: usize,
    pub mean: f64,
    pub stdev: f64,
    /// d1 and d3 pooled.
    pub d13: ChannelStats,
    pub d2: ChannelStats,
    pub shapiro: Normality,
    pub excluded_curved: usize,
    pub differences: Vec<f64>,
}

/// Mean and sample (n - 1) standard deviation, two-pass.
pub fn summarize(values: &[f64]) -> ChannelStats {
    let n = values.len();
    if n == 0 {
        return ChannelStats {
            n,
            mean: None,
            stdev: None,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stdev = (n >= 2).then(|| {
        let (sq, lin) = values.iter().fold((0.0, 0.0), |(s, l), v| {
            let d = v - mean;
            (s + d * d, l + d)
        });
        ((sq - lin * lin / n as f64) / (n - 1) as f64)
            .max(0.0)
            .sqrt()
    });
    ChannelStats {
        n,
        mean: Some(mean),
        stdev,
    }
}

/// Pooled error statistics of `est - phy` over all channels.
pub fn error_report(
    records: &[ValidationRecord],
    exclude_curved: bool,
) -> Result<ErrorReport, StatsError> {
    let mut excluded_curved = 0;
    let mut pooled = Vec::new();
    let mut d13 = Vec::new();
    let mut d2 = Vec::new();
    for r in records {
        if exclude_curved && r.curved_cut {
            excluded_curved += 1;
            continue;
        }
        for (channel, diff) in r.differences() {
            pooled.push(diff);
            match channel {
                Channel::D2 => d2.push(diff),
                _ => d13.push(diff),
            }
        }
    }
    let all = summarize(&pooled);
    let (Some(mean), Some(stdev)) = (all.mean, all.stdev) else {
        return Err(StatsError::InsufficientData(format!(
            "{} paired measurements, at least 2 required",
            pooled.len()
        )));
    };
    let shapiro = match shapiro_wilk(&pooled) {
        Ok(s) => Normality::Tested(s),
        Err(e) => Normality::NotTested {
            reason: e.to_string(),
        },
    };
    Ok(ErrorReport {
        n: pooled.len(),
        mean,
        stdev,
        d13: summarize(&d13),
        d2: summarize(&d2),
        shapiro,
        excluded_curved,
        differences: pooled,
    })
}
