use serde::{Deserialize, Serialize};

use super::{compute_estimates, summarize, Channel, StatsError};
use crate::geometry::{angle_between, FiducialReference, ParametricCubic};
use crate::plane::{assign_all_planes, DissectionMeasurement, DissectionPlane};

/// One reading of the input splines: both bisection edges and, optionally,
/// the outer-contour curve used for `d2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveVariant {
    pub a: ParametricCubic,
    pub b: ParametricCubic,
    pub edge: Option<ParametricCubic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationEntry {
    pub index: u32,
    pub channel: Channel,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// `(plane index, angle between the variants' normals in degrees)`.
    pub rotation_deg: Vec<(u32, f64)>,
    pub translation_mm: Vec<TranslationEntry>,
    pub max_rotation_deg: f64,
    pub mean_translation_mm: Option<f64>,
    pub stdev_translation_mm: Option<f64>,
}

fn solve(
    v: &CurveVariant,
    f_ref: &FiducialReference,
    measurements: &[DissectionMeasurement],
) -> Result<Vec<DissectionPlane>, StatsError> {
    let outcomes = assign_all_planes(&v.a, &v.b, f_ref, measurements)
        .map_err(|source| StatsError::Plane { index: 0, source })?;
    outcomes
        .into_iter()
        .map(|o| {
            o.result
                .map(|p| p.plane)
                .map_err(|source| StatsError::Plane {
                    index: o.index,
                    source,
                })
        })
        .collect()
}

/// Plane rotation and slab-width translation between two spline readings
/// of the same specimen and measurement set.
pub fn sensitivity_analysis(
    variant_a: &CurveVariant,
    variant_b: &CurveVariant,
    f_ref: &FiducialReference,
    measurements: &[DissectionMeasurement],
) -> Result<SensitivityReport, StatsError> {
    let pa = solve(variant_a, f_ref, measurements)?;
    let pb = solve(variant_b, f_ref, measurements)?;

    let rotation_deg: Vec<(u32, f64)> = pa
        .iter()
        .zip(&pb)
        .map(|(a, b)| (a.index, angle_between(&a.normal, &b.normal).to_degrees()))
        .collect();

    let ea = compute_estimates(&pa, variant_a.edge.as_ref())?;
    let eb = compute_estimates(&pb, variant_b.edge.as_ref())?;
    let mut translation_mm = Vec::new();
    for (x, y) in ea.iter().zip(&eb) {
        translation_mm.push(TranslationEntry {
            index: x.index,
            channel: Channel::D1,
            value: (x.d1 - y.d1).abs(),
        });
        if let (Some(u), Some(v)) = (x.d2, y.d2) {
            translation_mm.push(TranslationEntry {
                index: x.index,
                channel: Channel::D2,
                value: (u - v).abs(),
            });
        }
        translation_mm.push(TranslationEntry {
            index: x.index,
            channel: Channel::D3,
            value: (x.d3 - y.d3).abs(),
        });
    }
    let values: Vec<f64> = translation_mm.iter().map(|t| t.value).collect();
    let stats = summarize(&values);
    Ok(SensitivityReport {
        max_rotation_deg: rotation_deg.iter().map(|r| r.1).fold(0.0, f64::max),
        rotation_deg,
        translation_mm,
        mean_translation_mm: stats.mean,
        stdev_translation_mm: stats.stdev,
    })
}
