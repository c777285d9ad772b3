//! Plane-assignment validation: slab-width estimates against caliper
//! measurements, error statistics with normality testing, and sensitivity
//! of the planes to the input splines.

mod sensitivity;
mod shapiro;
mod validation;

pub use sensitivity::{sensitivity_analysis, CurveVariant, SensitivityReport, TranslationEntry};
pub use shapiro::{normal_quantile, shapiro_wilk, ShapiroWilk};
pub use validation::{
    build_records, compute_estimates, edge_intersection, error_report, summarize, Channel,
    ChannelStats, ErrorReport, Normality, PhysicalWidths, SlabEstimate, ValidationRecord,
};

use thiserror::Error;

use crate::plane::PlaneError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("sample size {0} outside [3, 5000]")]
    OutOfRangeN(usize),
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("edge curve does not cross plane {index}")]
    EdgeIntersectionMissing { index: u32 },
    #[error("plane {index}: {source}")]
    Plane { index: u32, source: PlaneError },
}
