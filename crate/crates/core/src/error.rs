use thiserror::Error;

use crate::fusion::FusionError;
use crate::geometry::GeometryError;
use crate::histology::HistologyError;
use crate::io::IoError;
use crate::plane::PlaneError;
use crate::stats::StatsError;
use crate::synth::SynthError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Plane(#[from] PlaneError),
    #[error(transparent)]
    Histology(#[from] HistologyError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit status for input or validation problems.
pub const EXIT_INVALID: i32 = 1;
/// Process exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 2;

fn geometry_numerical(e: &GeometryError) -> bool {
    matches!(e, GeometryError::StationaryPoint { .. })
}

fn plane_numerical(e: &PlaneError) -> bool {
    match e {
        PlaneError::InvalidInput(_) | PlaneError::Unsorted(_) => false,
        PlaneError::Geometry(g) => geometry_numerical(g),
        _ => true,
    }
}

impl Error {
    /// True for failures of the numerics on valid input (no root, degenerate
    /// tangents, collinear fiducials, ...), false for malformed input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Geometry(e) => geometry_numerical(e),
            Error::Plane(e) => plane_numerical(e),
            Error::Histology(e) => matches!(
                e,
                HistologyError::DegenerateLandmarks | HistologyError::NegativeScale(_)
            ),
            Error::Fusion(e) => matches!(e, FusionError::CollinearFiducials),
            Error::Stats(e) => match e {
                StatsError::ZeroVariance | StatsError::EdgeIntersectionMissing { .. } => true,
                StatsError::Plane { source, .. } => plane_numerical(source),
                _ => false,
            },
            Error::Synth(e) => match e {
                SynthError::InvalidParams(_) => false,
                SynthError::Pipeline { source, .. } => plane_numerical(source),
                SynthError::Stats(s) => Error::Stats(s.clone()).is_numerical(),
                SynthError::Geometry(g) => geometry_numerical(g),
            },
            Error::Io(e) => match e {
                IoError::Geometry(g) => geometry_numerical(g),
                _ => false,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            EXIT_NUMERICAL
        } else {
            EXIT_INVALID
        }
    }

    /// Name of the innermost error variant, e.g. `NoRoot`.
    pub fn kind(&self) -> String {
        let debug = match self {
            Error::Geometry(e) => format!("{e:?}"),
            Error::Plane(PlaneError::Geometry(e)) => format!("{e:?}"),
            Error::Plane(e) => format!("{e:?}"),
            Error::Histology(e) => format!("{e:?}"),
            Error::Fusion(e) => format!("{e:?}"),
            Error::Stats(StatsError::Plane { source, .. }) => format!("{source:?}"),
            Error::Stats(e) => format!("{e:?}"),
            Error::Synth(SynthError::Pipeline { source, .. }) => format!("{source:?}"),
            Error::Synth(e) => format!("{e:?}"),
            Error::Io(e) => format!("{e:?}"),
        };
        debug
            .split(|c: char| !c.is_alphanumeric())
            .next()
            .unwrap_or_default()
            .to_string()
    }
}
