//! Co-location of 2D histology dissection planes inside ex-vivo CT volumes.
//!
//! The pipeline fits cubic models to bisection-edge markups, solves each
//! dissection-cut plane from laboratory offset measurements, poses histology
//! labelmaps on those planes, fuses the two bisection CT volumes, and
//! quantifies plane-assignment error and input sensitivity.

// Negated float comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod exec;
pub mod fusion;
pub mod geometry;
pub mod histology;
pub mod io;
pub mod plane;
pub mod stats;
pub mod synth;

mod error;

pub use error::{Error, Result, EXIT_INVALID, EXIT_NUMERICAL};
pub use exec::Exec;
pub use geometry::{
    FiducialReference, GeometryError, MarkupCurve, ParametricCubic, Point3, RigidTransform,
    SimilarityTransform2D, Vec3,
};
