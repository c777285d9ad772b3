//! Posing digitized histology labelmaps on their dissection planes and
//! fitting the in-plane scale and translation from landmark pairs.

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Point3, RigidTransform, SimilarityTransform2D, Vec2};
use crate::plane::DissectionPlane;

/// Maximum distance of a world landmark from its plane before it is rejected.
pub const LANDMARK_PLANE_TOL_MM: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HistologyError {
    #[error("landmarks have zero spread")]
    DegenerateLandmarks,
    #[error("landmark pairs are anti-correlated (slide may be mirrored), scale {0}")]
    NegativeScale(f64),
    #[error("need at least 3 landmark pairs, got {0}")]
    TooFewLandmarks(usize),
    #[error("landmark lists differ in length ({0} vs {1})")]
    LandmarkMismatch(usize, usize),
    #[error("landmark {index} lies {distance} mm from plane {plane}")]
    LandmarkOffPlane {
        index: usize,
        distance: f64,
        plane: u32,
    },
    #[error("pixel spacing must be positive, got ({0}, {1})")]
    InvalidSpacing(f64, f64),
    #[error("label {0} is not in the declared palette")]
    UnknownLabel(u16),
    #[error("pixel buffer has {got} values, expected {expected}")]
    PixelCount { got: usize, expected: usize },
    #[error("duplicate slide index {0}")]
    DuplicateSlide(u32),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A digitized labelmap with its landmark correspondences.
///
/// Pixel `(col, row)` has image coordinates `(col * sx, row * sy)` mm; the
/// column direction maps to the plane's u axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistologySlide {
    pub index: u32,
    pub width: usize,
    pub height: usize,
    /// Row-major labels, 0 = background.
    pub pixels: Vec<u16>,
    pub pixel_spacing: [f64; 2],
    /// Declared tissue classes, e.g. 1 = bone, 2 = tumour.
    pub palette: Vec<u16>,
    /// Landmarks in pixel coordinates `(col, row)`.
    pub landmarks_image: Vec<[f64; 2]>,
    pub landmarks_world: Vec<Point3>,
}

impl HistologySlide {
    pub fn validate(&self) -> Result<(), HistologyError> {
        let [sx, sy] = self.pixel_spacing;
        if !(sx > 0.0 && sy > 0.0 && sx.is_finite() && sy.is_finite()) {
            return Err(HistologyError::InvalidSpacing(sx, sy));
        }
        if self.pixels.len() != self.width * self.height {
            return Err(HistologyError::PixelCount {
                got: self.pixels.len(),
                expected: self.width * self.height,
            });
        }
        if self.landmarks_image.len() != self.landmarks_world.len() {
            return Err(HistologyError::LandmarkMismatch(
                self.landmarks_image.len(),
                self.landmarks_world.len(),
            ));
        }
        if self.landmarks_image.len() < 3 {
            return Err(HistologyError::TooFewLandmarks(self.landmarks_image.len()));
        }
        if let Some(&bad) = self
            .pixels
            .iter()
            .find(|&&v| v != 0 && !self.palette.contains(&v))
        {
            return Err(HistologyError::UnknownLabel(bad));
        }
        Ok(())
    }

    /// Image-plane millimetre coordinates of a pixel position.
    pub fn image_mm(&self, col: f64, row: f64) -> Vec2 {
        Vec2::new(col * self.pixel_spacing[0], row * self.pixel_spacing[1])
    }

    pub fn label(&self, col: usize, row: usize) -> u16 {
        self.pixels[row * self.width + col]
    }
}

/// Rigid pose mapping plane coordinates `(u, v, 0)` to world.
pub fn plane_pose(plane: &DissectionPlane) -> RigidTransform {
    let r = Matrix3::from_columns(&[plane.u_axis, plane.v_axis, plane.normal]);
    RigidTransform::from_parts_unchecked(r, plane.origin.coords)
}

/// Least-squares fit of `q ~ s p + tau` (or `s Rot p + tau` with rotation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFit {
    pub transform: SimilarityTransform2D,
    pub residual_rms: f64,
}

/// Closed-form uniform scale and translation from `>= 3` point pairs.
pub fn fit_inplane_similarity(
    image: &[Vec2],
    target: &[Vec2],
) -> Result<SimilarityFit, HistologyError> {
    fit_similarity(image, target, false)
}

/// Scale, rotation and translation (2D Procrustes); used for robustness
/// experiments on slides whose in-plane orientation is uncertain.
pub fn fit_inplane_similarity_with_rotation(
    image: &[Vec2],
    target: &[Vec2],
) -> Result<SimilarityFit, HistologyError> {
    fit_similarity(image, target, true)
}

fn fit_similarity(
    image: &[Vec2],
    target: &[Vec2],
    allow_rotation: bool,
) -> Result<SimilarityFit, HistologyError> {
    if image.len() != target.len() {
        return Err(HistologyError::LandmarkMismatch(image.len(), target.len()));
    }
    if image.len() < 3 {
        return Err(HistologyError::TooFewLandmarks(image.len()));
    }
    let n = image.len() as f64;
    let pbar = image.iter().sum::<Vec2>() / n;
    let qbar = target.iter().sum::<Vec2>() / n;
    let spread: f64 = image.iter().map(|p| (p - pbar).norm_squared()).sum();
    if spread <= f64::EPSILON * (1.0 + pbar.norm_squared()) {
        return Err(HistologyError::DegenerateLandmarks);
    }
    let (dot, cross) = image.iter().zip(target).fold((0.0, 0.0), |(d, c), (p, q)| {
        let (dp, dq) = (p - pbar, q - qbar);
        (d + dp.dot(&dq), c + dp.x * dq.y - dp.y * dq.x)
    });
    let (scale, rotation_rad) = if allow_rotation {
        (dot.hypot(cross) / spread, cross.atan2(dot))
    } else {
        (dot / spread, 0.0)
    };
    if !(scale > 0.0) {
        return Err(HistologyError::NegativeScale(scale));
    }
    let mut transform = SimilarityTransform2D::new(scale, Vec2::zeros())?;
    transform.rotation_rad = rotation_rad;
    transform.translation = qbar - transform.linear() * pbar;
    let sq: f64 = image
        .iter()
        .zip(target)
        .map(|(p, q)| (transform.apply(p) - q).norm_squared())
        .sum();
    Ok(SimilarityFit {
        transform,
        residual_rms: (sq / n).sqrt(),
    })
}

/// A slide posed in world space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedSlide {
    pub index: u32,
    pub plane_pose: RigidTransform,
    pub in_plane: SimilarityTransform2D,
    /// Affine map from homogeneous pixel coordinates `(col, row, 0, 1)` to world mm.
    pub pixel_to_world: Matrix4<f64>,
    pub landmark_rms: f64,
    /// Largest landmark distance from the plane before projection.
    pub max_off_plane: f64,
}

impl PlacedSlide {
    pub fn pixel_world(&self, col: f64, row: f64) -> Point3 {
        let h = self.pixel_to_world * nalgebra::Vector4::new(col, row, 0.0, 1.0);
        Point3::new(h.x, h.y, h.z)
    }
}

pub fn place_slide(
    slide: &HistologySlide,
    plane: &DissectionPlane,
) -> Result<PlacedSlide, HistologyError> {
    place_slide_with(slide, plane, false)
}

/// Places a slide; `allow_rotation` enables the Procrustes variant.
pub fn place_slide_with(
    slide: &HistologySlide,
    plane: &DissectionPlane,
    allow_rotation: bool,
) -> Result<PlacedSlide, HistologyError> {
    slide.validate()?;
    let mut max_off_plane: f64 = 0.0;
    let mut target = Vec::with_capacity(slide.landmarks_world.len());
    for (index, w) in slide.landmarks_world.iter().enumerate() {
        let distance = plane.signed_distance(w).abs();
        if distance > LANDMARK_PLANE_TOL_MM {
            return Err(HistologyError::LandmarkOffPlane {
                index,
                distance,
                plane: plane.index,
            });
        }
        max_off_plane = max_off_plane.max(distance);
        target.push(plane.project(w));
    }
    let image: Vec<Vec2> = slide
        .landmarks_image
        .iter()
        .map(|&[c, r]| slide.image_mm(c, r))
        .collect();
    let fit = fit_similarity(&image, &target, allow_rotation)?;

    let pose = plane_pose(plane);
    let lin = fit.transform.linear();
    let [sx, sy] = slide.pixel_spacing;
    // pixel -> image mm -> plane (u, v) -> world
    let mut in_plane = Matrix4::identity();
    in_plane[(0, 0)] = lin[(0, 0)] * sx;
    in_plane[(0, 1)] = lin[(0, 1)] * sy;
    in_plane[(1, 0)] = lin[(1, 0)] * sx;
    in_plane[(1, 1)] = lin[(1, 1)] * sy;
    in_plane[(0, 3)] = fit.transform.translation.x;
    in_plane[(1, 3)] = fit.transform.translation.y;
    let pixel_to_world = pose.matrix() * in_plane;

    Ok(PlacedSlide {
        index: slide.index,
        plane_pose: pose,
        in_plane: fit.transform,
        pixel_to_world,
        landmark_rms: fit.residual_rms,
        max_off_plane,
    })
}

/// Placed slides of one bisection, ordered by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistologyVolume {
    pub specimen_id: String,
    pub bisection_id: String,
    pub slides: Vec<PlacedSlide>,
}

impl HistologyVolume {
    pub fn new(
        specimen_id: impl Into<String>,
        bisection_id: impl Into<String>,
        mut slides: Vec<PlacedSlide>,
    ) -> Result<Self, HistologyError> {
        slides.sort_by_key(|s| s.index);
        if let Some(w) = slides.windows(2).find(|w| w[0].index == w[1].index) {
            return Err(HistologyError::DuplicateSlide(w[0].index));
        }
        Ok(Self {
            specimen_id: specimen_id.into(),
            bisection_id: bisection_id.into(),
            slides,
        })
    }
}

/// Landmark reprojection RMS of a placed slide against its world landmarks.
pub fn reprojection_rms(placed: &PlacedSlide, slide: &HistologySlide) -> f64 {
    let sq: f64 = slide
        .landmarks_image
        .iter()
        .zip(&slide.landmarks_world)
        .map(|(&[c, r], w)| (placed.pixel_world(c, r) - w).norm_squared())
        .sum();
    (sq / slide.landmarks_image.len() as f64).sqrt()
}
