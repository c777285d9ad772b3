use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{SimilarityTransform2D, Vec2};
use crate::histology::HistologySlide;
use crate::plane::DissectionPlane;

const PIXEL_MM: f64 = 0.1;
const MARGIN_MM: f64 = 5.0;
const SLAB_HALF_HEIGHT_MM: f64 = 4.0;

/// Renders a labelmap of the cut face on `plane`: bone (1) spanning the two
/// anchors with a tumour (2) inclusion. The image is shrunk by `shrink`
/// relative to the plane and landmark picks carry Gaussian noise of
/// `landmark_sigma` mm. Returns the slide and the true image-to-plane map.
pub fn render_slide(
    plane: &DissectionPlane,
    shrink: f64,
    landmark_sigma: f64,
    rng: &mut impl Rng,
) -> (HistologySlide, SimilarityTransform2D) {
    let half_chord = 0.5 * (plane.anchor_b - plane.anchor_a).norm();
    let half_w = half_chord + MARGIN_MM;
    let half_h = SLAB_HALF_HEIGHT_MM + MARGIN_MM;
    let scale = 1.0 / shrink;
    let truth = SimilarityTransform2D {
        scale,
        translation: Vec2::new(-half_w, -half_h),
        rotation_rad: 0.0,
    };
    let width = (2.0 * half_w * shrink / PIXEL_MM).ceil() as usize + 1;
    let height = (2.0 * half_h * shrink / PIXEL_MM).ceil() as usize + 1;
    let to_plane = |col: f64, row: f64| truth.apply(&Vec2::new(col * PIXEL_MM, row * PIXEL_MM));

    let mut pixels = vec![0u16; width * height];
    for row in 0..height {
        for col in 0..width {
            let uv = to_plane(col as f64, row as f64);
            let tumour = (uv.x / (0.4 * half_chord)).powi(2) + (uv.y / 2.0).powi(2) <= 1.0;
            let bone = uv.x.abs() <= half_chord && uv.y.abs() <= SLAB_HALF_HEIGHT_MM;
            pixels[row * width + col] = if tumour {
                2
            } else if bone {
                1
            } else {
                0
            };
        }
    }

    let plane_points = [
        Vec2::new(-half_chord, 0.0),
        Vec2::new(half_chord, 0.0),
        Vec2::new(0.0, SLAB_HALF_HEIGHT_MM),
        Vec2::new(0.0, -SLAB_HALF_HEIGHT_MM),
        Vec2::new(0.5 * half_chord, -0.5 * SLAB_HALF_HEIGHT_MM),
    ];
    let noise = (landmark_sigma > 0.0).then(|| Normal::new(0.0, landmark_sigma).expect("sigma"));
    let mut landmarks_image = Vec::new();
    let mut landmarks_world = Vec::new();
    for q in plane_points {
        let img = (q - truth.translation) / scale;
        let mut pick = img;
        if let Some(n) = &noise {
            pick += Vec2::new(n.sample(rng), n.sample(rng));
        }
        landmarks_image.push([pick.x / PIXEL_MM, pick.y / PIXEL_MM]);
        landmarks_world.push(plane.to_world(q.x, q.y));
    }

    let slide = HistologySlide {
        index: plane.index,
        width,
        height,
        pixels,
        pixel_spacing: [PIXEL_MM, PIXEL_MM],
        palette: vec![1, 2],
        landmarks_image,
        landmarks_world,
    };
    (slide, truth)
}
