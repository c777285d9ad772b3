use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_error, read_bytes, read_text, write_bytes, CoordinateSystem, IoError};
use crate::geometry::Point3;
use crate::histology::HistologySlide;

/// Metadata stored beside a slide image as `<image>.json`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct Sidecar {
    index: u32,
    pixel_spacing: [f64; 2],
    palette: Vec<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coordinate_system: Option<CoordinateSystem>,
    landmarks: Vec<Landmark>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Landmark {
    pixel: [f64; 2],
    world: [f64; 3],
}

pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Reads the next whitespace-delimited header token, skipping `#` comments.
fn token(bytes: &[u8], pos: &mut usize) -> Result<String, IoError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(IoError::Parse("truncated graymap header".into()));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>), IoError> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos)?;
    if magic != "P5" {
        return Err(IoError::UnsupportedEncoding(format!(
            "graymap magic `{magic}`"
        )));
    }
    let mut number = |what: &str| -> Result<usize, IoError> {
        token(bytes, &mut pos)?
            .parse()
            .map_err(|e| IoError::Parse(format!("graymap {what}: {e}")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(IoError::Parse(format!("graymap maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = &bytes[(pos + 1).min(bytes.len())..];
    let wide = maxval > 255;
    let expected = width * height * if wide { 2 } else { 1 };
    if data.len() != expected {
        return Err(IoError::HeaderMismatch(format!(
            "{} raster bytes, expected {expected}",
            data.len()
        )));
    }
    let pixels = if wide {
        data.chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        data.iter().map(|&b| b as u16).collect()
    };
    Ok((width, height, pixels))
}

fn encode_pgm(slide: &HistologySlide) -> Vec<u8> {
    let maxval = slide.pixels.iter().copied().max().unwrap_or(0).max(1);
    let wide = maxval > 255;
    let maxval = if wide { 65535 } else { 255 };
    let mut out = format!("P5\n{} {}\n{maxval}\n", slide.width, slide.height).into_bytes();
    for &p in &slide.pixels {
        if wide {
            out.extend_from_slice(&p.to_be_bytes());
        } else {
            out.push(p as u8);
        }
    }
    out
}

/// Reads a P5 labelmap and its sidecar; landmark world positions come back in RAS.
pub fn read_slide(image: &Path) -> Result<HistologySlide, IoError> {
    read_slide_declared(image, None)
}

/// Reads a slide whose sidecar may omit its coordinate system, using
/// `declared` (RAS when absent) in that case.
pub fn read_slide_declared(
    image: &Path,
    declared: Option<CoordinateSystem>,
) -> Result<HistologySlide, IoError> {
    let (width, height, pixels) = decode_pgm(&read_bytes(image)?)?;
    let meta: Sidecar =
        serde_json::from_str(&read_text(&sidecar_path(image))?).map_err(parse_error)?;
    let cs = match (meta.coordinate_system, declared) {
        (Some(a), Some(b)) if a != b => {
            return Err(IoError::HeaderMismatch(format!(
                "slide declares {}, manifest declares {}",
                a.as_str(),
                b.as_str()
            )))
        }
        (Some(a), _) => a,
        (None, b) => b.unwrap_or_default(),
    };
    let slide = HistologySlide {
        index: meta.index,
        width,
        height,
        pixels,
        pixel_spacing: meta.pixel_spacing,
        palette: meta.palette,
        landmarks_image: meta.landmarks.iter().map(|l| l.pixel).collect(),
        landmarks_world: meta
            .landmarks
            .iter()
            .map(|l| Point3::from(cs.convert(l.world)))
            .collect(),
    };
    slide.validate()?;
    Ok(slide)
}

pub fn write_slide(image: &Path, slide: &HistologySlide) -> Result<(), IoError> {
    slide.validate()?;
    let meta = Sidecar {
        index: slide.index,
        pixel_spacing: slide.pixel_spacing,
        palette: slide.palette.clone(),
        coordinate_system: Some(CoordinateSystem::Ras),
        landmarks: slide
            .landmarks_image
            .iter()
            .zip(&slide.landmarks_world)
            .map(|(p, w)| Landmark {
                pixel: *p,
                world: [w.x, w.y, w.z],
            })
            .collect(),
    };
    write_bytes(image, &encode_pgm(slide))?;
    let json = serde_json::to_string_pretty(&meta).expect("sidecar serialization");
    write_bytes(&sidecar_path(image), json.as_bytes())
}
