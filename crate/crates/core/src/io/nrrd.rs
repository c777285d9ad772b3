use std::path::Path;

use nalgebra::Matrix3;

use super::{read_bytes, write_bytes, IoError};
use crate::fusion::{VolumeGrid, VoxelType};
use crate::geometry::{Point3, Vec3};
use crate::io::CoordinateSystem;

fn parse_vector(s: &str) -> Result<Vec3, IoError> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| IoError::Parse(format!("malformed vector `{s}`")))?;
    let v: Vec<f64> = inner
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| IoError::Parse(format!("vector `{s}`: {e}")))?;
    if v.len() != 3 || v.iter().any(|x| !x.is_finite()) {
        return Err(IoError::Parse(format!(
            "vector `{s}` is not a finite 3-vector"
        )));
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn fmt_vector(v: &Vec3) -> String {
    format!("({},{},{})", v.x, v.y, v.z)
}

fn voxel_type(s: &str) -> Result<VoxelType, IoError> {
    match s {
        "short" | "short int" | "signed short" | "signed short int" | "int16" | "int16_t" => {
            Ok(VoxelType::Short)
        }
        "float" => Ok(VoxelType::Float),
        other => Err(IoError::UnsupportedEncoding(format!("type `{other}`"))),
    }
}

/// Parses an attached-header NRRD: 3D short/float, raw, little endian.
pub fn decode_volume(bytes: &[u8]) -> Result<VolumeGrid, IoError> {
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| IoError::Parse("header is not terminated by a blank line".into()))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|e| IoError::Parse(e.to_string()))?;
    let data = &bytes[split + 2..];
    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if !magic.starts_with("NRRD000") {
        return Err(IoError::Parse(format!("bad magic `{magic}`")));
    }

    let mut kind = None;
    let mut dimension = None;
    let mut sizes = None;
    let mut directions = None;
    let mut origin = None;
    let mut space = CoordinateSystem::Ras;
    let mut encoding = None;
    let mut endian = "little".to_string();
    for line in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(IoError::Parse(format!("malformed header line `{line}`")));
        };
        // `key:=value` lines are key/value comments.
        if value.starts_with('=') {
            continue;
        }
        let value = value.trim();
        match key.trim() {
            "type" => kind = Some(voxel_type(value)?),
            "dimension" => {
                dimension = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| IoError::Parse(e.to_string()))?,
                )
            }
            "sizes" => {
                let s: Vec<usize> = value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|e| IoError::Parse(format!("sizes: {e}")))?;
                sizes = Some(s);
            }
            "space" => {
                space = match value {
                    "right-anterior-superior" | "RAS" => CoordinateSystem::Ras,
                    "left-posterior-superior" | "LPS" => CoordinateSystem::Lps,
                    other => return Err(IoError::UnknownCoordinateSystem(other.to_string())),
                }
            }
            "space directions" => {
                let v: Vec<Vec3> = value
                    .split_whitespace()
                    .map(parse_vector)
                    .collect::<Result<_, _>>()?;
                directions = Some(v);
            }
            "space origin" => origin = Some(parse_vector(value)?),
            "encoding" => encoding = Some(value.to_string()),
            "endian" => endian = value.to_string(),
            "data file" | "datafile" => {
                return Err(IoError::UnsupportedEncoding("detached data file".into()))
            }
            _ => {}
        }
    }

    let encoding = encoding.ok_or_else(|| IoError::Missing("encoding".into()))?;
    if encoding != "raw" {
        return Err(IoError::UnsupportedEncoding(encoding));
    }
    if endian != "little" {
        return Err(IoError::UnsupportedEncoding(format!("{endian} endian")));
    }
    let kind = kind.ok_or_else(|| IoError::Missing("type".into()))?;
    if dimension != Some(3) {
        return Err(IoError::HeaderMismatch(format!(
            "dimension {dimension:?}, expected 3"
        )));
    }
    let sizes = sizes.ok_or_else(|| IoError::Missing("sizes".into()))?;
    if sizes.len() != 3 {
        return Err(IoError::HeaderMismatch(format!(
            "{} sizes for dimension 3",
            sizes.len()
        )));
    }
    let dirs = directions.ok_or_else(|| IoError::Missing("space directions".into()))?;
    if dirs.len() != 3 {
        return Err(IoError::HeaderMismatch(
            "expected 3 space directions".into(),
        ));
    }
    let origin = origin.ok_or_else(|| IoError::Missing("space origin".into()))?;

    let to_ras = |v: &Vec3| Vec3::from(space.convert([v.x, v.y, v.z]));
    let mut spacing = [0.0; 3];
    let mut cols = [Vec3::zeros(); 3];
    for a in 0..3 {
        let d = to_ras(&dirs[a]);
        spacing[a] = d.norm();
        if !(spacing[a] > 0.0) {
            return Err(IoError::HeaderMismatch(format!("zero space direction {a}")));
        }
        cols[a] = d / spacing[a];
    }
    let dims = [sizes[0], sizes[1], sizes[2]];
    let count = dims.iter().product::<usize>();
    let width = match kind {
        VoxelType::Short => 2,
        VoxelType::Float => 4,
    };
    if data.len() != count * width {
        return Err(IoError::HeaderMismatch(format!(
            "{} data bytes for {count} voxels of {width} bytes",
            data.len()
        )));
    }
    let voxels: Vec<f32> = match kind {
        VoxelType::Short => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
            .collect(),
        VoxelType::Float => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    };
    let grid = VolumeGrid::new(
        dims,
        spacing,
        Point3::from(to_ras(&origin)),
        Matrix3::from_columns(&cols),
        voxels,
        kind,
    )
    .map_err(|e| IoError::HeaderMismatch(e.to_string()))?;
    Ok(grid)
}

/// Encodes a volume as attached-header NRRD in RAS space. Short volumes
/// are rounded and saturated to 16-bit integers.
pub fn encode_volume(volume: &VolumeGrid) -> Vec<u8> {
    let type_name = match volume.voxel_type {
        VoxelType::Short => "short",
        VoxelType::Float => "float",
    };
    let dirs: Vec<String> = (0..3)
        .map(|a| fmt_vector(&(volume.direction.column(a) * volume.spacing[a])))
        .collect();
    let header = format!(
        "NRRD0004\ntype: {type_name}\ndimension: 3\nspace: right-anterior-superior\n\
         sizes: {} {} {}\nspace directions: {}\nkinds: domain domain domain\n\
         endian: little\nencoding: raw\nspace origin: {}\n\n",
        volume.dims[0],
        volume.dims[1],
        volume.dims[2],
        dirs.join(" "),
        fmt_vector(&volume.origin.coords),
    );
    let mut out = header.into_bytes();
    match volume.voxel_type {
        VoxelType::Short => {
            for v in &volume.voxels {
                out.extend_from_slice(
                    &(v.round().clamp(i16::MIN as f32, i16::MAX as f32) as i16).to_le_bytes(),
                );
            }
        }
        VoxelType::Float => {
            for v in &volume.voxels {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn read_volume(path: &Path) -> Result<VolumeGrid, IoError> {
    decode_volume(&read_bytes(path)?)
}

pub fn write_volume(path: &Path, volume: &VolumeGrid) -> Result<(), IoError> {
    write_bytes(path, &encode_volume(volume))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let mut v = VolumeGrid::filled([3, 2, 2], [0.5, 1.0, 2.0], Point3::new(1., -2., 3.), 0.0);
        for (i, x) in v.voxels.iter_mut().enumerate() {
            *x = i as f32 * 0.37 - 4.0;
        }
        let r = decode_volume(&encode_volume(&v)).unwrap();
        assert_eq!(r, v);
    }

    #[test]
    fn rejects_gzip_and_bad_counts() {
        let v = VolumeGrid::filled([2, 2, 2], [1.0; 3], Point3::origin(), 1.0);
        let text =
            String::from_utf8_lossy(&encode_volume(&v)).replace("encoding: raw", "encoding: gzip");
        assert!(matches!(
            decode_volume(text.as_bytes()),
            Err(IoError::UnsupportedEncoding(_))
        ));
        let mut bytes = encode_volume(&v);
        bytes.pop();
        assert!(matches!(
            decode_volume(&bytes),
            Err(IoError::HeaderMismatch(_))
        ));
    }

    #[test]
    fn lps_header_converted() {
        let header = "NRRD0004\ntype: short\ndimension: 3\nspace: left-posterior-superior\n\
                      sizes: 1 1 1\nspace directions: (-2,0,0) (0,-1,0) (0,0,1)\n\
                      endian: little\nencoding: raw\nspace origin: (10,20,30)\n\n";
        let mut bytes = header.as_bytes().to_vec();
        bytes.extend_from_slice(&(-7i16).to_le_bytes());
        let v = decode_volume(&bytes).unwrap();
        assert_eq!(v.origin, Point3::new(-10.0, -20.0, 30.0));
        assert_eq!(v.spacing, [2.0, 1.0, 1.0]);
        assert_eq!(v.direction, Matrix3::identity());
        assert_eq!(v.voxels, vec![-7.0]);
    }
}
