use std::path::Path;

use nalgebra::Matrix4;

use super::{read_text, write_bytes, IoError};
use crate::geometry::RigidTransform;

/// Four rows of four numbers, row-major, millimetres. Values are written
/// with shortest round-trip formatting so reading restores them exactly.
pub fn transform_to_string(t: &RigidTransform) -> String {
    let mut out = String::new();
    for row in t.to_rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_transform(text: &str) -> Result<RigidTransform, IoError> {
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| IoError::Parse(format!("`{s}`: {e}")))
        })
        .collect::<Result<_, _>>()?;
    if values.len() != 16 {
        return Err(IoError::Parse(format!(
            "expected 16 values, found {}",
            values.len()
        )));
    }
    Ok(RigidTransform::from_matrix(Matrix4::from_row_slice(
        &values,
    ))?)
}

pub fn read_transform(path: &Path) -> Result<RigidTransform, IoError> {
    parse_transform(&read_text(path)?)
}

pub fn write_transform(path: &Path, t: &RigidTransform) -> Result<(), IoError> {
    write_bytes(path, transform_to_string(t).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_file() {
        let t = parse_transform("1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n").unwrap();
        assert_eq!(t, RigidTransform::identity());
        assert!(parse_transform("1 0 0\n").is_err());
        assert!(parse_transform("2 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n").is_err());
    }
}
