use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_error, read_text, write_bytes, IoError};
use crate::plane::DissectionMeasurement;
use crate::stats::PhysicalWidths;

const REQUIRED: [&str; 5] = ["index", "d_a_mm", "d_b_mm", "curved", "offset_mm"];
const PHYSICAL: [&str; 3] = ["d1_phy_mm", "d2_phy_mm", "d3_phy_mm"];

/// Laboratory measurement table sorted by cut index, with optional caliper
/// slab widths recorded on the row of each slab's closing cut.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementTable {
    pub measurements: Vec<DissectionMeasurement>,
    pub physical: Vec<PhysicalWidths>,
    /// Whether the physical columns are present.
    pub has_physical: bool,
}

impl MeasurementTable {
    pub fn physical_for(&self, index: u32) -> PhysicalWidths {
        self.measurements
            .iter()
            .position(|m| m.index == index)
            .map(|i| self.physical[i])
            .unwrap_or_default()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    index: u32,
    d_a_mm: f64,
    d_b_mm: f64,
    curved: String,
    offset_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d1_phy_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d2_phy_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d3_phy_mm: Option<f64>,
}

fn parse_flag(s: &str) -> Result<bool, IoError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "false" | "no" | "" => Ok(false),
        "1" | "true" | "yes" => Ok(true),
        other => Err(IoError::Parse(format!("invalid curved flag `{other}`"))),
    }
}

pub fn parse_measurements(text: &str) -> Result<MeasurementTable, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| IoError::Parse("missing header row".into()))?
        .map_err(parse_error)?;
    let names: Vec<&str> = header.iter().collect();
    let has_physical = match names.len() {
        5 => false,
        8 => true,
        n => {
            return Err(IoError::Parse(format!(
                "expected 5 or 8 columns, found {n}"
            )))
        }
    };
    let expected: Vec<&str> = REQUIRED
        .iter()
        .chain(PHYSICAL.iter())
        .take(names.len())
        .copied()
        .collect();
    if names != expected {
        return Err(IoError::Parse(format!("unexpected header {names:?}")));
    }

    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(parse_error)?;
        let row: Row = record.deserialize(Some(&header)).map_err(parse_error)?;
        rows.push(row);
    }
    let mut seen = HashSet::new();
    for r in &rows {
        if !seen.insert(r.index) {
            return Err(IoError::DuplicateIndex(r.index));
        }
        let values = [
            Some(r.d_a_mm),
            Some(r.d_b_mm),
            Some(r.offset_mm),
            r.d1_phy_mm,
            r.d2_phy_mm,
            r.d3_phy_mm,
        ];
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(IoError::Parse(format!(
                "non-finite value on row {}",
                r.index
            )));
        }
        let widths = [
            Some(r.d_a_mm),
            Some(r.d_b_mm),
            r.d1_phy_mm,
            r.d2_phy_mm,
            r.d3_phy_mm,
        ];
        if widths.iter().flatten().any(|v| *v < 0.0) {
            return Err(IoError::NegativeDistance(r.index));
        }
    }
    rows.sort_by_key(|r| r.index);
    let mut table = MeasurementTable {
        has_physical,
        ..Default::default()
    };
    for r in rows {
        table.measurements.push(DissectionMeasurement {
            index: r.index,
            d_a: r.d_a_mm,
            d_b: r.d_b_mm,
            curved_cut: parse_flag(&r.curved)?,
            offset: r.offset_mm,
        });
        table.physical.push(PhysicalWidths {
            d1: r.d1_phy_mm,
            d2: r.d2_phy_mm,
            d3: r.d3_phy_mm,
        });
    }
    Ok(table)
}

pub fn read_measurements(path: &Path) -> Result<MeasurementTable, IoError> {
    parse_measurements(&read_text(path)?)
}

pub fn measurements_to_string(table: &MeasurementTable) -> String {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    let header: Vec<&str> = if table.has_physical {
        REQUIRED.iter().chain(PHYSICAL.iter()).copied().collect()
    } else {
        REQUIRED.to_vec()
    };
    writer.write_record(&header).expect("in-memory write");
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (i, m) in table.measurements.iter().enumerate() {
        let mut fields = vec![
            m.index.to_string(),
            m.d_a.to_string(),
            m.d_b.to_string(),
            (m.curved_cut as u8).to_string(),
            m.offset.to_string(),
        ];
        if table.has_physical {
            let p = table.physical.get(i).copied().unwrap_or_default();
            fields.extend([fmt(p.d1), fmt(p.d2), fmt(p.d3)]);
        }
        writer.write_record(&fields).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf8")
}

pub fn write_measurements(path: &Path, table: &MeasurementTable) -> Result<(), IoError> {
    write_bytes(path, measurements_to_string(table).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "index,d_a_mm,d_b_mm,curved,offset_mm\n";

    #[test]
    fn single_row() {
        let t = parse_measurements(&format!("{HEADER}1,30,30,0,0\n")).unwrap();
        assert_eq!(
            t.measurements,
            vec![DissectionMeasurement::new(1, 30.0, 30.0)]
        );
        assert!(!t.has_physical);
    }

    #[test]
    fn duplicate_and_negative() {
        let dup = format!("{HEADER}1,30,30,0,0\n1,40,40,0,0\n");
        assert_eq!(parse_measurements(&dup), Err(IoError::DuplicateIndex(1)));
        let neg = format!("{HEADER}2,-1,30,0,0\n");
        assert_eq!(parse_measurements(&neg), Err(IoError::NegativeDistance(2)));
    }

    #[test]
    fn sorted_with_physical() {
        let text = "index,d_a_mm,d_b_mm,curved,offset_mm,d1_phy_mm,d2_phy_mm,d3_phy_mm\n\
                    3,50,51,1,0.5,20.1,,19.9\n1,30,30,0,0,,,\n";
        let t = parse_measurements(text).unwrap();
        assert_eq!(t.measurements[0].index, 1);
        assert!(t.measurements[1].curved_cut);
        assert_eq!(t.physical_for(3).d1, Some(20.1));
        assert_eq!(t.physical_for(3).d2, None);
        assert_eq!(parse_measurements(&measurements_to_string(&t)).unwrap(), t);
    }

    #[test]
    fn bad_header() {
        assert!(matches!(
            parse_measurements("idx,d_a_mm,d_b_mm,curved,offset_mm\n"),
            Err(IoError::Parse(_))
        ));
    }
}
