use std::path::{Path, PathBuf};

use super::{
    write_bytes, write_markups, write_measurements, write_slide, write_transform, write_volume,
    CaseManifest, CoordinateSystem, InputRef, IoError, MarkupSet, MeasurementTable, VolumeInputs,
};
use crate::geometry::{FiducialReference, MarkupCurve};
use crate::histology::HistologySlide;
use crate::synth::{Phantom, SyntheticSpecimen};

/// Paths written by [`write_case`].
#[derive(Debug, Clone, PartialEq)]
pub struct CaseFiles {
    pub manifest: PathBuf,
    pub markups: PathBuf,
    pub measurements: PathBuf,
    pub slides: Vec<PathBuf>,
    pub truth: PathBuf,
}

fn fiducial_set(label: &str, points: &[crate::geometry::Point3]) -> MarkupSet {
    MarkupSet {
        curves: Vec::new(),
        fiducials: points
            .iter()
            .enumerate()
            .map(|(i, p)| FiducialReference::new(format!("{label}-{}", i + 1), *p))
            .collect(),
    }
}

/// Writes a synthetic specimen as a case directory readable by the CLI:
/// markups, measurement table with caliper widths, slides, optional
/// phantom volumes with fiducials, an optional variant reading and a
/// manifest. Ground truth goes to `truth.json`.
pub fn write_case(
    dir: &Path,
    specimen: &SyntheticSpecimen,
    slides: &[HistologySlide],
    phantom: Option<&Phantom>,
    variant: Option<[&MarkupCurve; 3]>,
    cs: CoordinateSystem,
) -> Result<CaseFiles, IoError> {
    let markups = dir.join("markups.mrk.json");
    let set = MarkupSet {
        curves: vec![
            specimen.markup_a.clone(),
            specimen.markup_b.clone(),
            specimen.markup_edge.clone(),
        ],
        fiducials: vec![specimen.f_ref.clone()],
    };
    write_markups(&markups, &set, cs)?;

    let measurements = dir.join("measurements.csv");
    let table = MeasurementTable {
        physical: specimen
            .measurements
            .iter()
            .map(|m| specimen.physical(m.index))
            .collect(),
        measurements: specimen.measurements.clone(),
        has_physical: true,
    };
    write_measurements(&measurements, &table)?;

    let mut slide_paths = Vec::new();
    for s in slides {
        let p = dir.join("slides").join(format!("slide_{:03}.pgm", s.index));
        write_slide(&p, s)?;
        slide_paths.push(p);
    }

    let volumes = match phantom {
        Some(ph) => {
            let v = VolumeInputs {
                fixed: PathBuf::from("ct_fixed.nrrd"),
                moving: PathBuf::from("ct_moving.nrrd"),
                fiducials_fixed: InputRef::new("fiducials_fixed.mrk.json", cs),
                fiducials_moving: InputRef::new("fiducials_moving.mrk.json", cs),
            };
            write_volume(&dir.join(&v.fixed), &ph.fixed)?;
            write_volume(&dir.join(&v.moving), &ph.moving)?;
            write_markups(
                &dir.join(&v.fiducials_fixed.path),
                &fiducial_set("fixed", &ph.fiducials_fixed),
                cs,
            )?;
            write_markups(
                &dir.join(&v.fiducials_moving.path),
                &fiducial_set("moving", &ph.fiducials_moving),
                cs,
            )?;
            write_transform(&dir.join("truth_transform.txt"), &ph.truth)?;
            Some(v)
        }
        None => None,
    };

    let variant_markups = match variant {
        Some(curves) => {
            let p = PathBuf::from("markups_variant.mrk.json");
            let set = MarkupSet {
                curves: curves.iter().map(|c| (*c).clone()).collect(),
                fiducials: vec![specimen.f_ref.clone()],
            };
            write_markups(&dir.join(&p), &set, cs)?;
            Some(InputRef::new(p, cs))
        }
        None => None,
    };

    let manifest = CaseManifest {
        specimen_id: format!("synthetic-{}", specimen.params.seed),
        bisection_id: "A".into(),
        markups: InputRef::new("markups.mrk.json", cs),
        curve_a: specimen.markup_a.label.clone(),
        curve_b: specimen.markup_b.label.clone(),
        curve_edge: Some(specimen.markup_edge.label.clone()),
        fiducial: specimen.f_ref.label.clone(),
        measurements: PathBuf::from("measurements.csv"),
        // Slide sidecars are always written in RAS.
        slides: slides
            .iter()
            .map(|s| {
                InputRef::new(
                    format!("slides/slide_{:03}.pgm", s.index),
                    CoordinateSystem::Ras,
                )
            })
            .collect(),
        volumes,
        variant_markups,
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    write_bytes(&manifest_path, json.as_bytes())?;

    let truth = dir.join("truth.json");
    let json = serde_json::to_string_pretty(specimen).expect("truth serialization");
    write_bytes(&truth, json.as_bytes())?;

    Ok(CaseFiles {
        manifest: manifest_path,
        markups,
        measurements,
        slides: slide_paths,
        truth,
    })
}
