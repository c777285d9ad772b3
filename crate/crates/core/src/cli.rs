//! Command-line front end. Every subcommand reads a case manifest (except
//! `synth`, which writes one) and emits a JSON report.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{fuse_halves, FuseOptions, IcpResult, OverlapRule, DEFAULT_THRESHOLD_HU};
use crate::geometry::{fit_parametric_cubic, FiducialReference, ParametricCubic, RigidTransform};
use crate::histology::{place_slide_with, reprojection_rms, HistologyVolume, PlacedSlide};
use crate::io::{
    self, load_manifest, read_markups_declared, read_measurements, read_slide_declared,
    read_volume, write_transform, write_volume, CaseManifest, CoordinateSystem, IoError,
    MeasurementTable,
};
use crate::plane::{assign_all_planes, DissectionPlane, PlaneOutcome, RootMethod};
use crate::stats::{
    build_records, compute_estimates, error_report, sensitivity_analysis, CurveVariant,
    ErrorReport, SensitivityReport, ValidationRecord,
};
use crate::synth::{self, render_phantom, PhantomSpec, Shape, SynthParams};
use crate::Exec;

#[derive(Debug, Parser)]
#[command(
    name = "colocate",
    version,
    about = "Co-locate histology dissection planes in ex-vivo CT"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct CaseArgs {
    /// Case manifest (JSON).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output file for the report; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra signed shift along every plane normal (mm).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub offset_mm: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    ParallelLines,
    HalfCylinder,
    BentPrism,
}

impl From<ShapeArg> for Shape {
    fn from(s: ShapeArg) -> Self {
        match s {
            ShapeArg::ParallelLines => Shape::ParallelLines,
            ShapeArg::HalfCylinder => Shape::HalfCylinder,
            ShapeArg::BentPrism => Shape::BentPrism,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit cubic models to the bisection-edge markups.
    FitCurves(CaseArgs),
    /// Solve one plane per dissection measurement.
    AssignPlanes(CaseArgs),
    /// Pose the histology slides on their planes.
    PlaceHistology {
        #[command(flatten)]
        case: CaseArgs,
        /// Also fit an in-plane rotation.
        #[arg(long)]
        allow_rotation: bool,
    },
    /// Register and stitch the two CT halves.
    Fuse {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the fused volume, transform and report.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD_HU, allow_negative_numbers = true)]
        threshold_hu: f64,
        #[arg(long, default_value_t = 0.1)]
        trim_fraction: f64,
        /// Keep fixed voxels in the overlap instead of averaging.
        #[arg(long)]
        fixed_wins: bool,
    },
    /// Compare estimated slab widths with caliper widths.
    Validate {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long)]
        exclude_curved: bool,
    },
    /// Plane rotation and width change between two curve readings.
    Sensitivity(CaseArgs),
    /// Write a synthetic case directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "half-cylinder")]
        shape: ShapeArg,
        #[arg(long, default_value_t = 5)]
        cuts: usize,
        /// Caliper noise (mm).
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        /// Landmark pick noise (mm).
        #[arg(long, default_value_t = 0.0)]
        landmark_sigma: f64,
        /// Also write the split CT phantom.
        #[arg(long)]
        phantom: bool,
        /// Write a second curve reading jittered by this amplitude (mm).
        #[arg(long)]
        variant_jitter: Option<f64>,
        /// Write markups in LPS instead of RAS.
        #[arg(long)]
        lps: bool,
    },
}

struct Case {
    manifest: CaseManifest,
    a: ParametricCubic,
    b: ParametricCubic,
    edge: Option<ParametricCubic>,
    f_ref: FiducialReference,
    table: MeasurementTable,
}

fn fit_variant(
    manifest: &CaseManifest,
    markups: &io::InputRef,
) -> Result<(
    ParametricCubic,
    ParametricCubic,
    Option<ParametricCubic>,
    FiducialReference,
)> {
    let set = read_markups_declared(&markups.path, markups.coordinate_system)?;
    let a = fit_parametric_cubic(set.curve(&manifest.curve_a)?)?;
    let b = fit_parametric_cubic(set.curve(&manifest.curve_b)?)?;
    let edge = match &manifest.curve_edge {
        Some(label) => Some(fit_parametric_cubic(set.curve(label)?)?),
        None => None,
    };
    Ok((a, b, edge, set.fiducial(&manifest.fiducial)?.clone()))
}

fn load_case(args: &CaseArgs) -> Result<Case> {
    let manifest = load_manifest(&args.manifest)?;
    let (a, b, edge, f_ref) = fit_variant(&manifest, &manifest.markups)?;
    let mut table = read_measurements(&manifest.measurements)?;
    for m in &mut table.measurements {
        m.offset += args.offset_mm;
    }
    Ok(Case {
        manifest,
        a,
        b,
        edge,
        f_ref,
        table,
    })
}

fn emit(out: Option<&Path>, report: &impl Serialize) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report).expect("report serialization");
    json.push('\n');
    match out {
        Some(p) => io_write(p, json.as_bytes()),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn io_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io::IoError::File {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| {
        Error::Io(IoError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    })
}

#[derive(Serialize)]
struct CurveEntry<'a> {
    label: &'a str,
    #[serde(flatten)]
    curve: &'a ParametricCubic,
}

#[derive(Serialize)]
struct SolveDiagnostics {
    t: f64,
    residual_mm: f64,
    iterations: usize,
    method: RootMethod,
    extrapolated: bool,
}

#[derive(Serialize)]
#[serde(tag = "status")]
enum PlaneEntry {
    #[serde(rename = "ok")]
    Solved {
        index: u32,
        plane: DissectionPlane,
        a: SolveDiagnostics,
        b: SolveDiagnostics,
    },
    #[serde(rename = "failed")]
    Failed {
        index: u32,
        error: String,
        message: String,
    },
}

fn plane_entries(outcomes: &[PlaneOutcome]) -> Vec<PlaneEntry> {
    let diag = |s: &crate::plane::IntersectionSolution| SolveDiagnostics {
        t: s.t,
        residual_mm: s.residual,
        iterations: s.iterations,
        method: s.method,
        extrapolated: s.extrapolated(),
    };
    outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(p) => PlaneEntry::Solved {
                index: o.index,
                plane: p.plane.clone(),
                a: diag(&p.a),
                b: diag(&p.b),
            },
            Err(e) => PlaneEntry::Failed {
                index: o.index,
                error: Error::from(e.clone()).kind(),
                message: e.to_string(),
            },
        })
        .collect()
}

fn first_failure(outcomes: &[PlaneOutcome]) -> Result<()> {
    match outcomes.iter().find_map(|o| o.result.as_ref().err()) {
        Some(e) => Err(e.clone().into()),
        None => Ok(()),
    }
}

fn solve_case(case: &Case) -> Result<Vec<PlaneOutcome>> {
    Ok(assign_all_planes(
        &case.a,
        &case.b,
        &case.f_ref,
        &case.table.measurements,
    )?)
}

fn solved(outcomes: &[PlaneOutcome]) -> Vec<DissectionPlane> {
    crate::plane::solved_planes(outcomes)
}

#[derive(Serialize)]
struct PlanesReport<'a> {
    specimen_id: &'a str,
    planes: Vec<PlaneEntry>,
}

#[derive(Serialize)]
struct PlacedEntry {
    #[serde(flatten)]
    placed: PlacedSlide,
    reprojection_rms_mm: f64,
}

#[derive(Serialize)]
struct HistologyReport<'a> {
    specimen_id: &'a str,
    bisection_id: &'a str,
    slides: Vec<PlacedEntry>,
}

#[derive(Serialize)]
struct FuseReport {
    fiducial_fre_mm: f64,
    initial: RigidTransform,
    t_fuse: RigidTransform,
    icp: IcpResult,
    output_dims: [usize; 3],
    overlap_voxels: usize,
    warning: Option<String>,
}

#[derive(Serialize)]
struct ValidationReport<'a> {
    specimen_id: &'a str,
    exclude_curved: bool,
    planes: Vec<PlaneEntry>,
    records: Vec<ValidationRecord>,
    report: ErrorReport,
}

#[derive(Serialize)]
struct SensitivityOutput<'a> {
    specimen_id: &'a str,
    #[serde(flatten)]
    report: SensitivityReport,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(IoError::Parse(e.to_string()).into());
        }
    };
    execute(cli.command)
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::FitCurves(args) => {
            let manifest = load_manifest(&args.manifest)?;
            let set =
                read_markups_declared(&manifest.markups.path, manifest.markups.coordinate_system)?;
            let fitted = set
                .curves
                .iter()
                .map(|c| fit_parametric_cubic(c).map(|f| (c.label.clone(), f)))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let curves: Vec<CurveEntry> = fitted
                .iter()
                .map(|(label, curve)| CurveEntry { label, curve })
                .collect();
            #[derive(Serialize)]
            struct Report<'a> {
                specimen_id: &'a str,
                curves: Vec<CurveEntry<'a>>,
            }
            emit(
                args.out.as_deref(),
                &Report {
                    specimen_id: &manifest.specimen_id,
                    curves,
                },
            )
        }
        Command::AssignPlanes(args) => {
            let case = load_case(&args)?;
            let outcomes = solve_case(&case)?;
            emit(
                args.out.as_deref(),
                &PlanesReport {
                    specimen_id: &case.manifest.specimen_id,
                    planes: plane_entries(&outcomes),
                },
            )?;
            first_failure(&outcomes)
        }
        Command::PlaceHistology {
            case: args,
            allow_rotation,
        } => {
            let case = load_case(&args)?;
            let outcomes = solve_case(&case)?;
            first_failure(&outcomes)?;
            let planes = solved(&outcomes);
            let mut placed = Vec::new();
            let mut entries = Vec::new();
            for input in &case.manifest.slides {
                let slide = read_slide_declared(&input.path, input.coordinate_system)?;
                let plane = planes
                    .iter()
                    .find(|p| p.index == slide.index)
                    .ok_or_else(|| IoError::Missing(format!("plane for slide {}", slide.index)))?;
                let p = place_slide_with(&slide, plane, allow_rotation)?;
                entries.push(PlacedEntry {
                    reprojection_rms_mm: reprojection_rms(&p, &slide),
                    placed: p.clone(),
                });
                placed.push(p);
            }
            // Rejects duplicate slide indices.
            HistologyVolume::new(
                &case.manifest.specimen_id,
                &case.manifest.bisection_id,
                placed,
            )?;
            entries.sort_by_key(|e| e.placed.index);
            emit(
                args.out.as_deref(),
                &HistologyReport {
                    specimen_id: &case.manifest.specimen_id,
                    bisection_id: &case.manifest.bisection_id,
                    slides: entries,
                },
            )
        }
        Command::Fuse {
            manifest,
            out,
            threshold_hu,
            trim_fraction,
            fixed_wins,
        } => {
            let manifest = load_manifest(&manifest)?;
            let v = manifest
                .volumes
                .as_ref()
                .ok_or_else(|| IoError::Missing("volumes".into()))?;
            let fixed = read_volume(&v.fixed)?;
            let moving = read_volume(&v.moving)?;
            let ff = read_markups_declared(
                &v.fiducials_fixed.path,
                v.fiducials_fixed.coordinate_system,
            )?;
            let fm = read_markups_declared(
                &v.fiducials_moving.path,
                v.fiducials_moving.coordinate_system,
            )?;
            let pos =
                |s: &io::MarkupSet| s.fiducials.iter().map(|f| f.position).collect::<Vec<_>>();
            let mut options = FuseOptions {
                threshold_hu,
                ..Default::default()
            };
            options.icp.trim_fraction = trim_fraction;
            if fixed_wins {
                options.stitch.rule = OverlapRule::FixedWins;
            }
            let r = fuse_halves(
                &fixed,
                &moving,
                &pos(&ff),
                &pos(&fm),
                &options,
                Exec::default(),
            )?;
            write_volume(&out.join("fused.nrrd"), &r.stitched.volume)?;
            write_transform(&out.join("t_fuse.txt"), &r.t_fuse)?;
            emit(
                Some(&out.join("fuse_report.json")),
                &FuseReport {
                    fiducial_fre_mm: r.fiducial_fre,
                    initial: r.initial,
                    t_fuse: r.t_fuse,
                    icp: r.icp,
                    output_dims: r.stitched.volume.dims,
                    overlap_voxels: r.stitched.overlap_voxels,
                    warning: r.stitched.warning,
                },
            )
        }
        Command::Validate {
            case: args,
            exclude_curved,
        } => {
            let case = load_case(&args)?;
            let outcomes = solve_case(&case)?;
            first_failure(&outcomes)?;
            let planes = solved(&outcomes);
            let estimates = compute_estimates(&planes, case.edge.as_ref())?;
            let table = &case.table;
            let records =
                build_records(&estimates, &table.measurements, &|i| table.physical_for(i));
            let report = error_report(&records, exclude_curved)?;
            emit(
                args.out.as_deref(),
                &ValidationReport {
                    specimen_id: &case.manifest.specimen_id,
                    exclude_curved,
                    planes: plane_entries(&outcomes),
                    records,
                    report,
                },
            )
        }
        Command::Sensitivity(args) => {
            let case = load_case(&args)?;
            let variant = case
                .manifest
                .variant_markups
                .as_ref()
                .ok_or_else(|| IoError::Missing("variantMarkups".into()))?;
            let (a, b, edge, _) = fit_variant(&case.manifest, variant)?;
            let report = sensitivity_analysis(
                &CurveVariant {
                    a: case.a.clone(),
                    b: case.b.clone(),
                    edge: case.edge.clone(),
                },
                &CurveVariant { a, b, edge },
                &case.f_ref,
                &case.table.measurements,
            )?;
            emit(
                args.out.as_deref(),
                &SensitivityOutput {
                    specimen_id: &case.manifest.specimen_id,
                    report,
                },
            )
        }
        Command::Synth {
            out,
            seed,
            shape,
            cuts,
            sigma,
            landmark_sigma,
            phantom,
            variant_jitter,
            lps,
        } => {
            let mut params = SynthParams::new(shape.into(), cuts, seed);
            params.measurement_sigma = sigma;
            params.landmark_sigma = landmark_sigma;
            let specimen = synth::generate(&params)?;
            let slides = specimen.render_slides(0.9);
            let phantom = if phantom {
                Some(render_phantom(&PhantomSpec {
                    seed,
                    ..Default::default()
                })?)
            } else {
                None
            };
            let jittered = variant_jitter.map(|amp| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
                specimen
                    .markups()
                    .map(|m| synth::jitter_markup(m, amp, &mut rng))
            });
            let cs = if lps {
                CoordinateSystem::Lps
            } else {
                CoordinateSystem::Ras
            };
            io::write_case(
                &out,
                &specimen,
                &slides,
                phantom.as_ref(),
                jittered.as_ref().map(|j| [&j[0], &j[1], &j[2]]),
                cs,
            )?;
            Ok(())
        }
    }
}
