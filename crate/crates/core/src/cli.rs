//! Command-line driver. The binary only parses arguments and maps errors to
//! exit codes; everything else lives here so it can be tested in-process.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::arrange::{
    self, build_graph, canonical_code, is_equivalent, ArrangeError, EquivalenceOptions,
    SignedWeightedGraph, Verdict,
};
use crate::emit;
use crate::geometry::DomainKind;
use crate::invariants::{
    analyze, deformation_coordinates, volume_with_cutoff, Analysis, DeformationCoordinates,
    InvariantReport, InvariantsError, VolumeEstimate,
};
use crate::normalform::{self, NormalFormError};
use crate::scenario::{
    location, parse_eps, parse_grid, Output, Overrides, Scenario, ScenarioError,
};
use crate::zerolocus::{Transversality, ZeroLocusError};

#[derive(Debug, Parser)]
#[command(
    name = "nambu",
    version,
    about = "Classification invariants of generic top-degree Nambu structures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Grid resolution, e.g. 256x512 or 64x64x64.
    #[arg(long, global = true, value_parser = parse_grid)]
    pub grid: Option<GridFlag>,
    /// Epsilon schedule, e.g. 0.1,0.05,0.025.
    #[arg(long, global = true, value_parser = parse_eps)]
    pub eps: Option<EpsFlag>,
    /// Absolute quantum for comparing modular periods.
    #[arg(long, global = true)]
    pub weight_quantum: Option<f64>,
    /// Volume tolerance for extrapolation and equivalence.
    #[arg(long, global = true)]
    pub tol_volume: Option<f64>,
    /// Directory for emitted artifacts.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

pub type GridFlag = Vec<usize>;
pub type EpsFlag = Vec<f64>;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Periods, regions, regularized volume, H² count and dual graph of one scenario.
    Invariants { file: PathBuf },
    /// Decide equivalence of two scenarios.
    Equiv { a: PathBuf, b: PathBuf },
    /// Deformation coordinates of theta relative to base. Without a second
    /// file the base scenario's `theta` key is used.
    Deform {
        base: PathBuf,
        theta: Option<PathBuf>,
    },
    /// Count isomorphism classes of signed trees with k edges.
    Trees { k: usize },
    /// Solve the radial collar linearization g' = g / f.
    Linearize {
        #[arg(long, default_value = "r + 0.3*r^2")]
        f: String,
        #[arg(long, default_value_t = 0.9)]
        r_max: f64,
        #[arg(long, default_value_t = 1.0)]
        k: f64,
        #[arg(long, default_value_t = normalform::DEFAULT_SAMPLES)]
        samples: usize,
    },
    /// Zero locus over the signed regions as SVG (2-D domains).
    Plot { file: PathBuf },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{}: field `{field}`: {source}", location(path, *line))]
    Pipeline {
        path: PathBuf,
        line: usize,
        field: &'static str,
        source: InvariantsError,
    },
    #[error(transparent)]
    Arrange(#[from] ArrangeError),
    #[error(transparent)]
    NormalForm(#[from] NormalFormError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for numerical non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline {
                source: InvariantsError::NonConvergent { .. },
                ..
            } => 2,
            _ => 1,
        }
    }
}

/// The scenario field an invariants error traces back to.
fn blame(err: &InvariantsError) -> &'static str {
    match err {
        InvariantsError::ZeroLocus(ZeroLocusError::InconsistentSign { .. })
        | InvariantsError::ZeroLocus(ZeroLocusError::NonManifold(..))
        | InvariantsError::Geometry(_) => "resolution",
        InvariantsError::BadSchedule(_)
        | InvariantsError::ScheduleTooFine { .. }
        | InvariantsError::NonConvergent { .. } => "eps",
        InvariantsError::CutoffMismatch { .. } => "cutoff",
        InvariantsError::LocusMismatch { .. } | InvariantsError::NotGenericTheta(_) => "theta",
        _ => "f",
    }
}

fn pipeline_error(sc: &Scenario, err: InvariantsError) -> CliError {
    pipeline_error_at(sc, blame(&err), err)
}

fn pipeline_error_at(sc: &Scenario, field: &'static str, err: InvariantsError) -> CliError {
    CliError::Pipeline {
        path: sc.path.clone(),
        line: sc.line_of(field),
        field,
        source: err,
    }
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            resolution: self.grid.clone(),
            eps: self.eps.clone(),
            weight_quantum: self.weight_quantum,
            tol_volume: self.tol_volume,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct InvariantsDocument {
    pub scenario: String,
    pub report: InvariantReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_volume: Option<VolumeEstimate>,
    pub graph: SignedWeightedGraph,
    pub canonical_code: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub periods: Vec<f64>,
    pub volume: f64,
    pub canonical_code: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct EquivDocument {
    pub verdict: &'static str,
    pub reason: Option<String>,
    pub a: ScenarioSummary,
    pub b: ScenarioSummary,
}

#[derive(Debug, Serialize)]
pub struct DeformDocument {
    pub base: String,
    pub theta: String,
    #[serde(flatten)]
    pub coordinates: DeformationCoordinates,
}

fn run_analysis(sc: &Scenario) -> Result<Analysis, CliError> {
    analyze(&sc.field(), &sc.grid(), &sc.analysis_options()).map_err(|e| pipeline_error(sc, e))
}

fn code_of(sc: &Scenario, graph: &SignedWeightedGraph) -> Result<Option<String>, CliError> {
    if sc.domain != DomainKind::Sphere2 {
        return Ok(None);
    }
    Ok(Some(canonical_code(graph, sc.weight_quantum)?.code))
}

/// Runs the full pipeline for one scenario.
pub fn invariants_document(sc: &Scenario) -> Result<(InvariantsDocument, Analysis), CliError> {
    let analysis = run_analysis(sc)?;
    let report = analysis.report();
    let cutoff_volume = match &sc.cutoff {
        Some(h) => Some(
            volume_with_cutoff(&sc.field(), &sc.grid(), h, &sc.volume_options())
                .map_err(|e| pipeline_error_at(sc, "cutoff", e))?,
        ),
        None => None,
    };
    let graph = build_graph(&report);
    let doc = InvariantsDocument {
        scenario: sc.stem(),
        canonical_code: code_of(sc, &graph)?,
        graph,
        cutoff_volume,
        report,
    };
    Ok((doc, analysis))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: dir.join(name),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join(name), contents).map_err(io)
}

fn emit_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
        _ => Ok(()),
    }
}

/// Executes one command, writing the primary document to `out` and notices to `err`.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let flags = &cli.flags;
    let overrides = flags.overrides();
    match &cli.command {
        Command::Invariants { file } => {
            let sc = Scenario::load(file, &overrides)?;
            let (doc, analysis) = invariants_document(&sc)?;
            let json = to_json(&doc);
            if let Some(dir) = &flags.out_dir {
                let stem = sc.stem();
                if sc.wants(Output::Report) {
                    write_file(dir, &format!("{stem}.report.json"), &json)?;
                }
                if sc.wants(Output::Dot) {
                    write_file(dir, &format!("{stem}.dot"), &arrange::to_dot(&doc.graph))?;
                }
                if sc.wants(Output::Svg) {
                    match emit::zero_locus_svg(&analysis, &sc.grid()) {
                        Some(svg) => write_file(dir, &format!("{stem}.svg"), &svg)?,
                        None => {
                            let _ = writeln!(
                                err,
                                "note: SVG skipped, {} is three-dimensional",
                                sc.domain
                            );
                        }
                    }
                }
                if sc.wants(Output::Csv) {
                    write_file(
                        dir,
                        &format!("{stem}.volume.csv"),
                        &emit::diagnostics_csv(&analysis.volume.diagnostics),
                    )?;
                }
            }
            emit_out(out, &json)
        }
        Command::Equiv { a, b } => {
            let sa = Scenario::load(a, &overrides)?;
            let sb = Scenario::load(b, &overrides)?;
            if sa.domain != sb.domain {
                return Err(ArrangeError::DomainMismatch(sa.domain, sb.domain).into());
            }
            let (da, _) = invariants_document(&sa)?;
            let (db, _) = invariants_document(&sb)?;
            let opts = EquivalenceOptions {
                weight_quantum: sa.weight_quantum,
                tol_volume: sa.tol_volume,
            };
            let verdict = is_equivalent(&da.report, &db.report, &opts)?;
            let summary = |d: InvariantsDocument| ScenarioSummary {
                scenario: d.scenario,
                periods: d.report.components.iter().map(|c| c.period).collect(),
                volume: d.report.volume,
                canonical_code: d.canonical_code,
            };
            let doc = EquivDocument {
                verdict: verdict.name(),
                reason: match verdict {
                    Verdict::Inequivalent(r) => Some(r.to_string()),
                    _ => None,
                },
                a: summary(da),
                b: summary(db),
            };
            emit_out(out, &to_json(&doc))
        }
        Command::Deform { base, theta } => {
            let sb = Scenario::load(base, &overrides)?;
            let (theta_field, theta_name) = match theta {
                Some(path) => {
                    let st = Scenario::load(path, &overrides)?;
                    if st.domain != sb.domain {
                        return Err(st
                            .field_error(
                                "domain",
                                format!("differs from base domain {}", sb.domain),
                            )
                            .into());
                    }
                    (st.field(), st.stem())
                }
                None => match sb.theta_field() {
                    Some(t) => (t, format!("{}#theta", sb.stem())),
                    None => {
                        return Err(sb
                            .field_error(
                                "theta",
                                "missing; pass a theta scenario file or set `theta`",
                            )
                            .into())
                    }
                },
            };
            let coordinates = deformation_coordinates(
                &sb.field(),
                &theta_field,
                &sb.grid(),
                Transversality {
                    relative: sb.transversality,
                },
                &sb.volume_options(),
            )
            .map_err(|e| pipeline_error(&sb, e))?;
            let doc = DeformDocument {
                base: sb.stem(),
                theta: theta_name,
                coordinates,
            };
            emit_out(out, &to_json(&doc))
        }
        Command::Trees { k } => {
            let e = arrange::enumerate_signed_trees(*k)?;
            emit_out(out, &to_json(&e))
        }
        Command::Linearize {
            f,
            r_max,
            k,
            samples,
        } => {
            let expr = normalform::parse_profile(f).map_err(NormalFormError::from)?;
            let p = normalform::solve_linearization(&expr, *r_max, *k, *samples)?;
            let res = normalform::residuals(&p);
            let mut csv = String::from("r,g,residual\n");
            for (i, (r, g)) in p.r.iter().zip(&p.g_samples).enumerate() {
                let rr = if i == 0 || i + 1 == p.r.len() {
                    String::new()
                } else {
                    format!("{:e}", res[i - 1])
                };
                csv.push_str(&format!("{r},{g},{rr}\n"));
            }
            let _ = writeln!(
                err,
                "max residual: {:e}",
                normalform::verify_linearization(&p)
            );
            if let Some(dir) = &flags.out_dir {
                write_file(dir, "linearize.csv", &csv)?;
            }
            emit_out(out, &csv)
        }
        Command::Plot { file } => {
            let sc = Scenario::load(file, &overrides)?;
            if sc.domain == DomainKind::Torus3 {
                let _ = writeln!(err, "note: SVG skipped, {} is three-dimensional", sc.domain);
                return Ok(());
            }
            let analysis = run_analysis(&sc)?;
            let svg = emit::zero_locus_svg(&analysis, &sc.grid()).expect("2-D domain");
            match &flags.out_dir {
                Some(dir) => write_file(dir, &format!("{}.svg", sc.stem()), &svg),
                None => emit_out(out, &svg),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arguments_parse() {
        let cli = Cli::try_parse_from([
            "nambu",
            "invariants",
            "a.toml",
            "--grid",
            "64x128",
            "--eps",
            "0.2,0.1",
            "--tol-volume",
            "0.5",
        ])
        .unwrap();
        assert_eq!(cli.flags.grid, Some(vec![64, 128]));
        assert_eq!(cli.flags.eps, Some(vec![0.2, 0.1]));
        assert_eq!(cli.flags.tol_volume, Some(0.5));
        assert!(matches!(cli.command, Command::Invariants { .. }));
        assert!(Cli::try_parse_from(["nambu", "trees", "x"]).is_err());
        assert!(Cli::try_parse_from(["nambu", "invariants", "a", "--grid", "64xq"]).is_err());
    }

    #[test]
    fn exit_codes() {
        let e = CliError::Pipeline {
            path: "a".into(),
            line: 1,
            field: "eps",
            source: InvariantsError::NonConvergent {
                last: 1.0,
                previous: 2.0,
                tolerance: 0.1,
            },
        };
        assert_eq!(e.exit_code(), 2);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
    }
}
