//! Scenario files: one flat TOML table per file.
//!
//! ```toml
//! domain = "sphere2"
//! resolution = [256, 512]
//! f = "z + 0.5"
//! eps = [0.1, 0.05, 0.025]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::arrange::DEFAULT_TOL_VOLUME;
use crate::expr::Expression;
use crate::geometry::{make_grid, DomainKind, QuadGrid};
use crate::invariants::{AnalysisOptions, NambuField, VolumeOptions, DEFAULT_VOLUME_TOLERANCE};
use crate::zerolocus::{Transversality, DEFAULT_TRANSVERSALITY};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("{}: field `{field}`: {message}", location(path, *line))]
    Field {
        path: PathBuf,
        line: usize,
        field: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Output {
    Report,
    Dot,
    Svg,
    Csv,
}

pub const ALL_OUTPUTS: [Output; 4] = [Output::Report, Output::Dot, Output::Svg, Output::Csv];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    domain: Option<String>,
    resolution: Option<Vec<usize>>,
    f: Option<String>,
    theta: Option<String>,
    cutoff: Option<String>,
    eps: Option<Vec<f64>>,
    transversality: Option<f64>,
    weight_quantum: Option<f64>,
    tol_volume: Option<f64>,
    outputs: Option<Vec<Output>>,
}

/// Command-line values that replace the file's.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub resolution: Option<Vec<usize>>,
    pub eps: Option<Vec<f64>>,
    pub weight_quantum: Option<f64>,
    pub tol_volume: Option<f64>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    source: String,
    pub domain: DomainKind,
    pub resolution: Vec<usize>,
    pub f: Expression,
    pub theta: Option<Expression>,
    pub cutoff: Option<Expression>,
    pub eps: Vec<f64>,
    pub transversality: f64,
    pub weight_quantum: Option<f64>,
    pub tol_volume: f64,
    pub outputs: Vec<Output>,
}

impl Scenario {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Scenario::parse(path, &text, overrides)
    }

    pub fn parse(
        path: &Path,
        text: &str,
        overrides: &Overrides,
    ) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Syntax {
            path: path.to_path_buf(),
            message: match e.span() {
                Some(span) => format!("line {}: {}", line_of_offset(text, span.start), e.message()),
                None => e.message().to_string(),
            },
        })?;
        let mut sc = Scenario {
            path: path.to_path_buf(),
            source: text.to_string(),
            domain: DomainKind::Sphere2,
            resolution: Vec::new(),
            f: Expression::parse("0", DomainKind::Sphere2).expect("literal"),
            theta: None,
            cutoff: None,
            eps: Vec::new(),
            transversality: DEFAULT_TRANSVERSALITY,
            weight_quantum: None,
            tol_volume: DEFAULT_TOL_VOLUME,
            outputs: ALL_OUTPUTS.to_vec(),
        };
        let domain = raw
            .domain
            .as_deref()
            .ok_or_else(|| sc.field_error("domain", "missing"))?;
        sc.domain = domain
            .parse()
            .map_err(|e: String| sc.field_error("domain", e))?;
        sc.resolution = overrides
            .resolution
            .clone()
            .or(raw.resolution)
            .unwrap_or_else(|| sc.domain.default_resolution());
        make_grid(sc.domain, &sc.resolution).map_err(|e| sc.field_error("resolution", e))?;
        let f = raw
            .f
            .as_deref()
            .ok_or_else(|| sc.field_error("f", "missing"))?;
        sc.f = sc.expression("f", f)?;
        sc.theta = raw
            .theta
            .as_deref()
            .map(|t| sc.expression("theta", t))
            .transpose()?;
        sc.cutoff = raw
            .cutoff
            .as_deref()
            .map(|t| sc.expression("cutoff", t))
            .transpose()?;
        sc.eps = overrides
            .eps
            .clone()
            .or(raw.eps)
            .unwrap_or_else(|| VolumeOptions::default().schedule);
        let vol = VolumeOptions {
            schedule: sc.eps.clone(),
            tolerance: DEFAULT_VOLUME_TOLERANCE,
        };
        vol.validate().map_err(|e| sc.field_error("eps", e))?;
        if let Some(t) = raw.transversality {
            if !(t > 0.0 && t.is_finite()) {
                return Err(sc.field_error("transversality", "must be positive"));
            }
            sc.transversality = t;
        }
        sc.weight_quantum = overrides.weight_quantum.or(raw.weight_quantum);
        if let Some(q) = sc.weight_quantum {
            if !(q > 0.0 && q.is_finite()) {
                return Err(sc.field_error("weight_quantum", "must be positive"));
            }
        }
        sc.tol_volume = overrides
            .tol_volume
            .or(raw.tol_volume)
            .unwrap_or(DEFAULT_TOL_VOLUME);
        if !(sc.tol_volume > 0.0 && sc.tol_volume.is_finite()) {
            return Err(sc.field_error("tol_volume", "must be positive"));
        }
        if let Some(o) = raw.outputs {
            sc.outputs = o;
        }
        Ok(sc)
    }

    fn expression(&self, field: &'static str, text: &str) -> Result<Expression, ScenarioError> {
        Expression::parse(text, self.domain).map_err(|e| self.field_error(field, e))
    }

    /// 1-based line of `key = ...`, or 0 when the key is absent.
    pub fn line_of(&self, key: &str) -> usize {
        self.source
            .lines()
            .position(|l| {
                let l = l.trim_start();
                l.strip_prefix(key)
                    .is_some_and(|rest| rest.trim_start().starts_with('='))
            })
            .map_or(0, |i| i + 1)
    }

    pub fn field_error(
        &self,
        field: &'static str,
        message: impl std::fmt::Display,
    ) -> ScenarioError {
        ScenarioError::Field {
            path: self.path.clone(),
            line: self.line_of(field),
            field,
            message: message.to_string(),
        }
    }

    pub fn field(&self) -> NambuField {
        NambuField {
            domain: self.domain,
            f: self.f.clone(),
        }
    }

    pub fn theta_field(&self) -> Option<NambuField> {
        self.theta.clone().map(|f| NambuField {
            domain: self.domain,
            f,
        })
    }

    pub fn grid(&self) -> QuadGrid {
        make_grid(self.domain, &self.resolution).expect("validated on load")
    }

    pub fn volume_options(&self) -> VolumeOptions {
        VolumeOptions {
            schedule: self.eps.clone(),
            tolerance: self.tol_volume,
        }
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            transversality: Transversality {
                relative: self.transversality,
            },
            volume: self.volume_options(),
        }
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs.contains(&o)
    }

    /// File stem used to name emitted artifacts.
    pub fn stem(&self) -> String {
        self.path
            .file_stem()
            .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    }
}

/// `path:line`, or just `path` when the value did not come from the file.
pub fn location(path: &Path, line: usize) -> String {
    if line == 0 {
        path.display().to_string()
    } else {
        format!("{}:{line}", path.display())
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses `256x512` style grid flags.
pub fn parse_grid(s: &str) -> Result<Vec<usize>, String> {
    s.split(['x', 'X', ','])
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad grid `{s}`: {e}"))
        })
        .collect()
}

/// Parses `0.1,0.05,0.025` style schedule flags.
pub fn parse_eps(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad eps `{s}`: {e}"))
        })
        .collect()
}
