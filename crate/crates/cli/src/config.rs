//! Experiment configuration: one JSON file per experiment.
//!
//! Unknown keys are rejected everywhere. Parse errors carry the line and
//! column reported by the JSON parser; semantic errors are anchored to the
//! first line that mentions the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use penreflect::fields::{CoefficientSpec, DiffusionSpec, DriftSpec, ReflectionSpec};
use penreflect::geometry::Domain;
use penreflect::integrator::StoppingRegion;
use penreflect::penalty::ScheduleFamily;
use penreflect::reference::ReferenceKind;
use penreflect::{Matrix, Point};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub coefficients: CoefficientSpec,
    pub reflection: ReflectionSpec,
    /// `None` runs the unpenalized diffusion (only meaningful for `paths`).
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    /// The `projection` family selects the drift `n (Pi(x) - x)`; every
    /// other family builds `g_n(phi) r(y)`.
    pub family: ScheduleFamily,
    pub n_grid: Vec<u32>,
    /// Defaults to half the tube radius.
    #[serde(default)]
    pub cutoff: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub master_seed: u64,
    pub initial: Point,
    #[serde(default)]
    pub stiffness_cap: Option<f64>,
    #[serde(default)]
    pub sigma_perturbation: f64,
    #[serde(default)]
    pub stopping: StoppingRegion,
    #[serde(default)]
    pub record_stride: Option<usize>,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    /// Must divide the integrator step; the reference Brownian motion is a
    /// bridge refinement of the penalized one.
    pub dt: f64,
}

/// Verdicts `converge` can be asked to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Per-coordinate KS nonincreasing in n within `monotone_k` stderr.
    KsMonotone,
    /// Per-coordinate KS at the largest n below `ks_threshold`.
    KsThreshold,
    /// KS of `|X(T) - radial_center|` nonincreasing in n.
    RadialKsMonotone,
    /// KS of `|X(T) - radial_center|` at the largest n below `ks_threshold`.
    RadialKsThreshold,
    /// Min-phi probability nondecreasing in n within `monotone_k` stderr.
    MinPhiMonotone,
    /// Min-phi probability at the largest n at least `min_phi_threshold`.
    MinPhiThreshold,
    /// Mean `l(T)` at the largest n within `match_k` pooled stderr of the
    /// mean weighted reference local time.
    LocalTimeMatch,
    /// Mean `L(T)` at the largest n parallel to a constant `r`, within
    /// `match_k` stderr.
    PenaltyDirection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub eta: f64,
    pub radial_center: Option<Point>,
    pub checks: Vec<Check>,
    pub ks_threshold: f64,
    pub min_phi_threshold: f64,
    pub monotone_k: f64,
    pub match_k: f64,
    pub certify: CertifyConfig,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            eta: 0.1,
            radial_center: None,
            checks: Vec::new(),
            ks_threshold: 0.05,
            min_phi_threshold: 0.95,
            monotone_k: 2.0,
            match_k: 3.0,
            certify: CertifyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    /// n-grid of the singularity report.
    pub singularity_n_grid: Vec<u32>,
    /// Positive levels where `g_n` must vanish as n grows.
    pub s_grid: Vec<f64>,
    /// Half-widths of the spike integrals.
    pub eps_grid: Vec<f64>,
    /// Band widths of the emulation grid.
    pub deltas: Vec<f64>,
    /// Emulation only looks at points with `|f_n| >= emulation_eps`.
    pub emulation_eps: f64,
    pub emulation_tolerance: f64,
    /// Levels of the boundary floor; must lie within the cutoff.
    pub floor_levels: Vec<f64>,
    pub floor_tolerance: f64,
    pub samples: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            singularity_n_grid: (1..=64).collect(),
            s_grid: (0..=90).map(|k| 0.1 + 0.01 * k as f64).collect(),
            eps_grid: vec![0.05, 0.1],
            deltas: vec![0.05, 0.1],
            emulation_eps: 1e-3,
            emulation_tolerance: 1e-10,
            floor_levels: vec![-0.05, 0.0, 0.05],
            floor_tolerance: 1e-9,
            samples: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Write into `<directory>/<command>-<timestamp>` instead of
    /// `<directory>` itself.
    pub timestamped: bool,
    /// Also write per-n ensemble files from `converge`.
    pub ensembles: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("results"),
            timestamped: true,
            ensembles: true,
        }
    }
}

/// A configuration problem, anchored to a file line when possible.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(p), Some(l)) => write!(f, "{}:{}: {}", p.display(), l, self.message),
            (Some(p), None) => write!(f, "{}: {}", p.display(), self.message),
            (None, Some(l)) => write!(f, "line {}: {}", l, self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

/// A configuration together with the text it was parsed from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: String,
    pub file: Option<PathBuf>,
}

impl LoadedConfig {
    pub fn parse(source: &str, file: Option<&Path>) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(source).map_err(|e| ConfigError {
            file: file.map(Path::to_path_buf),
            line: (e.line() > 0).then_some(e.line()),
            message: strip_position(&e.to_string()),
        })?;
        Ok(LoadedConfig {
            config,
            source: source.to_string(),
            file: file.map(Path::to_path_buf),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&source, Some(path))
    }

    /// An error about `key`, anchored at the first line mentioning it.
    pub fn error_at(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let needle = format!("\"{key}\"");
        ConfigError {
            file: self.file.clone(),
            line: self.source.lines().position(|l| l.contains(&needle)).map(|i| i + 1),
            message: format!("{key}: {}", message.into()),
        }
    }
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }
}

/// The constant-coefficient Brownian example used in docs and tests.
pub fn brownian_coefficients(dimension: usize) -> CoefficientSpec {
    CoefficientSpec {
        drift: DriftSpec::Constant {
            value: Point::zeros(dimension),
        },
        diffusion: DiffusionSpec::Constant {
            matrix: Matrix::identity(dimension),
        },
    }
}
