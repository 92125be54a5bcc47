//! Turns a parsed configuration into validated models.
//!
//! Every precondition of the simulation and certification layers is checked
//! here, before any path is simulated, and reported against the config key
//! responsible for it.

use penreflect::fields::{normalize_reflection, CoefficientField, ReflectionField};
use penreflect::geometry::Domain;
use penreflect::integrator::ModelSpec;
use penreflect::penalty::{PenaltyDrift, PenaltyField, ProjectionPenalty, ScheduleFamily};
use penreflect::reference::{ReferenceKind, ReferenceModel};

use crate::config::{ConfigError, ExperimentConfig, LoadedConfig};

/// What a command needs from the configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Requirement {
    Certify,
    Converge,
    Paths,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub domain: Domain,
    pub coefficients: CoefficientField,
    pub reflection: ReflectionField,
    /// One penalty drift per entry of the n-grid, or a single `Off`.
    pub penalties: Vec<PenaltyDrift>,
    pub reference: Option<(ReferenceKind, ReferenceModel)>,
    pub master_seed: u64,
    pub workers: Option<usize>,
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl Experiment {
    pub fn build(
        loaded: &LoadedConfig,
        requirement: Requirement,
        seed: Option<u64>,
        workers: Option<usize>,
    ) -> Result<Self, ConfigError> {
        let cfg = &loaded.config;
        let err = |key: &str, msg: String| loaded.error_at(key, msg);
        let domain = cfg.domain.clone();
        let d = domain.dimension();

        let coefficients =
            CoefficientField::from_spec(d, cfg.coefficients.clone()).map_err(|e| err("coefficients", e.to_string()))?;
        let reflection =
            normalize_reflection(cfg.reflection.clone(), &domain).map_err(|e| err("reflection", e.to_string()))?;

        let penalties = match &cfg.penalty {
            None if requirement == Requirement::Paths => vec![PenaltyDrift::Off { dimension: d }],
            None => return Err(err("penalty", "this command needs a penalty section".into())),
            Some(p) => {
                p.family.validate().map_err(|e| err("family", e.to_string()))?;
                if p.n_grid.is_empty() {
                    return Err(err("n_grid", "must not be empty".into()));
                }
                if p.n_grid.contains(&0) || p.n_grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(err("n_grid", "must be strictly increasing positive integers".into()));
                }
                let mut drifts = Vec::with_capacity(p.n_grid.len());
                for &n in &p.n_grid {
                    let drift = match p.family {
                        ScheduleFamily::Projection => PenaltyDrift::Projection(
                            ProjectionPenalty::new(n, domain.clone()).map_err(|e| err("n_grid", e.to_string()))?,
                        ),
                        _ => {
                            let schedule = p.family.at(n).map_err(|e| err("family", e.to_string()))?;
                            PenaltyDrift::Field(
                                PenaltyField::new(schedule, reflection.clone(), p.cutoff)
                                    .map_err(|e| err("cutoff", e.to_string()))?,
                            )
                        }
                    };
                    drifts.push(drift);
                }
                drifts
            }
        };

        let ic = &cfg.integrator;
        if ic.paths == 0 {
            return Err(err("paths", "must be at least 1".into()));
        }
        if !(positive(ic.horizon)) {
            return Err(err("horizon", format!("must be positive, got {}", ic.horizon)));
        }
        if !(positive(ic.dt) && ic.dt < ic.horizon) {
            return Err(err("dt", format!("need 0 < dt < horizon, got {}", ic.dt)));
        }
        if ic.initial.dim() != d {
            return Err(err("initial", format!("expected {d} coordinates, got {}", ic.initial.dim())));
        }
        if ic.workers == Some(0) || workers == Some(0) {
            return Err(err("workers", "must be at least 1".into()));
        }
        let master_seed = seed.unwrap_or(ic.master_seed);
        let workers = workers.or(ic.workers);

        let experiment = Experiment {
            config: cfg.clone(),
            domain,
            coefficients,
            reflection,
            penalties,
            reference: None,
            master_seed,
            workers,
        };
        for drift in &experiment.penalties {
            experiment
                .model(drift)
                .validate()
                .map_err(|e| err(integrator_key(&e.to_string()), e.to_string()))?;
        }

        let reference = match (&cfg.reference, requirement) {
            (Some(rc), _) => {
                let model = experiment
                    .reference_model(rc.dt)
                    .map_err(|m| err("reference", m))?;
                model.validate(rc.kind).map_err(|e| err("reference", e.to_string()))?;
                Some((rc.kind, model))
            }
            (None, Requirement::Converge) => {
                return Err(err("integrator", "converge needs a reference section".into()));
            }
            (None, _) => None,
        };

        let dc = &cfg.diagnostics;
        if !positive(dc.eta) {
            return Err(err("eta", format!("must be positive, got {}", dc.eta)));
        }
        if let Some(c) = &dc.radial_center {
            if c.dim() != d {
                return Err(err("radial_center", format!("expected {d} coordinates, got {}", c.dim())));
            }
        }
        if !(positive(dc.ks_threshold) && dc.ks_threshold <= 1.0) {
            return Err(err("ks_threshold", "must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&dc.min_phi_threshold) {
            return Err(err("min_phi_threshold", "must lie in [0, 1]".into()));
        }
        if !(positive(dc.monotone_k) && positive(dc.match_k)) {
            return Err(err("monotone_k", "tolerance multipliers must be positive".into()));
        }
        if requirement == Requirement::Certify {
            experiment.validate_certify(loaded)?;
        }
        Ok(Experiment { reference, ..experiment })
    }

    fn validate_certify(&self, loaded: &LoadedConfig) -> Result<(), ConfigError> {
        let c = &self.config.diagnostics.certify;
        let err = |key: &str, msg: &str| loaded.error_at(key, msg);
        let n = &c.singularity_n_grid;
        if n.len() < 2 || n.contains(&0) || n.windows(2).any(|w| w[1] <= w[0]) {
            return Err(err("singularity_n_grid", "needs at least two strictly increasing positive entries"));
        }
        if c.s_grid.is_empty() || c.s_grid.iter().any(|s| !positive(*s)) {
            return Err(err("s_grid", "must be a nonempty list of positive levels"));
        }
        if c.eps_grid.is_empty() || c.eps_grid.iter().any(|s| !positive(*s)) {
            return Err(err("eps_grid", "must be a nonempty list of positive widths"));
        }
        let tube = self.domain.tube_radius();
        if c.deltas.is_empty() || c.deltas.iter().any(|s| !(positive(*s) && *s < tube)) {
            return Err(err("deltas", &format!("band widths must lie in (0, {tube})")));
        }
        if !positive(c.emulation_eps) || !positive(c.emulation_tolerance) || !positive(c.floor_tolerance) {
            return Err(err("emulation_eps", "thresholds and tolerances must be positive"));
        }
        let cutoff = self.cutoff();
        if c.floor_levels.iter().any(|s| !(s.abs() < cutoff)) {
            return Err(err("floor_levels", &format!("levels must satisfy |s| < {cutoff}")));
        }
        if c.samples == 0 {
            return Err(err("samples", "must be at least 1"));
        }
        Ok(())
    }

    /// Cutoff of the penalty fields (the tube radius for projection drifts).
    pub fn cutoff(&self) -> f64 {
        self.penalties
            .iter()
            .find_map(|p| match p {
                PenaltyDrift::Field(f) => Some(f.cutoff()),
                _ => None,
            })
            .unwrap_or_else(|| self.domain.tube_radius())
    }

    pub fn model(&self, penalty: &PenaltyDrift) -> ModelSpec {
        let ic = &self.config.integrator;
        ModelSpec {
            stopping: ic.stopping.clone(),
            sigma_perturbation: ic.sigma_perturbation,
            stiffness_cap: ic.stiffness_cap,
            record_stride: ic.record_stride,
            ..ModelSpec::new(
                self.domain.clone(),
                self.coefficients.clone(),
                penalty.clone(),
                ic.initial.clone(),
                ic.horizon,
                ic.dt,
            )
        }
    }

    fn reference_model(&self, dt: f64) -> Result<ReferenceModel, String> {
        let ic = &self.config.integrator;
        if !(positive(dt) && dt <= ic.dt) {
            return Err(format!("reference dt must lie in (0, {}], got {dt}", ic.dt));
        }
        let m = (ic.dt / dt).round();
        if (m * dt - ic.dt).abs() > 1e-9 * ic.dt {
            return Err(format!("reference dt {dt} must divide the integrator dt {}", ic.dt));
        }
        let mut model = ReferenceModel::new(
            self.domain.clone(),
            self.coefficients.clone(),
            self.reflection.clone(),
            ic.initial.clone(),
            ic.horizon,
            dt,
        )
        .coupled_to(ic.dt);
        model.record_stride = ic.record_stride.map(|s| s * m as usize);
        Ok(model)
    }

    pub fn n_grid(&self) -> Vec<u32> {
        self.penalties.iter().map(penreflect::penalty::VectorField::index).collect()
    }
}

/// Best-effort mapping of an integrator validation message to its key.
fn integrator_key(message: &str) -> &'static str {
    if message.contains("initial") {
        "initial"
    } else if message.contains("dt") || message.contains("multiple") {
        "dt"
    } else if message.contains("stopping") {
        "stopping"
    } else if message.contains("stiffness") {
        "stiffness_cap"
    } else if message.contains("sigma") {
        "sigma_perturbation"
    } else if message.contains("stride") {
        "record_stride"
    } else {
        "integrator"
    }
}
