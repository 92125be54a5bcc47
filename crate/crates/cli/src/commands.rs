//! The `certify`, `converge` and `paths` commands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Utc;
use penreflect::diagnostics::{
    convergence_table, nondecreasing_within, nonincreasing_within, write_table_csv, ConvergenceRow, Estimate,
    TableOptions,
};
use penreflect::integrator::{simulate_batch, Ensemble};
use penreflect::linalg::norm;
use penreflect::penalty::{
    boundary_floor, emulation_defect, singularity_report, EmulationOutcome, PenaltyDrift, SingularityReport,
    VectorField,
};
use penreflect::reference::simulate_reference_batch;
use serde::Serialize;

use crate::config::{Check, ConfigError, LoadedConfig};
use crate::experiment::{Experiment, Requirement};
use crate::output::{create, prepare_directory, write_json, Metadata, GIT_DESCRIBE};

/// Command-line overrides shared by every command.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Runtime(_) => 3,
        }
    }
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> RunError + '_ {
    move |e| RunError::Runtime(format!("{context}: {e}"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    fn new(check: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            check: check.into(),
            pass,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!("{}: {} ({})", self.check, if self.pass { "PASS" } else { "FAIL" }, self.detail)
    }
}

/// What a command produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub directory: PathBuf,
    pub verdicts: Vec<Verdict>,
    pub aborted_paths: usize,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    /// 0 when every verdict passed and no path aborted, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.verdicts.iter().all(|v| v.pass) && self.aborted_paths == 0 {
            0
        } else {
            1
        }
    }
}

struct Run<'a> {
    command: &'static str,
    experiment: Experiment,
    directory: PathBuf,
    started: Instant,
    started_at: chrono::DateTime<Utc>,
    outputs: Vec<PathBuf>,
    loaded: &'a LoadedConfig,
}

impl<'a> Run<'a> {
    fn start(
        command: &'static str,
        loaded: &'a LoadedConfig,
        requirement: Requirement,
        opts: &RunOptions,
    ) -> Result<Self, RunError> {
        let experiment = Experiment::build(loaded, requirement, opts.seed, opts.workers)?;
        let started_at = Utc::now();
        let out = &experiment.config.output;
        let base = opts.out.clone().unwrap_or_else(|| out.directory.clone());
        let directory =
            prepare_directory(&base, command, out.timestamped, started_at).map_err(runtime("cannot create output directory"))?;
        Ok(Run {
            command,
            experiment,
            directory,
            started: Instant::now(),
            started_at,
            outputs: Vec::new(),
            loaded,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.directory.join(name);
        self.outputs.push(p.clone());
        p
    }

    fn finish(mut self, verdicts: Vec<Verdict>, aborted_paths: usize) -> Result<Outcome, RunError> {
        let meta_path = self.path("metadata.json");
        let meta = Metadata {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            git_describe: GIT_DESCRIBE,
            started_at: self.started_at.to_rfc3339(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            master_seed: self.experiment.master_seed,
            workers: self.experiment.workers,
            outputs: self
                .outputs
                .iter()
                .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
                .collect(),
            config: &self.loaded.config,
        };
        write_json(&meta_path, &meta).map_err(runtime("cannot write metadata"))?;
        Ok(Outcome {
            directory: self.directory,
            verdicts,
            aborted_paths,
            outputs: self.outputs,
        })
    }
}

#[derive(Debug, Serialize)]
struct EmulationRow {
    n: u32,
    #[serde(flatten)]
    outcome: EmulationOutcome,
}

#[derive(Debug, Serialize)]
struct FloorRow {
    n: u32,
    level: f64,
    floor: f64,
    schedule: f64,
}

#[derive(Debug, Serialize)]
struct CertifyReport<'a> {
    singularity: &'a SingularityReport,
    emulation: &'a [EmulationRow],
    floor: &'a [FloorRow],
    verdicts: &'a [Verdict],
}

/// Scalar profile `g_n(s)` the floor is compared with.
fn profile(drift: &PenaltyDrift, s: f64) -> f64 {
    match drift {
        PenaltyDrift::Off { .. } => 0.0,
        PenaltyDrift::Field(f) => f.schedule().eval(s),
        PenaltyDrift::Projection(p) => p.index() as f64 * (-s).max(0.0),
    }
}

/// Spike, singularity, emulation and boundary-floor certificates.
pub fn certify(loaded: &LoadedConfig, opts: &RunOptions) -> Result<Outcome, RunError> {
    let mut run = Run::start("certify", loaded, Requirement::Certify, opts)?;
    let exp = &run.experiment;
    let c = &exp.config.diagnostics.certify;
    let family = &exp.config.penalty.as_ref().expect("certify requires a penalty").family;
    let seed = exp.master_seed;

    let report = singularity_report(family, &c.singularity_n_grid, &c.s_grid, &c.eps_grid)
        .map_err(runtime("singularity report"))?;

    let mut emulation = Vec::new();
    let mut floor = Vec::new();
    for drift in &exp.penalties {
        let n = drift.index();
        for &delta in &c.deltas {
            let outcome = emulation_defect(drift, &exp.reflection, delta, c.emulation_eps, c.samples, seed)
                .map_err(runtime("emulation defect"))?;
            emulation.push(EmulationRow { n, outcome });
        }
        for &level in &c.floor_levels {
            let value = boundary_floor(drift, &exp.domain, level, c.samples, seed).map_err(runtime("boundary floor"))?;
            floor.push(FloorRow {
                n,
                level,
                floor: value,
                schedule: profile(drift, level),
            });
        }
    }

    let applicable: Vec<f64> = emulation.iter().filter_map(|r| r.outcome.defect).collect();
    let worst = applicable.iter().cloned().fold(0.0, f64::max);
    let emulation_verdict = if applicable.is_empty() {
        Verdict::new("emulation", false, "not applicable: no sample reached the threshold")
    } else {
        Verdict::new(
            "emulation",
            worst <= c.emulation_tolerance,
            format!(
                "max defect {worst:.3e} over {} of {} cells, tolerance {:.1e}",
                applicable.len(),
                emulation.len(),
                c.emulation_tolerance
            ),
        )
    };
    // Relative to the schedule value, which reaches 1e10 at large n.
    let floor_gap = floor
        .iter()
        .map(|r| (r.schedule - r.floor) / r.schedule.max(1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let verdicts = vec![
        Verdict::new("spike", report.spike, "spike integrals increase strictly along the n-grid"),
        Verdict::new("singularity", report.vanishing, "sup over the s-grid decays after its peak"),
        emulation_verdict,
        Verdict::new(
            "floor",
            floor_gap <= c.floor_tolerance,
            format!("max relative g_n(s) - floor(s) = {floor_gap:.3e}"),
        ),
    ];

    let json_path = run.path("certify.json");
    write_json(
        &json_path,
        &CertifyReport {
            singularity: &report,
            emulation: &emulation,
            floor: &floor,
            verdicts: &verdicts,
        },
    )
    .map_err(runtime("cannot write certify.json"))?;

    let csv_path = run.path("certify.csv");
    let mut w = csv::Writer::from_writer(create(&csv_path).map_err(runtime("cannot write certify.csv"))?);
    let write = |w: &mut csv::Writer<_>, rec: [String; 6]| w.write_record(rec).map_err(runtime("cannot write certify.csv"));
    write(&mut w, ["check", "n", "delta", "eps", "level", "value"].map(String::from))?;
    let blank = String::new;
    for row in &report.rows {
        write(&mut w, ["sup_g".into(), row.n.to_string(), blank(), blank(), blank(), row.sup_on_grid.to_string()])?;
        for (eps, v) in report.eps_grid.iter().zip(&row.spike_integrals) {
            write(&mut w, ["spike_integral".into(), row.n.to_string(), blank(), eps.to_string(), blank(), v.to_string()])?;
        }
    }
    for r in &emulation {
        let value = r.outcome.defect.map_or("not_applicable".to_string(), |d| d.to_string());
        write(
            &mut w,
            ["emulation_defect".into(), r.n.to_string(), r.outcome.delta.to_string(), r.outcome.eps.to_string(), blank(), value],
        )?;
    }
    for r in &floor {
        write(&mut w, ["boundary_floor".into(), r.n.to_string(), blank(), blank(), r.level.to_string(), r.floor.to_string()])?;
    }
    w.flush().map_err(runtime("cannot write certify.csv"))?;
    drop(w);

    run.finish(verdicts, 0)
}

/// Result of `converge`, including the table for programmatic callers.
#[derive(Clone, Debug)]
pub struct ConvergeOutcome {
    pub outcome: Outcome,
    pub rows: Vec<ConvergenceRow>,
    pub table: PathBuf,
}

/// Penalized ensembles for every n, a reference ensemble and the table.
pub fn converge(loaded: &LoadedConfig, opts: &RunOptions) -> Result<ConvergeOutcome, RunError> {
    let mut run = Run::start("converge", loaded, Requirement::Converge, opts)?;
    let exp = run.experiment.clone();
    let ic = &exp.config.integrator;
    let (kind, mut ref_model) = exp.reference.clone().expect("converge requires a reference");
    // Only final states enter the table; keep memory flat.
    if ref_model.record_stride.is_none() {
        ref_model.record_stride = Some(ref_model.steps());
    }
    let reference = simulate_reference_batch(&ref_model, kind, ic.paths, exp.master_seed, exp.workers)
        .map_err(runtime("reference ensemble"))?;
    let mut aborted = reference.failures;
    if exp.config.output.ensembles {
        let p = run.path("reference.csv");
        reference
            .write_csv(create(&p).map_err(runtime("cannot write reference.csv"))?)
            .map_err(runtime("cannot write reference.csv"))?;
    }

    let mut ensembles = Vec::with_capacity(exp.penalties.len());
    for drift in &exp.penalties {
        let mut spec = exp.model(drift);
        if spec.record_stride.is_none() {
            spec.record_stride = Some(spec.steps());
        }
        let ens = simulate_batch(&spec, ic.paths, exp.master_seed, exp.workers)
            .map_err(runtime("penalized ensemble"))?;
        aborted += ens.failures;
        if exp.config.output.ensembles {
            let name = format!("ensemble_n{}.csv", ens.index);
            let p = run.path(&name);
            ens.write_csv(create(&p).map_err(runtime("cannot write ensemble"))?)
                .map_err(runtime("cannot write ensemble"))?;
        }
        ensembles.push(ens);
    }

    let dc = &exp.config.diagnostics;
    let options = TableOptions {
        eta: dc.eta,
        radial_center: dc.radial_center.clone(),
    };
    let rows = convergence_table(&ensembles, &reference, &options).map_err(runtime("convergence table"))?;
    let table = run.path("table.csv");
    write_table_csv(&rows, exp.domain.dimension(), create(&table).map_err(runtime("cannot write table.csv"))?)
        .map_err(runtime("cannot write table.csv"))?;

    let verdicts = dc
        .checks
        .iter()
        .map(|c| evaluate_check(*c, &exp, &rows, &ensembles))
        .collect::<Vec<_>>();
    let vpath = run.path("verdicts.json");
    write_json(&vpath, &verdicts).map_err(runtime("cannot write verdicts.json"))?;

    Ok(ConvergeOutcome {
        outcome: run.finish(verdicts, aborted)?,
        rows,
        table,
    })
}

fn evaluate_check(check: Check, exp: &Experiment, rows: &[ConvergenceRow], ensembles: &[Ensemble]) -> Verdict {
    let dc = &exp.config.diagnostics;
    let last = rows.last().expect("n-grid is nonempty");
    let se: Vec<f64> = rows.iter().map(|r| r.ks_stderr).collect();
    let name = format!("{check:?}");
    match check {
        Check::KsMonotone => {
            let d = last.ks.len();
            let ok = (0..d).all(|i| {
                let v: Vec<f64> = rows.iter().map(|r| r.ks[i]).collect();
                nonincreasing_within(&v, &se, dc.monotone_k)
            });
            Verdict::new(name, ok, format!("KS by n: {:?}", rows.iter().map(|r| r.ks.clone()).collect::<Vec<_>>()))
        }
        Check::KsThreshold => {
            let worst = last.ks.iter().cloned().fold(0.0, f64::max);
            Verdict::new(name, worst <= dc.ks_threshold, format!("max KS {worst:.4} at n = {}", last.n))
        }
        Check::RadialKsMonotone | Check::RadialKsThreshold => {
            let Some(v) = rows.iter().map(|r| r.ks_radial).collect::<Option<Vec<f64>>>() else {
                return Verdict::new(name, false, "needs diagnostics.radial_center");
            };
            if check == Check::RadialKsMonotone {
                Verdict::new(name, nonincreasing_within(&v, &se, dc.monotone_k), format!("radial KS by n: {v:?}"))
            } else {
                let x = *v.last().unwrap();
                Verdict::new(name, x <= dc.ks_threshold, format!("radial KS {x:.4} at n = {}", last.n))
            }
        }
        Check::MinPhiMonotone => {
            let p: Vec<f64> = rows.iter().map(|r| r.min_phi.mean).collect();
            let s: Vec<f64> = rows.iter().map(|r| r.min_phi.stderr).collect();
            Verdict::new(name, nondecreasing_within(&p, &s, dc.monotone_k), format!("P(min phi > -eta) by n: {p:?}"))
        }
        Check::MinPhiThreshold => {
            let p = last.min_phi;
            Verdict::new(
                name,
                p.mean >= dc.min_phi_threshold,
                format!("P(min phi > -eta) = {:.4} ± {:.4} at n = {}", p.mean, p.stderr, last.n),
            )
        }
        Check::LocalTimeMatch => {
            let (a, b) = (last.mean_l, last.reference_weighted_local_time);
            let tol = dc.match_k * a.pooled_stderr(&b);
            Verdict::new(
                name,
                (a.mean - b.mean).abs() <= tol,
                format!("mean l = {:.4}, reference = {:.4}, tolerance {tol:.4}", a.mean, b.mean),
            )
        }
        Check::PenaltyDirection => penalty_direction(exp, ensembles.last().expect("n-grid is nonempty"), dc.match_k),
    }
}

/// Mean `L(T)` must be parallel to a constant `r`: every component of
/// `L - (r / r_k) L_k`, with `k` the largest component of `r`, is zero
/// within `k` standard errors.
fn penalty_direction(exp: &Experiment, ens: &Ensemble, k: f64) -> Verdict {
    let name = "PenaltyDirection";
    let Some(r) = exp.reflection.as_constant() else {
        return Verdict::new(name, false, "needs a constant reflection vector");
    };
    let main = (0..r.dim()).max_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs())).unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for i in 0..r.dim() {
        let dev: Vec<f64> = ens
            .completed()
            .map(|p| p.penalty_integral[i] - r[i] / r[main] * p.penalty_integral[main])
            .collect();
        let Ok(e) = Estimate::from_samples(&dev) else {
            return Verdict::new(name, false, "no completed paths");
        };
        let scale = ens.completed().map(|p| norm(&p.penalty_integral)).fold(0.0, f64::max);
        ok &= e.mean.abs() <= k * e.stderr + 1e-12 * scale.max(1.0);
        details.push(format!("L{} deviation {:.3e} ± {:.3e}", i + 1, e.mean, e.stderr));
    }
    Verdict::new(name, ok, details.join(", "))
}

/// Ensembles of `count` paths per n (or the free diffusion), optionally
/// with one trajectory file per path.
pub fn paths(loaded: &LoadedConfig, opts: &RunOptions, count: Option<usize>, dump: bool) -> Result<Outcome, RunError> {
    let mut run = Run::start("paths", loaded, Requirement::Paths, opts)?;
    let exp = run.experiment.clone();
    let count = count.unwrap_or(exp.config.integrator.paths);
    if count == 0 {
        return Err(loaded.error_at("paths", "path count must be at least 1").into());
    }
    let mut aborted = 0;
    for drift in &exp.penalties {
        let mut spec = exp.model(drift);
        if dump && spec.record_stride.is_none() {
            spec.record_stride = Some(1);
        }
        let ens = simulate_batch(&spec, count, exp.master_seed, exp.workers).map_err(runtime("ensemble"))?;
        aborted += ens.failures;
        let n = ens.index;
        let p = run.path(&format!("summary_n{n}.csv"));
        ens.write_csv(create(&p).map_err(runtime("cannot write summary"))?)
            .map_err(runtime("cannot write summary"))?;
        if dump {
            for (i, rec) in ens.records.iter().enumerate() {
                let p = run.path(&format!("trajectory_n{n}_path{i}.csv"));
                write_trajectory(&p, &exp, drift, rec).map_err(runtime("cannot write trajectory"))?;
            }
        }
    }
    run.finish(Vec::new(), aborted)
}

fn write_trajectory(
    path: &Path,
    exp: &Experiment,
    drift: &PenaltyDrift,
    rec: &penreflect::integrator::PathRecord,
) -> Result<(), Box<dyn std::error::Error>> {
    let d = exp.domain.dimension();
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(["phi", "f_norm"].map(String::from));
    w.write_record(&header)?;
    for (t, x) in rec.times.iter().zip(&rec.states) {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        row.push(exp.domain.signed_distance(x)?.to_string());
        row.push(drift.eval(x).map_or(f64::NAN, |f| norm(&f)).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
