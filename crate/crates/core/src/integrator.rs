//! Euler-Maruyama ensembles of the penalized SDE
//! `dX = [b(X) + f_n(X)] dt + sigma_n(X) dW`.
//!
//! Each step is
//! `x_{k+1} = x_k + (b(x_k) + f_n(x_k)) dt + sigma_n(x_k) sqrt(dt) xi_k`.
//! When `|f_n(x_k)| dt` exceeds the stiffness cap, the drift part of the step
//! is split into explicit substeps of length `cap / |f_n|` and the Brownian
//! increment is added once at the end. `L = ∫ f_n dt` and `l = ∫ |f_n| dt` are
//! accumulated with the left-point rule over the drift (sub)steps actually
//! taken, so `X(T) = z + ∫ b dt + L + noise` holds exactly on every path.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Estimate;
use crate::error::{Error, Result};
use crate::fields::CoefficientField;
use crate::geometry::Domain;
use crate::linalg::{check_dim, distance, norm, Point};
use crate::penalty::{PenaltyDrift, VectorField};
use crate::rng::{derive_seed, GaussianStream, DRIVER_STREAM};

/// Paths whose state norm exceeds this are aborted as blown up.
pub const BLOW_UP_NORM: f64 = 1e9;
/// Default per-step budget of drift substeps before a path is aborted.
pub const DEFAULT_MAX_SUBSTEPS: u64 = 1_000_000;
/// Number of recorded states per path when no stride is configured.
pub const DEFAULT_RECORDED_STATES: usize = 100;
/// Relative slack allowed between `steps * dt` and the horizon.
const HORIZON_TOL: f64 = 1e-9;

/// The open set `O` a path is stopped on leaving.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingRegion {
    /// Never stop.
    #[default]
    None,
    /// `{phi > -depth}`: the `depth`-enlargement of the closed domain.
    Band { depth: f64 },
    /// Open Euclidean ball.
    Ball { center: Point, radius: f64 },
}

impl StoppingRegion {
    pub fn validate(&self, dimension: usize) -> Result<()> {
        match self {
            StoppingRegion::None => Ok(()),
            StoppingRegion::Band { depth } => {
                if depth.is_finite() && *depth > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidModel(format!("stopping band depth must be positive, got {depth}")))
                }
            }
            StoppingRegion::Ball { center, radius } => {
                check_dim(dimension, center.dim())?;
                if radius.is_finite() && *radius > 0.0 && center.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidModel(format!("stopping ball radius must be positive, got {radius}")))
                }
            }
        }
    }

    pub fn contains(&self, domain: &Domain, x: &[f64]) -> Result<bool> {
        Ok(match self {
            StoppingRegion::None => true,
            StoppingRegion::Band { depth } => domain.signed_distance(x)? > -depth,
            StoppingRegion::Ball { center, radius } => distance(center, x) < *radius,
        })
    }
}

/// A penalized model together with its discretization.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub domain: Domain,
    pub coefficients: CoefficientField,
    pub penalty: PenaltyDrift,
    pub initial: Point,
    pub horizon: f64,
    pub dt: f64,
    pub stopping: StoppingRegion,
    /// `sigma_n = (1 + sigma_perturbation / n) sigma`.
    pub sigma_perturbation: f64,
    /// `None` selects `0.5 * min(tube radius, penalty length scale)`.
    pub stiffness_cap: Option<f64>,
    /// Record every `record_stride`-th state; `None` keeps about
    /// [`DEFAULT_RECORDED_STATES`].
    pub record_stride: Option<usize>,
    pub max_substeps: u64,
}

impl ModelSpec {
    pub fn new(
        domain: Domain,
        coefficients: CoefficientField,
        penalty: PenaltyDrift,
        initial: impl Into<Point>,
        horizon: f64,
        dt: f64,
    ) -> Self {
        ModelSpec {
            domain,
            coefficients,
            penalty,
            initial: initial.into(),
            horizon,
            dt,
            stopping: StoppingRegion::None,
            sigma_perturbation: 0.0,
            stiffness_cap: None,
            record_stride: None,
            max_substeps: DEFAULT_MAX_SUBSTEPS,
        }
    }

    pub fn with_stopping(mut self, stopping: StoppingRegion) -> Self {
        self.stopping = stopping;
        self
    }

    pub fn with_sigma_perturbation(mut self, scale: f64) -> Self {
        self.sigma_perturbation = scale;
        self
    }

    pub fn with_stiffness_cap(mut self, cap: f64) -> Self {
        self.stiffness_cap = Some(cap);
        self
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = Some(stride);
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn effective_record_stride(&self) -> usize {
        self.record_stride
            .unwrap_or_else(|| self.steps().div_ceil(DEFAULT_RECORDED_STATES).max(1))
    }

    pub fn effective_stiffness_cap(&self) -> f64 {
        self.stiffness_cap.unwrap_or_else(|| {
            let tube = self.domain.tube_radius();
            0.5 * self.penalty.length_scale().map_or(tube, |s| s.min(tube))
        })
    }

    /// Factor `1 + sigma_perturbation / n` (1 without a penalty index).
    pub fn sigma_factor(&self) -> f64 {
        match self.penalty.index() {
            0 => 1.0,
            n => 1.0 + self.sigma_perturbation / n as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.domain.dimension();
        check_dim(d, self.coefficients.dimension())?;
        check_dim(d, self.penalty.dimension())?;
        check_dim(d, self.initial.dim())?;
        validate_grid(self.horizon, self.dt)?;
        if !(self.sigma_perturbation.is_finite() && self.sigma_perturbation >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "sigma perturbation must be nonnegative, got {}",
                self.sigma_perturbation
            )));
        }
        if let Some(cap) = self.stiffness_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(Error::InvalidModel(format!("stiffness cap must be positive, got {cap}")));
            }
        }
        if self.record_stride == Some(0) {
            return Err(Error::InvalidModel("record stride must be at least 1".into()));
        }
        if self.max_substeps == 0 {
            return Err(Error::InvalidModel("substep budget must be at least 1".into()));
        }
        let phi = self.domain.signed_distance(&self.initial)?;
        if !(phi > 0.0) {
            return Err(Error::InvalidModel(format!(
                "initial point must lie strictly inside the domain (phi = {phi})"
            )));
        }
        self.stopping.validate(d)?;
        if !self.stopping.contains(&self.domain, &self.initial)? {
            return Err(Error::InvalidModel("initial point lies outside the stopping region".into()));
        }
        Ok(())
    }
}

/// Shared checks on `(T, dt)`: positive, `dt < T`, `T/dt` an integer.
pub(crate) fn validate_grid(horizon: f64, dt: f64) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0 && dt.is_finite() && dt > 0.0 && dt < horizon) {
        return Err(Error::InvalidModel(format!(
            "need 0 < dt < T, got dt = {dt}, T = {horizon}"
        )));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > HORIZON_TOL * horizon {
        return Err(Error::InvalidModel(format!(
            "T = {horizon} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(())
}

/// Why a path was aborted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AbortReason {
    /// Non-finite state or `|x| > BLOW_UP_NORM`.
    BlowUp,
    /// The stiffness guard exhausted its substep budget in one step.
    SubstepBudget,
    /// A coefficient or geometry evaluation failed.
    Evaluation { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathStatus {
    Completed,
    Aborted { reason: AbortReason, time: f64 },
}

impl PathStatus {
    pub fn is_aborted(&self) -> bool {
        matches!(self, PathStatus::Aborted { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            PathStatus::Completed => "ok",
            PathStatus::Aborted { reason: AbortReason::BlowUp, .. } => "blow_up",
            PathStatus::Aborted { reason: AbortReason::SubstepBudget, .. } => "substep_budget",
            PathStatus::Aborted { reason: AbortReason::Evaluation { .. }, .. } => "evaluation_error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub seed: u64,
    /// Recorded times; always starts at 0 and ends at the horizon.
    pub times: Vec<f64>,
    /// States at `times`, frozen after exit or abort.
    pub states: Vec<Point>,
    /// `L = ∫ f_n dt` at the horizon.
    pub penalty_integral: Point,
    /// `l = ∫ |f_n| dt` at the horizon.
    pub penalty_length: f64,
    /// Minimum of `phi` over every simulated state (not only recorded ones).
    pub min_phi: f64,
    pub exit_time: Option<f64>,
    pub status: PathStatus,
    /// Steps on which the stiffness guard split the drift.
    pub stiff_steps: u64,
    /// Total drift substeps taken on stiff steps.
    pub substeps: u64,
    pub stiffness_cap: f64,
}

impl PathRecord {
    pub fn final_state(&self) -> &Point {
        self.states.last().expect("path records hold at least the initial state")
    }
}

struct Recorder {
    stride: usize,
    times: Vec<f64>,
    states: Vec<Point>,
}

impl Recorder {
    fn new(stride: usize, steps: usize, initial: &Point) -> Self {
        let capacity = steps / stride + 2;
        let mut times = Vec::with_capacity(capacity);
        let mut states = Vec::with_capacity(capacity);
        times.push(0.0);
        states.push(initial.clone());
        Recorder { stride, times, states }
    }

    fn record(&mut self, step: usize, steps: usize, dt: f64, x: &Point) {
        if step % self.stride == 0 || step == steps {
            self.times.push(step as f64 * dt);
            self.states.push(x.clone());
        }
    }

    /// Fills the remaining grid with the frozen state.
    fn freeze_from(&mut self, step: usize, steps: usize, dt: f64, x: &Point) {
        for k in step + 1..=steps {
            self.record(k, steps, dt, x);
        }
    }
}

/// Simulates one path of `spec` driven by the Gaussian stream of `seed`.
pub fn simulate_path(spec: &ModelSpec, seed: u64) -> Result<PathRecord> {
    spec.validate()?;
    Ok(run_path(spec, seed))
}

fn run_path(spec: &ModelSpec, seed: u64) -> PathRecord {
    let d = spec.domain.dimension();
    let steps = spec.steps();
    let dt = spec.dt;
    let sqrt_dt = dt.sqrt();
    let noise_scale = spec.sigma_factor() * sqrt_dt;
    let cap = spec.effective_stiffness_cap();
    let mut stream = GaussianStream::new(seed, DRIVER_STREAM, d);
    let mut recorder = Recorder::new(spec.effective_record_stride(), steps, &spec.initial);

    let mut x = spec.initial.clone();
    let mut big_l = Point::zeros(d);
    let mut small_l = 0.0;
    let mut min_phi = f64::INFINITY;
    let mut exit_time = None;
    let mut stiff_steps = 0u64;
    let mut substeps = 0u64;
    let mut status = PathStatus::Completed;

    let mut xi = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut noise = vec![0.0; d];

    let abort = |reason: AbortReason, step: usize| PathStatus::Aborted {
        reason,
        time: step as f64 * dt,
    };
    let eval_error = |e: Error| AbortReason::Evaluation { message: e.to_string() };

    match spec.domain.signed_distance(&x) {
        Ok(phi) => min_phi = phi,
        Err(e) => status = abort(eval_error(e), 0),
    }

    let mut step = 0;
    let mut prev = x.clone();
    while step < steps && !status.is_aborted() {
        stream.next_step(&mut xi);
        prev.clone_from(&x);
        let outcome = (|| -> std::result::Result<(), AbortReason> {
            let sigma = spec.coefficients.diffusion(&x).map_err(eval_error)?;
            sigma.mul_vec_into(&xi, &mut noise);
            let f = spec.penalty.eval(&x).map_err(eval_error)?;
            let f_norm = norm(&f);
            if !f_norm.is_finite() {
                return Err(AbortReason::BlowUp);
            }
            if f_norm * dt <= cap {
                spec.coefficients.drift_into(&x, &mut b).map_err(eval_error)?;
                for i in 0..d {
                    big_l[i] += f[i] * dt;
                    x[i] += (b[i] + f[i]) * dt + noise_scale * noise[i];
                }
                small_l += f_norm * dt;
            } else {
                stiff_steps += 1;
                let mut remaining = dt;
                let mut f = f;
                let mut f_norm = f_norm;
                let mut taken = 0u64;
                loop {
                    let h = if f_norm > 0.0 { remaining.min(cap / f_norm) } else { remaining };
                    spec.coefficients.drift_into(&x, &mut b).map_err(eval_error)?;
                    for i in 0..d {
                        big_l[i] += f[i] * h;
                        x[i] += (b[i] + f[i]) * h;
                    }
                    small_l += f_norm * h;
                    taken += 1;
                    remaining -= h;
                    if remaining <= 0.0 {
                        break;
                    }
                    if taken >= spec.max_substeps {
                        substeps += taken;
                        return Err(AbortReason::SubstepBudget);
                    }
                    f = spec.penalty.eval(&x).map_err(eval_error)?;
                    f_norm = norm(&f);
                    if !f_norm.is_finite() {
                        substeps += taken;
                        return Err(AbortReason::BlowUp);
                    }
                }
                substeps += taken;
                for i in 0..d {
                    x[i] += noise_scale * noise[i];
                }
            }
            Ok(())
        })();
        step += 1;
        if let Err(reason) = outcome {
            status = abort(reason, step);
            break;
        }
        if !x.is_finite() || norm(&x) > BLOW_UP_NORM {
            status = abort(AbortReason::BlowUp, step);
            break;
        }
        match spec.domain.signed_distance(&x) {
            Ok(phi) => min_phi = min_phi.min(phi),
            Err(e) => {
                status = abort(eval_error(e), step);
                break;
            }
        }
        recorder.record(step, steps, dt, &x);
        match spec.stopping.contains(&spec.domain, &x) {
            Ok(true) => {}
            Ok(false) => {
                exit_time = Some(step as f64 * dt);
                break;
            }
            Err(e) => {
                status = abort(eval_error(e), step);
                break;
            }
        }
    }
    if status.is_aborted() {
        // The failing step is discarded; the last good state is frozen.
        if step > 0 {
            recorder.freeze_from(step - 1, steps, dt, &prev);
        } else {
            recorder.freeze_from(0, steps, dt, &x);
        }
    } else if step < steps {
        recorder.freeze_from(step, steps, dt, &x);
    }

    PathRecord {
        seed,
        times: recorder.times,
        states: recorder.states,
        penalty_integral: big_l,
        penalty_length: small_l,
        min_phi,
        exit_time,
        status,
        stiff_steps,
        substeps,
        stiffness_cap: cap,
    }
}

/// Penalized paths sharing one model, ordered by path index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub index: u32,
    pub horizon: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub records: Vec<PathRecord>,
    pub failures: usize,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of paths that were not aborted.
    pub fn completed(&self) -> impl Iterator<Item = &PathRecord> {
        self.records.iter().filter(|r| !r.status.is_aborted())
    }

    /// One row per path: seed, final state, `L`, `l`, `min_phi`, exit time,
    /// status, stiff-step and substep counts.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let d = self.records.first().map_or(0, |r| r.final_state().dim());
        let mut header = vec!["path".to_string(), "seed".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.extend((1..=d).map(|i| format!("big_l{i}")));
        header.extend(
            ["l", "min_phi", "exit_time", "status", "stiff_steps", "substeps"].map(String::from),
        );
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![i.to_string(), r.seed.to_string()];
            row.extend(r.final_state().iter().map(|v| v.to_string()));
            row.extend(r.penalty_integral.iter().map(|v| v.to_string()));
            row.push(r.penalty_length.to_string());
            row.push(r.min_phi.to_string());
            row.push(r.exit_time.map_or(String::new(), |t| t.to_string()));
            row.push(r.status.label().to_string());
            row.push(r.stiff_steps.to_string());
            row.push(r.substeps.to_string());
            w.write_record(&row)?;
        }
        Ok(())
    }
}

/// Runs `jobs` on a pool of `workers` threads (all cores when `None`),
/// keeping the output in index order.
pub(crate) fn run_indexed<T, F>(count: usize, workers: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidModel("worker count must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidModel(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(job).collect()))
}

/// Simulates `count` paths; path `i` uses `derive_seed(master_seed, i)`.
/// The result does not depend on `workers`.
pub fn simulate_batch(spec: &ModelSpec, count: usize, master_seed: u64, workers: Option<usize>) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::InvalidModel("path count must be at least 1".into()));
    }
    spec.validate()?;
    let records = run_indexed(count, workers, |i| run_path(spec, derive_seed(master_seed, i as u64)))?;
    let failures = records.iter().filter(|r| r.status.is_aborted()).count();
    Ok(Ensemble {
        index: spec.penalty.index(),
        horizon: spec.horizon,
        dt: spec.dt,
        master_seed,
        records,
        failures,
    })
}

/// Riemann-Stieltjes sum `Σ h(t_k) (l(t_{k+1}) - l(t_k))`.
pub fn stieltjes_accumulate(integrand: &[f64], accumulator: &[f64]) -> Result<f64> {
    if integrand.len() != accumulator.len() {
        return Err(Error::LengthMismatch(integrand.len(), accumulator.len()));
    }
    let mut total = 0.0;
    for (k, w) in accumulator.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(Error::DecreasingAccumulator {
                index: k + 1,
                from: w[0],
                to: w[1],
            });
        }
        total += integrand[k] * (w[1] - w[0]);
    }
    Ok(total)
}

/// Fraction of paths with `min_phi > -eta`, with its binomial standard
/// error. Aborted paths count as having left the enlarged domain.
pub fn min_phi_statistic(ensemble: &Ensemble, eta: f64) -> Result<Estimate> {
    if !(eta > 0.0) {
        return Err(Error::InvalidModel(format!("eta must be positive, got {eta}")));
    }
    if ensemble.is_empty() {
        return Err(Error::EmptySample);
    }
    let hits = ensemble
        .records
        .iter()
        .filter(|r| !r.status.is_aborted() && r.min_phi > -eta)
        .count();
    Ok(Estimate::proportion(hits, ensemble.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{normalize_reflection, ReflectionSpec};
    use crate::penalty::{PenaltyField, PenaltySchedule};

    fn half_space() -> Domain {
        Domain::half_space(2, 1, 0.0).unwrap()
    }

    fn still(drift: [f64; 2]) -> CoefficientField {
        CoefficientField::deterministic(drift)
    }

    #[test]
    fn no_dynamics_gives_constant_path() {
        let spec = ModelSpec::new(half_space(), still([0.0, 0.0]), PenaltyDrift::Off { dimension: 2 }, [0.0, 0.5], 1.0, 0.01);
        let rec = simulate_path(&spec, 3).unwrap();
        assert!(rec.states.iter().all(|s| s.to_vec() == vec![0.0, 0.5]));
        assert_eq!(rec.penalty_integral.to_vec(), vec![0.0, 0.0]);
        assert_eq!(rec.penalty_length, 0.0);
        assert_eq!(rec.min_phi, 0.5);
        assert_eq!(*rec.times.last().unwrap(), 1.0);
    }

    #[test]
    fn deterministic_drift() {
        let spec = ModelSpec::new(half_space(), still([1.0, 0.0]), PenaltyDrift::Off { dimension: 2 }, [0.0, 0.5], 1.0, 0.25)
            .with_record_stride(1);
        let rec = simulate_path(&spec, 0).unwrap();
        assert_eq!(rec.final_state().to_vec(), vec![1.0, 0.5]);
        assert_eq!(rec.exit_time, None);
        assert_eq!(rec.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn exit_freezes_state() {
        let spec = ModelSpec::new(half_space(), still([0.0, -1.0]), PenaltyDrift::Off { dimension: 2 }, [0.0, 0.5], 1.0, 0.1)
            .with_stopping(StoppingRegion::Band { depth: 0.05 })
            .with_record_stride(1);
        let rec = simulate_path(&spec, 0).unwrap();
        let exit = rec.exit_time.unwrap();
        assert!((exit - 0.6).abs() < 1e-12);
        let k = rec.times.iter().position(|t| (t - exit).abs() < 1e-12).unwrap();
        assert!(rec.states[k..].iter().all(|s| s == &rec.states[k]));
        assert_eq!(rec.states.len(), 11);
    }

    #[test]
    fn stiff_steps_are_split_and_identity_holds() {
        let hs = half_space();
        let r = normalize_reflection(ReflectionSpec::Constant { vector: Point::from([1.0, 1.0]) }, &hs).unwrap();
        let field = PenaltyField::new(PenaltySchedule::exponential(256), r, None).unwrap();
        let spec = ModelSpec::new(
            hs,
            CoefficientField::brownian(2),
            PenaltyDrift::Field(field),
            [0.0, 0.05],
            1.0,
            1e-3,
        );
        let rec = simulate_path(&spec, 11).unwrap();
        assert!(rec.stiff_steps > 0 && rec.substeps >= rec.stiff_steps);
        assert!(rec.penalty_length + 1e-12 >= norm(&rec.penalty_integral));
        assert!(rec.min_phi > -0.1);
        // X(T) - z - L is the pure Brownian part, which is the same path
        // without penalty.
        let free = ModelSpec::new(
            half_space(),
            CoefficientField::brownian(2),
            PenaltyDrift::Off { dimension: 2 },
            [0.0, 0.05],
            1.0,
            1e-3,
        );
        let w = simulate_path(&free, 11).unwrap();
        for i in 0..2 {
            let lhs = rec.final_state()[i] - rec.penalty_integral[i];
            assert!((lhs - w.final_state()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn blow_up_is_flagged() {
        let spec = ModelSpec::new(half_space(), still([1e12, 0.0]), PenaltyDrift::Off { dimension: 2 }, [0.0, 0.5], 1.0, 0.5);
        let rec = simulate_path(&spec, 0).unwrap();
        assert_eq!(rec.status.label(), "blow_up");
        assert_eq!(rec.states.len(), rec.times.len());
    }

    #[test]
    fn invalid_models_rejected() {
        let base = || ModelSpec::new(half_space(), still([0.0, 0.0]), PenaltyDrift::Off { dimension: 2 }, [0.0, 0.5], 1.0, 0.1);
        assert!(simulate_path(&ModelSpec { initial: Point::from([0.0, -0.1]), ..base() }, 0).is_err());
        assert!(simulate_path(&ModelSpec { dt: 2.0, ..base() }, 0).is_err());
        assert!(simulate_path(&ModelSpec { dt: 0.3, ..base() }, 0).is_err());
        assert!(simulate_batch(&base(), 0, 1, None).is_err());
    }

    #[test]
    fn batch_is_worker_independent() {
        let spec = ModelSpec::new(half_space(), CoefficientField::brownian(2), PenaltyDrift::Off { dimension: 2 }, [0.0, 0.5], 1.0, 0.01);
        let a = simulate_batch(&spec, 40, 9, Some(1)).unwrap();
        let b = simulate_batch(&spec, 40, 9, Some(3)).unwrap();
        assert_eq!(a, b);
        let single = simulate_batch(&spec, 1, 9, None).unwrap();
        assert_eq!(single.records[0], simulate_path(&spec, derive_seed(9, 0)).unwrap());
    }

    #[test]
    fn stieltjes_examples() {
        let l = [0.0, 0.5, 0.7, 2.0];
        assert_eq!(stieltjes_accumulate(&[1.0; 4], &l).unwrap(), 2.0);
        let n = 10_000;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        assert!((stieltjes_accumulate(&t, &t).unwrap() - 0.5).abs() < 1e-3);
        assert!(matches!(
            stieltjes_accumulate(&[1.0, 1.0], &[1.0, 0.5]),
            Err(Error::DecreasingAccumulator { .. })
        ));
        assert!(stieltjes_accumulate(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn deterministic_paths_stay_inside() {
        let spec = ModelSpec::new(half_space(), still([1.0, 0.0]), PenaltyDrift::Off { dimension: 2 }, [0.0, 0.5], 1.0, 0.1);
        let ens = simulate_batch(&spec, 5, 0, None).unwrap();
        let est = min_phi_statistic(&ens, 0.1).unwrap();
        assert_eq!((est.mean, est.stderr), (1.0, 0.0));
    }
}
