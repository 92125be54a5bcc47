//! Reflected-diffusion simulators used as ground truth.
//!
//! Two constructions are provided. In a half-space with constant
//! coefficients and constant oblique `r`, the free Euler path `X` is exact in
//! law on the grid, and the Skorokhod map applied to the normal coordinate
//! gives `Z = X + r ℓ`. In other domains, with normal reflection only, the
//! projection scheme takes a free Euler step and projects back onto the
//! closure, accumulating the projection displacement as local time.
//!
//! A reference model may be coupled to a coarser penalized discretization:
//! with `driver_dt = m * dt`, the coarse Gaussian draws of a path seed are
//! refined by Brownian bridges, so reference and penalized paths with the
//! same seed share their Brownian motion at the coarse grid.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{CoefficientField, ReflectionField};
use crate::geometry::{Domain, Shape, TOL_BOUNDARY};
use crate::integrator::{run_indexed, validate_grid};
use crate::linalg::{check_dim, distance, norm, Matrix, Point};
use crate::rng::{derive_seed, GaussianStream, BRIDGE_STREAM, DRIVER_STREAM};

/// Records about this many states per path when no stride is configured.
pub const DEFAULT_RECORDED_STATES: usize = 100;

/// `ℓ_k = max(0, max_{j<=k} -x_j)` and `z_k = x_k + ℓ_k`.
pub fn skorokhod_halfline(driver: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = *driver.first().ok_or(Error::EmptySample)?;
    if first < 0.0 {
        return Err(Error::NegativeStart(first));
    }
    let mut level: f64 = 0.0;
    let mut local_time = Vec::with_capacity(driver.len());
    let mut reflected = Vec::with_capacity(driver.len());
    for &x in driver {
        level = level.max(-x);
        local_time.push(level);
        reflected.push(x + level);
    }
    Ok((reflected, local_time))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Skorokhod map in a half-space, constant coefficients, constant `r`.
    HalfspaceOblique,
    /// Euler step plus projection onto the closure; normal reflection.
    Projection,
}

/// A reflected diffusion together with its discretization.
#[derive(Clone, Debug)]
pub struct ReferenceModel {
    pub domain: Domain,
    pub coefficients: CoefficientField,
    pub reflection: ReflectionField,
    pub initial: Point,
    pub horizon: f64,
    pub dt: f64,
    /// Step of the coarse driver grid the Brownian motion is coupled to;
    /// `None` draws the fine increments directly.
    pub driver_dt: Option<f64>,
    pub record_stride: Option<usize>,
}

impl ReferenceModel {
    pub fn new(
        domain: Domain,
        coefficients: CoefficientField,
        reflection: ReflectionField,
        initial: impl Into<Point>,
        horizon: f64,
        dt: f64,
    ) -> Self {
        ReferenceModel {
            domain,
            coefficients,
            reflection,
            initial: initial.into(),
            horizon,
            dt,
            driver_dt: None,
            record_stride: None,
        }
    }

    pub fn coupled_to(mut self, driver_dt: f64) -> Self {
        self.driver_dt = Some(driver_dt);
        self
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = Some(stride);
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Fine steps per coarse driver step.
    pub fn refinement(&self) -> usize {
        self.driver_dt.map_or(1, |c| (c / self.dt).round() as usize)
    }

    pub fn effective_record_stride(&self) -> usize {
        self.record_stride
            .unwrap_or_else(|| self.steps().div_ceil(DEFAULT_RECORDED_STATES).max(1))
    }

    /// Checks the model and its compatibility with `kind`.
    pub fn validate(&self, kind: ReferenceKind) -> Result<()> {
        let d = self.domain.dimension();
        check_dim(d, self.coefficients.dimension())?;
        check_dim(d, self.initial.dim())?;
        validate_grid(self.horizon, self.dt)?;
        if let Some(coarse) = self.driver_dt {
            validate_grid(self.horizon, coarse).or_else(|e| {
                if coarse == self.horizon {
                    Ok(())
                } else {
                    Err(e)
                }
            })?;
            let m = (coarse / self.dt).round();
            if m < 1.0 || (m * self.dt - coarse).abs() > 1e-9 * coarse {
                return Err(Error::InvalidModel(format!(
                    "driver step {coarse} is not an integer multiple of the reference step {}",
                    self.dt
                )));
            }
        }
        if self.record_stride == Some(0) {
            return Err(Error::InvalidModel("record stride must be at least 1".into()));
        }
        let phi = self.domain.signed_distance(&self.initial)?;
        if phi < 0.0 {
            return Err(Error::InvalidModel(format!(
                "initial point must lie in the closed domain (phi = {phi})"
            )));
        }
        match kind {
            ReferenceKind::HalfspaceOblique => {
                if !matches!(self.domain.shape(), Shape::HalfSpace { .. }) {
                    return Err(Error::Unsupported(
                        "the Skorokhod-map reference needs a half-space domain".into(),
                    ));
                }
                if self.coefficients.as_constant().is_none() {
                    return Err(Error::Unsupported(
                        "the Skorokhod-map reference needs constant drift and diffusion".into(),
                    ));
                }
                if self.reflection.as_constant().is_none() {
                    return Err(Error::Unsupported(
                        "the Skorokhod-map reference needs a constant reflection vector".into(),
                    ));
                }
            }
            ReferenceKind::Projection => {
                if !self.reflection.is_normal() {
                    return Err(Error::Unsupported(
                        "the projection scheme only reproduces normal reflection; oblique reflection \
                         has a reference only in a half-space"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Brownian increments on the fine grid of a reference model.
struct Increments {
    driver: GaussianStream,
    bridge: Option<GaussianStream>,
    refinement: usize,
    coarse_sd: f64,
    fine_sd: f64,
    buffer: Vec<f64>,
    /// `refinement` fine increments of the current coarse step, row-major.
    pending: Vec<f64>,
    cursor: usize,
}

impl Increments {
    fn new(model: &ReferenceModel, seed: u64) -> Self {
        let d = model.domain.dimension();
        let m = model.refinement();
        let coarse = model.driver_dt.unwrap_or(model.dt);
        Increments {
            driver: GaussianStream::new(seed, DRIVER_STREAM, d),
            bridge: (m > 1).then(|| GaussianStream::new(seed, BRIDGE_STREAM, d)),
            refinement: m,
            coarse_sd: coarse.sqrt(),
            fine_sd: model.dt.sqrt(),
            buffer: vec![0.0; d],
            pending: vec![0.0; m * d],
            cursor: m,
        }
    }

    /// Next fine increment `ΔW` into `out`.
    fn next(&mut self, out: &mut [f64]) {
        let Some(bridge) = self.bridge.as_mut() else {
            self.driver.next_step(&mut self.buffer);
            for (o, z) in out.iter_mut().zip(&self.buffer) {
                *o = self.fine_sd * z;
            }
            return;
        };
        let d = out.len();
        if self.cursor == self.refinement {
            // δ_j = ΔW/m + sqrt(dt) (Z_j - mean Z) is a Brownian bridge
            // refinement of the coarse increment ΔW.
            let m = self.refinement as f64;
            for chunk in self.pending.chunks_exact_mut(d) {
                bridge.next_step(chunk);
            }
            for i in 0..d {
                let mean = self.pending.iter().skip(i).step_by(d).sum::<f64>() / m;
                for j in 0..self.refinement {
                    self.pending[j * d + i] -= mean;
                }
            }
            self.driver.next_step(&mut self.buffer);
            for j in 0..self.refinement {
                for i in 0..d {
                    let p = &mut self.pending[j * d + i];
                    *p = self.coarse_sd * self.buffer[i] / m + self.fine_sd * *p;
                }
            }
            self.cursor = 0;
        }
        out.copy_from_slice(&self.pending[self.cursor * d..(self.cursor + 1) * d]);
        self.cursor += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectedPathRecord {
    pub seed: u64,
    pub times: Vec<f64>,
    pub states: Vec<Point>,
    /// Local time `ℓ` at `times`; nondecreasing with `ℓ(0) = 0`.
    pub local_time: Vec<f64>,
    /// `∫ |r| dℓ` at the horizon.
    pub weighted_local_time: f64,
    pub min_phi: f64,
    /// Set when the projection scheme met a step it could not project.
    pub aborted: Option<String>,
}

impl ReflectedPathRecord {
    pub fn final_state(&self) -> &Point {
        self.states.last().expect("reference records hold at least the initial state")
    }

    pub fn final_local_time(&self) -> f64 {
        *self.local_time.last().expect("reference records hold at least the initial state")
    }
}

struct Recorder {
    stride: usize,
    steps: usize,
    dt: f64,
    record: ReflectedPathRecord,
}

impl Recorder {
    fn new(model: &ReferenceModel, seed: u64) -> Self {
        let steps = model.steps();
        let stride = model.effective_record_stride();
        let capacity = steps / stride + 2;
        let mut record = ReflectedPathRecord {
            seed,
            times: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity),
            local_time: Vec::with_capacity(capacity),
            weighted_local_time: 0.0,
            min_phi: f64::INFINITY,
            aborted: None,
        };
        record.times.push(0.0);
        record.states.push(model.initial.clone());
        record.local_time.push(0.0);
        Recorder {
            stride,
            steps,
            dt: model.dt,
            record,
        }
    }

    fn push(&mut self, step: usize, z: &[f64], ell: f64) {
        if step % self.stride == 0 || step == self.steps {
            self.record.times.push(step as f64 * self.dt);
            self.record.states.push(Point::from_slice(z));
            self.record.local_time.push(ell);
        }
    }
}

fn constant_parts(model: &ReferenceModel) -> (Point, Matrix) {
    let (b, sigma) = model.coefficients.as_constant().expect("validated as constant");
    (b.clone(), sigma.clone())
}

/// Oblique reflected Brownian motion with drift in a half-space, via the
/// Skorokhod map on the normal coordinate of the free Euler path.
pub fn halfspace_oblique_rbm(model: &ReferenceModel, seed: u64) -> Result<ReflectedPathRecord> {
    model.validate(ReferenceKind::HalfspaceOblique)?;
    Ok(run_halfspace(model, seed))
}

fn run_halfspace(model: &ReferenceModel, seed: u64) -> ReflectedPathRecord {
    let Shape::HalfSpace { axis, offset } = *model.domain.shape() else {
        unreachable!("validated as a half-space");
    };
    let d = model.domain.dimension();
    let (b, sigma) = constant_parts(model);
    let r = model.reflection.as_constant().expect("validated as constant");
    let r_norm = norm(&r);
    let steps = model.steps();
    let dt = model.dt;
    let mut increments = Increments::new(model, seed);
    let mut recorder = Recorder::new(model, seed);

    let mut free = model.initial.clone();
    let mut dw = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut ell: f64 = 0.0;
    let mut min_phi = model.initial[axis] - offset;
    for step in 1..=steps {
        increments.next(&mut dw);
        sigma.mul_vec_into(&dw, &mut noise);
        for i in 0..d {
            free[i] += b[i] * dt + noise[i];
        }
        ell = ell.max(offset - free[axis]);
        for i in 0..d {
            z[i] = free[i] + r[i] * ell;
        }
        min_phi = min_phi.min(z[axis] - offset);
        recorder.push(step, &z, ell);
    }
    recorder.record.weighted_local_time = r_norm * ell;
    recorder.record.min_phi = min_phi;
    recorder.record
}

/// Euler step followed by projection onto the closed domain, with normal
/// reflection.
pub fn projection_scheme(model: &ReferenceModel, seed: u64) -> Result<ReflectedPathRecord> {
    model.validate(ReferenceKind::Projection)?;
    Ok(run_projection(model, seed))
}

fn run_projection(model: &ReferenceModel, seed: u64) -> ReflectedPathRecord {
    let d = model.domain.dimension();
    let tube = model.domain.tube_radius();
    let steps = model.steps();
    let dt = model.dt;
    let mut increments = Increments::new(model, seed);
    let mut recorder = Recorder::new(model, seed);

    let mut x = model.initial.clone();
    let mut b = vec![0.0; d];
    let mut dw = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut ell = 0.0;
    let mut min_phi = f64::INFINITY;
    let mut aborted = None;
    match model.domain.signed_distance(&x) {
        Ok(phi) => min_phi = phi,
        Err(e) => aborted = Some(e.to_string()),
    }
    let mut step = 0;
    while step < steps && aborted.is_none() {
        step += 1;
        increments.next(&mut dw);
        let outcome = (|| -> Result<()> {
            let sigma = model.coefficients.diffusion(&x)?;
            sigma.mul_vec_into(&dw, &mut noise);
            model.coefficients.drift_into(&x, &mut b)?;
            let y: Point = (0..d).map(|i| x[i] + b[i] * dt + noise[i]).collect();
            let phi = model.domain.signed_distance(&y)?;
            if phi < -TOL_BOUNDARY {
                if -phi >= tube {
                    return Err(Error::StepTooCoarse(format!(
                        "step left the closure by {} at t = {}, beyond the tube radius {tube}",
                        -phi,
                        step as f64 * dt
                    )));
                }
                let z = model.domain.project_to_closure(&y)?;
                ell += distance(&z, &y);
                x = z;
            } else {
                x = y;
            }
            min_phi = min_phi.min(model.domain.signed_distance(&x)?);
            Ok(())
        })();
        if let Err(e) = outcome {
            aborted = Some(e.to_string());
            break;
        }
        recorder.push(step, &x, ell);
    }
    if aborted.is_some() {
        // The failing step was not recorded; freeze the last good state.
        for k in step.max(1)..=steps {
            recorder.push(k, &x, ell);
        }
    }
    // Normal reflection has |r| = 1.
    recorder.record.weighted_local_time = ell;
    recorder.record.min_phi = min_phi;
    recorder.record.aborted = aborted;
    recorder.record
}

/// Reference paths sharing one model, ordered by path index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEnsemble {
    pub kind: ReferenceKind,
    pub horizon: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub records: Vec<ReflectedPathRecord>,
    pub failures: usize,
}

impl ReferenceEnsemble {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn completed(&self) -> impl Iterator<Item = &ReflectedPathRecord> {
        self.records.iter().filter(|r| r.aborted.is_none())
    }

    /// One row per path: seed, final state, `ℓ(T)`, `∫|r|dℓ`, `min_phi`,
    /// status.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let d = self.records.first().map_or(0, |r| r.final_state().dim());
        let mut header = vec!["path".to_string(), "seed".to_string()];
        header.extend((1..=d).map(|i| format!("x{i}")));
        header.extend(["local_time", "weighted_local_time", "min_phi", "status"].map(String::from));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![i.to_string(), r.seed.to_string()];
            row.extend(r.final_state().iter().map(|v| v.to_string()));
            row.push(r.final_local_time().to_string());
            row.push(r.weighted_local_time.to_string());
            row.push(r.min_phi.to_string());
            row.push(if r.aborted.is_some() { "step_too_coarse" } else { "ok" }.to_string());
            w.write_record(&row)?;
        }
        Ok(())
    }
}

/// Simulates `count` reference paths; path `i` uses
/// `derive_seed(master_seed, i)`, the same seed as penalized path `i`.
pub fn simulate_reference_batch(
    model: &ReferenceModel,
    kind: ReferenceKind,
    count: usize,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<ReferenceEnsemble> {
    if count == 0 {
        return Err(Error::InvalidModel("path count must be at least 1".into()));
    }
    model.validate(kind)?;
    let records = run_indexed(count, workers, |i| {
        let seed = derive_seed(master_seed, i as u64);
        match kind {
            ReferenceKind::HalfspaceOblique => run_halfspace(model, seed),
            ReferenceKind::Projection => run_projection(model, seed),
        }
    })?;
    let failures = records.iter().filter(|r| r.aborted.is_some()).count();
    Ok(ReferenceEnsemble {
        kind,
        horizon: model.horizon,
        dt: model.dt,
        master_seed,
        records,
        failures,
    })
}
