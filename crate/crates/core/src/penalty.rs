//! Penalty schedules, penalty drift fields and their certifiers.
//!
//! A schedule is a family `g_n : R -> [0, inf)` indexed by `n`. The penalty
//! field built from it is `f_n(x) = g_n(phi(x)) r(y(x))` inside a cutoff band
//! around the boundary and zero deeper inside `D`. The certifiers check, on
//! finite grids and samples, the properties that make the penalized SDEs
//! converge to the reflected diffusion: a spike at zero, vanishing away from
//! the boundary, the right direction near the boundary, and a large enough
//! magnitude on level sets of `phi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ReflectionField;
use crate::geometry::{BandSpec, Domain, HALF_SPACE_SAMPLE_EXTENT, TOL_BOUNDARY};
use crate::linalg::{add_scaled, norm, Point};
use crate::quadrature::adaptive_simpson;

/// Relative tolerance of numerically integrated spike integrals.
pub const SPIKE_REL_TOL: f64 = 1e-6;
/// Level-set slides landing further than this from the target level are
/// discarded by [`boundary_floor`].
pub const LEVEL_TOL: f64 = 1e-9;

/// Shape `h` of a scaled-bump schedule `g_n(s) = a_n h(c_n s)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bump {
    /// `1_[0,1]`
    UnitInterval,
    /// `1_[-1,0]`
    NegativeUnitInterval,
}

impl Bump {
    fn eval(self, u: f64) -> f64 {
        let inside = match self {
            Bump::UnitInterval => (0.0..=1.0).contains(&u),
            Bump::NegativeUnitInterval => (-1.0..=0.0).contains(&u),
        };
        if inside {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleFamily {
    /// `a_n h(c_n s)` with `a_n = n^a_exponent`, `c_n = n^c_exponent`.
    ScaledBump {
        h: Bump,
        a_exponent: f64,
        c_exponent: f64,
    },
    /// `n^2 exp(-n s)`
    Exponential,
    /// `n max(-s, 0)`: the scalar profile of `n (Pi(x) - x)`.
    Projection,
    /// `g_n ≡ level`; has no spike and serves as a negative control.
    Constant { level: f64 },
}

impl ScheduleFamily {
    pub fn validate(&self) -> Result<()> {
        match self {
            ScheduleFamily::ScaledBump {
                a_exponent,
                c_exponent,
                ..
            } => {
                if !(c_exponent.is_finite() && *c_exponent > 0.0 && a_exponent.is_finite() && a_exponent > c_exponent) {
                    return Err(Error::InvalidSchedule(format!(
                        "scaled bump needs a_exponent > c_exponent > 0, got {a_exponent}, {c_exponent}"
                    )));
                }
            }
            ScheduleFamily::Constant { level } => {
                if !(level.is_finite() && *level >= 0.0) {
                    return Err(Error::InvalidSchedule(format!(
                        "constant level must be finite and nonnegative, got {level}"
                    )));
                }
            }
            ScheduleFamily::Exponential | ScheduleFamily::Projection => {}
        }
        Ok(())
    }

    pub fn at(&self, n: u32) -> Result<PenaltySchedule> {
        PenaltySchedule::new(self.clone(), n)
    }
}

/// One member `g_n` of a schedule family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub family: ScheduleFamily,
    pub n: u32,
}

impl PenaltySchedule {
    pub fn new(family: ScheduleFamily, n: u32) -> Result<Self> {
        family.validate()?;
        if n == 0 {
            return Err(Error::InvalidSchedule("index n must be at least 1".into()));
        }
        Ok(PenaltySchedule { family, n })
    }

    pub fn exponential(n: u32) -> Self {
        PenaltySchedule {
            family: ScheduleFamily::Exponential,
            n,
        }
    }

    fn scales(&self) -> (f64, f64) {
        let n = self.n as f64;
        match self.family {
            ScheduleFamily::ScaledBump {
                a_exponent,
                c_exponent,
                ..
            } => (n.powf(a_exponent), n.powf(c_exponent)),
            _ => (n, n),
        }
    }

    /// `g_n(s)`
    pub fn eval(&self, s: f64) -> f64 {
        let n = self.n as f64;
        match &self.family {
            ScheduleFamily::ScaledBump { h, .. } => {
                let (a, c) = self.scales();
                a * h.eval(c * s)
            }
            ScheduleFamily::Exponential => n * n * (-n * s).exp(),
            ScheduleFamily::Projection => n * (-s).max(0.0),
            ScheduleFamily::Constant { level } => *level,
        }
    }

    /// Length over which `g_n` varies by an O(1) factor; `None` if flat.
    pub fn length_scale(&self) -> Option<f64> {
        match &self.family {
            ScheduleFamily::ScaledBump { .. } => Some(1.0 / self.scales().1),
            ScheduleFamily::Exponential | ScheduleFamily::Projection => Some(1.0 / self.n as f64),
            ScheduleFamily::Constant { .. } => None,
        }
    }

    /// Points where `g_n` is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        match &self.family {
            ScheduleFamily::ScaledBump { h, .. } => {
                let c = self.scales().1;
                match h {
                    Bump::UnitInterval => vec![0.0, 1.0 / c],
                    Bump::NegativeUnitInterval => vec![-1.0 / c, 0.0],
                }
            }
            ScheduleFamily::Projection => vec![0.0],
            _ => vec![],
        }
    }

    /// `∫ g_n` over `[lo, hi]` by adaptive Simpson, split at breakpoints.
    pub fn integrate_numeric(&self, lo: f64, hi: f64) -> f64 {
        let mut knots = vec![lo];
        knots.extend(self.breakpoints().into_iter().filter(|b| *b > lo && *b < hi));
        knots.push(hi);
        knots
            .windows(2)
            .map(|w| adaptive_simpson(|s| self.eval(s), w[0], w[1], SPIKE_REL_TOL * 1e-2))
            .sum()
    }
}

/// `∫_{-eps}^{eps} g_n(s) ds`, in closed form for every built-in family.
pub fn spike_integral(schedule: &PenaltySchedule, eps: f64) -> f64 {
    let n = schedule.n as f64;
    match &schedule.family {
        ScheduleFamily::ScaledBump { .. } => {
            let (a, c) = schedule.scales();
            a * eps.min(1.0 / c)
        }
        ScheduleFamily::Exponential => n * ((n * eps).exp() - (-n * eps).exp()),
        ScheduleFamily::Projection => 0.5 * n * eps * eps,
        ScheduleFamily::Constant { level } => 2.0 * level * eps,
    }
}

/// A drift field that can be plugged into the integrator or certified.
pub trait VectorField: Send + Sync {
    fn dimension(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Point>;
    /// Spatial scale on which the field varies, used by the stiffness guard.
    fn length_scale(&self) -> Option<f64> {
        None
    }
    /// Penalty index `n` (0 for fields without one).
    fn index(&self) -> u32 {
        0
    }
}

/// `f_n(x) = g_n(phi(x)) r(y(x))` for `phi(x) < cutoff`, zero beyond.
#[derive(Clone, Debug)]
pub struct PenaltyField {
    schedule: PenaltySchedule,
    reflection: ReflectionField,
    cutoff: f64,
}

impl PenaltyField {
    /// `cutoff` defaults to half the tube radius.
    pub fn new(schedule: PenaltySchedule, reflection: ReflectionField, cutoff: Option<f64>) -> Result<Self> {
        schedule.family.validate()?;
        let tube = reflection.domain().tube_radius();
        let cutoff = cutoff.unwrap_or(0.5 * tube);
        if !(cutoff > 0.0 && cutoff <= tube) {
            return Err(Error::InvalidSchedule(format!(
                "tube cutoff must lie in (0, {tube}], got {cutoff}"
            )));
        }
        Ok(PenaltyField {
            schedule,
            reflection,
            cutoff,
        })
    }

    pub fn schedule(&self) -> &PenaltySchedule {
        &self.schedule
    }

    pub fn reflection(&self) -> &ReflectionField {
        &self.reflection
    }

    pub fn domain(&self) -> &Domain {
        self.reflection.domain()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
}

impl VectorField for PenaltyField {
    fn dimension(&self) -> usize {
        self.domain().dimension()
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        let domain = self.domain();
        let phi = domain.signed_distance(x)?;
        if phi >= self.cutoff {
            return Ok(Point::zeros(x.len()));
        }
        let g = self.schedule.eval(phi);
        if g == 0.0 {
            return Ok(Point::zeros(x.len()));
        }
        let proj = domain.project(x)?;
        let r = self.reflection.at_boundary(&proj.foot, &proj.normal)?;
        Ok(r.scaled(g))
    }

    fn length_scale(&self) -> Option<f64> {
        self.schedule.length_scale()
    }

    fn index(&self) -> u32 {
        self.schedule.n
    }
}

/// `n (Pi(x) - x)`: pushes back along the normal, whatever the reflection
/// field is.
#[derive(Clone, Debug)]
pub struct ProjectionPenalty {
    n: u32,
    domain: Domain,
}

impl ProjectionPenalty {
    pub fn new(n: u32, domain: Domain) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSchedule("index n must be at least 1".into()));
        }
        Ok(ProjectionPenalty { n, domain })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
}

impl VectorField for ProjectionPenalty {
    fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        let projected = self.domain.project_to_closure(x)?;
        let n = self.n as f64;
        Ok(projected.iter().zip(x).map(|(p, xi)| n * (p - xi)).collect())
    }

    fn length_scale(&self) -> Option<f64> {
        Some(1.0 / self.n as f64)
    }

    fn index(&self) -> u32 {
        self.n
    }
}

/// The penalty term of a penalized model.
#[derive(Clone, Debug)]
pub enum PenaltyDrift {
    /// No penalty: the free diffusion.
    Off { dimension: usize },
    Field(PenaltyField),
    Projection(ProjectionPenalty),
}

impl VectorField for PenaltyDrift {
    fn dimension(&self) -> usize {
        match self {
            PenaltyDrift::Off { dimension } => *dimension,
            PenaltyDrift::Field(f) => f.dimension(),
            PenaltyDrift::Projection(p) => p.dimension(),
        }
    }

    fn eval(&self, x: &[f64]) -> Result<Point> {
        match self {
            PenaltyDrift::Off { .. } => Ok(Point::zeros(x.len())),
            PenaltyDrift::Field(f) => f.eval(x),
            PenaltyDrift::Projection(p) => p.eval(x),
        }
    }

    fn length_scale(&self) -> Option<f64> {
        match self {
            PenaltyDrift::Off { .. } => None,
            PenaltyDrift::Field(f) => f.length_scale(),
            PenaltyDrift::Projection(p) => p.length_scale(),
        }
    }

    fn index(&self) -> u32 {
        match self {
            PenaltyDrift::Off { .. } => 0,
            PenaltyDrift::Field(f) => f.index(),
            PenaltyDrift::Projection(p) => p.index(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityRow {
    pub n: u32,
    /// `sup g_n` over the positive s-grid.
    pub sup_on_grid: f64,
    /// `∫_{-eps}^{eps} g_n` for each eps of the report.
    pub spike_integrals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub family: ScheduleFamily,
    pub eps_grid: Vec<f64>,
    pub rows: Vec<SingularityRow>,
    /// Spike integrals grow strictly along the n-grid for every eps.
    pub spike: bool,
    /// Sup over the s-grid is nonincreasing after its peak and ends below
    /// it (or is identically zero).
    pub vanishing: bool,
}

impl SingularityReport {
    pub fn passed(&self) -> bool {
        self.spike && self.vanishing
    }
}

/// Evidence, on finite grids, that a schedule family is singular.
pub fn singularity_report(
    family: &ScheduleFamily,
    n_grid: &[u32],
    s_grid: &[f64],
    eps_grid: &[f64],
) -> Result<SingularityReport> {
    family.validate()?;
    if n_grid.is_empty() || s_grid.is_empty() || eps_grid.is_empty() {
        return Err(Error::EmptySample);
    }
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule("n-grid must be strictly increasing".into()));
    }
    if s_grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidSchedule("s-grid must lie in (0, inf)".into()));
    }
    if eps_grid.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidSchedule("eps must be positive".into()));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let g = family.at(n)?;
        let sup_on_grid = s_grid.iter().map(|&s| g.eval(s)).fold(0.0, f64::max);
        let spike_integrals = eps_grid.iter().map(|&e| spike_integral(&g, e)).collect();
        rows.push(SingularityRow {
            n,
            sup_on_grid,
            spike_integrals,
        });
    }
    let spike = rows.len() > 1
        && (0..eps_grid.len()).all(|k| rows.windows(2).all(|w| w[1].spike_integrals[k] > w[0].spike_integrals[k]));
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_on_grid).collect();
    let peak = sups
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > sups[best] { i } else { best });
    let tail_monotone = sups[peak..].windows(2).all(|w| w[1] <= w[0]);
    let last = *sups.last().unwrap();
    let vanishing = tail_monotone && (last == 0.0 || (peak + 1 < sups.len() && last < sups[peak]));
    Ok(SingularityReport {
        family: family.clone(),
        eps_grid: eps_grid.to_vec(),
        rows,
        spike,
        vanishing,
    })
}

/// Result of an emulation check: `defect` is `None` when no sample had
/// `|f_n| >= eps`, which is not the same as a perfect score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulationOutcome {
    pub delta: f64,
    pub eps: f64,
    pub defect: Option<f64>,
    pub considered: usize,
    pub sampled: usize,
}

/// Sampled sup of `|f/|f| - r(y)/|r(y)||` over the two-sided band of width
/// `delta`, restricted to `|f| >= eps`.
pub fn emulation_defect<F: VectorField + ?Sized>(
    field: &F,
    reflection: &ReflectionField,
    delta: f64,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<EmulationOutcome> {
    let domain = reflection.domain();
    if !(delta < domain.tube_radius()) {
        return Err(Error::InvalidDomain(format!(
            "band width {delta} must be below the tube radius {}",
            domain.tube_radius()
        )));
    }
    let points = domain.sample_band(BandSpec::two_sided(delta)?, samples, seed);
    let mut defect: Option<f64> = None;
    let mut considered = 0;
    for x in &points {
        let f = field.eval(x)?;
        let len = norm(&f);
        if len < eps {
            continue;
        }
        considered += 1;
        let target = reflection.unit_direction_extension(x)?;
        let d = f
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a / len - b) * (a / len - b))
            .sum::<f64>()
            .sqrt();
        defect = Some(defect.map_or(d, |m| m.max(d)));
    }
    Ok(EmulationOutcome {
        delta,
        eps,
        defect,
        considered,
        sampled: points.len(),
    })
}

/// Sampled `inf |f(x)|` over the level set `{phi = level}`, or `+inf` when no
/// sample reaches that level.
///
/// Band samples are slid along their normals, `x' = y(x) + level n(y(x))`,
/// and kept only if `phi(x') = level` within [`LEVEL_TOL`].
pub fn boundary_floor<F: VectorField + ?Sized>(
    field: &F,
    domain: &Domain,
    level: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let width = 0.5 * domain.tube_radius().min(HALF_SPACE_SAMPLE_EXTENT);
    let points = domain.sample_band(BandSpec::two_sided(width)?, samples, seed);
    let mut floor = f64::INFINITY;
    for x in &points {
        let proj = domain.project(x)?;
        let slid = add_scaled(&proj.foot, level, &proj.normal);
        if (domain.signed_distance(&slid)? - level).abs() > LEVEL_TOL {
            continue;
        }
        floor = floor.min(norm(&field.eval(&slid)?));
    }
    Ok(floor)
}

/// `max |f|` over samples with `phi >= level` (one-sided interior region).
pub fn interior_sup<F: VectorField + ?Sized>(
    field: &F,
    domain: &Domain,
    level: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let band = BandSpec::one_sided_inner(TOL_BOUNDARY)?;
    let mut sup: f64 = 0.0;
    for x in domain.sample_band(band, samples, seed) {
        if domain.signed_distance(&x)? >= level {
            sup = sup.max(norm(&field.eval(&x)?));
        }
    }
    Ok(sup)
}
