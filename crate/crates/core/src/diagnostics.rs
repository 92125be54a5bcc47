//! Distances, path statistics and convergence tables comparing penalized
//! ensembles with a reference ensemble.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Ensemble;
use crate::linalg::{distance, Point};
use crate::reference::ReferenceEnsemble;

/// Standard deviation of the Kolmogorov distribution: the null standard
/// deviation of `sqrt(na nb / (na + nb)) * KS`.
pub const KOLMOGOROV_SD: f64 = 0.2606;
/// Ensembles with fewer paths get rows flagged unreliable.
pub const MIN_RELIABLE_PATHS: usize = 30;
/// Relative tolerance for "same horizon".
const HORIZON_TOL: f64 = 1e-12;

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    /// Sample mean and `s / sqrt(n)`; the standard error is 0 for `n = 1`.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Estimate { mean, stderr, count: n })
    }

    /// `hits / n` with binomial standard error.
    pub fn proportion(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Estimate {
            mean: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            count: n,
        }
    }

    /// `sqrt(se_a^2 + se_b^2)`
    pub fn pooled_stderr(&self, other: &Estimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(sup)
}

/// Null standard deviation of the KS statistic for sample sizes `na`, `nb`.
pub fn ks_stderr(na: usize, nb: usize) -> f64 {
    KOLMOGOROV_SD * (1.0 / na as f64 + 1.0 / nb as f64).sqrt()
}

/// Two-sample 99% null band `1.63 sqrt(1/na + 1/nb)`.
pub fn ks_null_band_99(na: usize, nb: usize) -> f64 {
    1.63 * (1.0 / na as f64 + 1.0 / nb as f64).sqrt()
}

/// Mean absolute difference of the sorted samples. The larger sample is
/// truncated to its first `min(na, nb)` elements.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let m = a.len().min(b.len());
    let (a, b) = (sorted(&a[..m]), sorted(&b[..m]));
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / m as f64)
}

/// `max |x(t) - x(s)|` over grid pairs with `|t - s| <= delta`.
pub fn modulus_of_continuity(states: &[Point], times: &[f64], delta: f64) -> Result<f64> {
    if states.len() != times.len() {
        return Err(Error::LengthMismatch(states.len(), times.len()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidModel(format!("delta must be positive, got {delta}")));
    }
    let mut sup: f64 = 0.0;
    for i in 0..states.len() {
        for j in i + 1..states.len() {
            if times[j] - times[i] > delta * (1.0 + 1e-12) {
                break;
            }
            sup = sup.max(distance(&states[i], &states[j]));
        }
    }
    Ok(sup)
}

/// True if `v[i+1] <= v[i] + k * sqrt(se_i^2 + se_{i+1}^2)` for all `i`.
pub fn nonincreasing_within(values: &[f64], stderrs: &[f64], k: f64) -> bool {
    values
        .windows(2)
        .zip(stderrs.windows(2))
        .all(|(v, s)| v[1] <= v[0] + k * s[0].hypot(s[1]))
}

/// True if `v[i+1] >= v[i] - k * sqrt(se_i^2 + se_{i+1}^2)` for all `i`.
pub fn nondecreasing_within(values: &[f64], stderrs: &[f64], k: f64) -> bool {
    values
        .windows(2)
        .zip(stderrs.windows(2))
        .all(|(v, s)| v[1] >= v[0] - k * s[0].hypot(s[1]))
}

/// Options for [`convergence_table`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    /// Enlargement for the min-phi probability.
    pub eta: f64,
    /// When set, also compare the laws of `|X(T) - center|`.
    pub radial_center: Option<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u32,
    pub dt: f64,
    pub paths: usize,
    pub failures: usize,
    /// KS distance between `X_n(T)` and `Z(T)`, per coordinate.
    pub ks: Vec<f64>,
    /// Null standard deviation shared by every KS column of the row.
    pub ks_stderr: f64,
    pub ks_radial: Option<f64>,
    /// 1-Wasserstein distance between `l_n(T)` and `∫ |r| dℓ`.
    pub w1_local_time: f64,
    pub min_phi: Estimate,
    pub mean_l: Estimate,
    pub reference_weighted_local_time: Estimate,
    /// Mean of `L_n(T)`, per coordinate.
    pub mean_big_l: Vec<Estimate>,
    /// False when either ensemble has fewer than [`MIN_RELIABLE_PATHS`]
    /// completed paths.
    pub reliable: bool,
}

/// One row per penalized ensemble, ordered by `n`. Aborted paths are left
/// out of the distributional columns and counted in `failures`.
pub fn convergence_table(
    penalized: &[Ensemble],
    reference: &ReferenceEnsemble,
    options: &TableOptions,
) -> Result<Vec<ConvergenceRow>> {
    let ref_final: Vec<&Point> = reference.completed().map(|r| r.final_state()).collect();
    if ref_final.is_empty() {
        return Err(Error::EmptySample);
    }
    let d = ref_final[0].dim();
    let ref_coord: Vec<Vec<f64>> = (0..d).map(|i| ref_final.iter().map(|p| p[i]).collect()).collect();
    let ref_weighted: Vec<f64> = reference.completed().map(|r| r.weighted_local_time).collect();
    let ref_radial: Option<Vec<f64>> = options
        .radial_center
        .as_ref()
        .map(|c| ref_final.iter().map(|p| distance(p, c)).collect());
    let reference_weighted_local_time = Estimate::from_samples(&ref_weighted)?;

    let mut order: Vec<&Ensemble> = penalized.iter().collect();
    order.sort_by_key(|e| e.index);
    let mut rows = Vec::with_capacity(order.len());
    for ens in order {
        if (ens.horizon - reference.horizon).abs() > HORIZON_TOL * reference.horizon {
            return Err(Error::MismatchedHorizons(ens.horizon, reference.horizon));
        }
        let done: Vec<_> = ens.completed().collect();
        if done.is_empty() {
            return Err(Error::EmptySample);
        }
        let finals: Vec<&Point> = done.iter().map(|r| r.final_state()).collect();
        let ks = (0..d)
            .map(|i| {
                let xs: Vec<f64> = finals.iter().map(|p| p[i]).collect();
                ks_distance(&xs, &ref_coord[i])
            })
            .collect::<Result<Vec<_>>>()?;
        let ks_radial = match (&options.radial_center, &ref_radial) {
            (Some(c), Some(rr)) => {
                let xs: Vec<f64> = finals.iter().map(|p| distance(p, c)).collect();
                Some(ks_distance(&xs, rr)?)
            }
            _ => None,
        };
        let ls: Vec<f64> = done.iter().map(|r| r.penalty_length).collect();
        let mean_big_l = (0..d)
            .map(|i| Estimate::from_samples(&done.iter().map(|r| r.penalty_integral[i]).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ConvergenceRow {
            n: ens.index,
            dt: ens.dt,
            paths: ens.len(),
            failures: ens.failures,
            ks,
            ks_stderr: ks_stderr(done.len(), ref_final.len()),
            ks_radial,
            w1_local_time: wasserstein1_1d(&ls, &ref_weighted)?,
            min_phi: crate::integrator::min_phi_statistic(ens, options.eta)?,
            mean_l: Estimate::from_samples(&ls)?,
            reference_weighted_local_time,
            mean_big_l,
            reliable: done.len() >= MIN_RELIABLE_PATHS && ref_final.len() >= MIN_RELIABLE_PATHS,
        });
    }
    Ok(rows)
}

/// Column names of [`write_table_csv`] for dimension `d`.
pub fn table_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = ["n", "dt", "paths", "failures"].map(String::from).to_vec();
    h.extend((1..=d).map(|i| format!("ks_x{i}")));
    h.extend(["ks_stderr", "ks_radial", "w1_local_time", "min_phi_prob", "min_phi_stderr", "mean_l", "mean_l_stderr"].map(String::from));
    h.extend(["ref_weighted_local_time", "ref_weighted_local_time_stderr"].map(String::from));
    for i in 1..=d {
        h.push(format!("mean_big_l{i}"));
        h.push(format!("mean_big_l{i}_stderr"));
    }
    h.push("reliable".into());
    h
}

/// Writes the table as CSV with the fixed header of [`table_header`].
pub fn write_table_csv<W: Write>(rows: &[ConvergenceRow], dimension: usize, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table_header(dimension))?;
    for r in rows {
        let mut f: Vec<String> = vec![r.n.to_string(), r.dt.to_string(), r.paths.to_string(), r.failures.to_string()];
        f.extend(r.ks.iter().map(|v| v.to_string()));
        f.push(r.ks_stderr.to_string());
        f.push(r.ks_radial.map_or(String::new(), |v| v.to_string()));
        f.push(r.w1_local_time.to_string());
        f.push(r.min_phi.mean.to_string());
        f.push(r.min_phi.stderr.to_string());
        f.push(r.mean_l.mean.to_string());
        f.push(r.mean_l.stderr.to_string());
        f.push(r.reference_weighted_local_time.mean.to_string());
        f.push(r.reference_weighted_local_time.stderr.to_string());
        for e in &r.mean_big_l {
            f.push(e.mean.to_string());
            f.push(e.stderr.to_string());
        }
        f.push(r.reliable.to_string());
        w.write_record(&f)?;
    }
    Ok(())
}
