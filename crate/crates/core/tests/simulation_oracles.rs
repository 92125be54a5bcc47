use penreflect::diagnostics::{ks_distance, ks_null_band_99, Estimate};
use penreflect::fields::{normalize_reflection, CoefficientField, ReflectionField, ReflectionSpec};
use penreflect::geometry::Domain;
use penreflect::integrator::{min_phi_statistic, simulate_batch, simulate_path, ModelSpec, StoppingRegion};
use penreflect::linalg::norm;
use penreflect::penalty::{PenaltyDrift, PenaltyField, PenaltySchedule};
use penreflect::reference::{
    halfspace_oblique_rbm, projection_scheme, simulate_reference_batch, ReferenceKind, ReferenceModel,
};
use penreflect::Point;
use proptest::prelude::*;

fn half_space() -> Domain {
    Domain::half_space(2, 1, 0.0).unwrap()
}

fn reflection(vector: [f64; 2]) -> ReflectionField {
    normalize_reflection(ReflectionSpec::Constant { vector: Point::from(vector) }, &half_space()).unwrap()
}

fn penalized(n: u32, r: [f64; 2], initial: [f64; 2], dt: f64) -> ModelSpec {
    let field = PenaltyField::new(PenaltySchedule::exponential(n), reflection(r), None).unwrap();
    ModelSpec::new(
        half_space(),
        CoefficientField::brownian(2),
        PenaltyDrift::Field(field),
        initial,
        1.0,
        dt,
    )
}

fn free(initial: [f64; 2], dt: f64) -> ModelSpec {
    ModelSpec::new(
        half_space(),
        CoefficientField::brownian(2),
        PenaltyDrift::Off { dimension: 2 },
        initial,
        1.0,
        dt,
    )
}

fn std_normal_cdf(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26 is too coarse here; integrate the density.
    let h = 1e-4;
    let steps = ((x + 10.0) / h).ceil() as usize;
    let h = (x + 10.0) / steps as f64;
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    (0..steps)
        .map(|k| {
            let a = -10.0 + k as f64 * h;
            h / 6.0 * (pdf(a) + 4.0 * pdf(a + 0.5 * h) + pdf(a + h))
        })
        .sum()
}

#[test]
fn free_final_state_is_normal() {
    let ens = simulate_batch(&free([0.0, 0.5], 0.01), 100_000, 17, Some(1)).unwrap();
    let t = 1.0;
    for i in 0..2 {
        let xs: Vec<f64> = ens.records.iter().map(|r| r.final_state()[i]).collect();
        let e = Estimate::from_samples(&xs).unwrap();
        let z = [0.0, 0.5][i];
        let var = e.stderr * e.stderr * xs.len() as f64;
        assert!((e.mean - z).abs() <= 4.0 * (t / 1e5f64).sqrt(), "mean {}", e.mean);
        assert!((var - t).abs() <= 0.05 * t, "variance {var}");
    }
}

#[test]
fn penalized_paths_satisfy_accumulator_inequality() {
    let ens = simulate_batch(&penalized(64, [1.0, 1.0], [0.0, 0.1], 1e-3), 200, 3, Some(1)).unwrap();
    for r in &ens.records {
        assert!(r.penalty_length >= norm(&r.penalty_integral) * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn states_freeze_after_exit(seed in any::<u64>(), depth in 0.05..0.3f64) {
        let spec = free([0.0, 0.5], 1e-3)
            .with_stopping(StoppingRegion::Band { depth })
            .with_record_stride(1);
        let rec = simulate_path(&spec, seed).unwrap();
        if let Some(t) = rec.exit_time {
            let k = rec.times.iter().position(|&s| s >= t - 1e-12).unwrap();
            prop_assert!(rec.states[k..].iter().all(|s| s == &rec.states[k]));
        }
    }

    #[test]
    fn length_dominates_integral(seed in any::<u64>(), n in 1u32..512, r0 in -3.0..3.0f64) {
        let rec = simulate_path(&penalized(n, [r0, 1.0], [0.0, 0.2], 1e-3), seed).unwrap();
        prop_assert!(rec.penalty_length >= norm(&rec.penalty_integral) * (1.0 - 1e-12));
    }
}

#[test]
fn min_phi_self_convergence() {
    // The minimum is read on the coarse grid in both runs: a discrete
    // minimum moves by about 0.58 sqrt(dt) when the monitoring grid is
    // refined, which would swamp the scheme error being tested.
    let coarse_dt = 1e-3;
    let grid_min = |refine: usize| {
        let spec = penalized(16, [0.0, 1.0], [0.0, 0.5], coarse_dt / refine as f64).with_record_stride(refine);
        let ens = simulate_batch(&spec, 10_000, 23, Some(1)).unwrap();
        let v: Vec<f64> = ens
            .records
            .iter()
            .map(|r| r.states.iter().map(|x| x[1]).fold(f64::INFINITY, f64::min))
            .collect();
        Estimate::from_samples(&v).unwrap()
    };
    let coarse = grid_min(1);
    let fine = grid_min(10);
    assert!(
        (coarse.mean - fine.mean).abs() <= 3.0 * coarse.pooled_stderr(&fine),
        "{coarse:?} vs {fine:?}"
    );
}

#[test]
fn min_phi_probability_extremes() {
    let stiff = simulate_batch(&penalized(1024, [1.0, 1.0], [0.0, 0.5], 1e-3), 500, 29, Some(1)).unwrap();
    assert!(min_phi_statistic(&stiff, 0.1).unwrap().mean >= 0.99);
    let loose = simulate_batch(&free([0.0, 0.01], 1e-4), 1000, 31, Some(1)).unwrap();
    assert!(min_phi_statistic(&loose, 0.001).unwrap().mean <= 0.05);
}

fn brownian_reference(dt: f64) -> ReferenceModel {
    ReferenceModel::new(
        half_space(),
        CoefficientField::brownian(2),
        reflection([0.0, 1.0]),
        [0.0, 0.5],
        1.0,
        dt,
    )
}

#[test]
fn reference_local_time_matches_closed_form() {
    // l(1) = (max_t B_t - 1/2)^+ for B from 0, so
    // E l(1) = 2 (pdf(1/2) - (1 - Phi(1/2)) / 2) = 0.39560.
    // Monitoring on a grid lowers the maximum by 0.5826 sqrt(dt) wherever
    // it exceeds 1/2, which happens with probability 2 (1 - Phi(1/2)).
    let pdf = (-0.125f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let tail = 1.0 - std_normal_cdf(0.5);
    let exact = 2.0 * (pdf - 0.5 * tail);
    assert!((exact - 0.39560).abs() < 1e-5);
    let dt: f64 = 1e-3;
    let corrected = exact - 0.5826 * dt.sqrt() * 2.0 * tail;

    let model = brownian_reference(dt).with_record_stride(1000);
    let ens = simulate_reference_batch(&model, ReferenceKind::HalfspaceOblique, 40_000, 37, Some(1)).unwrap();
    let l: Vec<f64> = ens.records.iter().map(|r| r.final_local_time()).collect();
    let e = Estimate::from_samples(&l).unwrap();
    assert!((e.mean - corrected).abs() <= 3.0 * e.stderr, "{e:?} vs {corrected}");
}

#[test]
fn reference_local_time_grows_only_near_the_boundary() {
    let dt: f64 = 1e-3;
    let model = brownian_reference(dt).with_record_stride(1);
    let band = 2.0 * dt.sqrt();
    for seed in 0..200 {
        let rec = halfspace_oblique_rbm(&model, seed).unwrap();
        for k in 1..rec.states.len() {
            assert!(rec.states[k][1] >= -1e-9);
            if rec.states[k][1] > band {
                assert_eq!(rec.local_time[k], rec.local_time[k - 1]);
            }
        }
    }
}

#[test]
fn reference_against_itself_is_in_the_null_band() {
    let model = brownian_reference(1e-3).with_record_stride(1000);
    let a = simulate_reference_batch(&model, ReferenceKind::HalfspaceOblique, 4000, 41, Some(1)).unwrap();
    let b = simulate_reference_batch(&model, ReferenceKind::HalfspaceOblique, 4000, 43, Some(1)).unwrap();
    let band = ks_null_band_99(4000, 4000);
    for i in 0..2 {
        let xa: Vec<f64> = a.records.iter().map(|r| r.final_state()[i]).collect();
        let xb: Vec<f64> = b.records.iter().map(|r| r.final_state()[i]).collect();
        assert!(ks_distance(&xa, &xb).unwrap() <= band);
    }
}

#[test]
fn projection_scheme_converges_to_skorokhod_under_refinement() {
    // Same coarse Brownian path, the oblique reference refines it with
    // bridges while the projection scheme stays on the coarse grid.
    let gap = |coarse: f64| {
        let fine = brownian_reference(1e-5).coupled_to(coarse).with_record_stride((coarse / 1e-5) as usize);
        let normal = ReferenceModel {
            reflection: ReflectionField::normal(&half_space()),
            ..brownian_reference(coarse).with_record_stride(1)
        };
        (0..50)
            .map(|seed| {
                let a = halfspace_oblique_rbm(&fine, seed).unwrap();
                let b = projection_scheme(&normal, seed).unwrap();
                a.states
                    .iter()
                    .zip(&b.states)
                    .map(|(x, y)| (x[1] - y[1]).abs())
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 50.0
    };
    let (g1, g2) = (gap(1e-2), gap(1e-3));
    assert!(g2 < g1, "{g1} -> {g2}");
    assert!(g2 < 0.05, "{g2}");
}
