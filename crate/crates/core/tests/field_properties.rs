use penreflect::fields::{normalize_reflection, RawReflection, ReflectionField, ReflectionSpec};
use penreflect::geometry::{BandSpec, Domain};
use penreflect::linalg::{add_scaled, distance, dot, norm};
use penreflect::penalty::{
    boundary_floor, interior_sup, spike_integral, PenaltyField, PenaltySchedule, ScheduleFamily, VectorField,
};
use penreflect::Point;
use proptest::prelude::*;

fn reflections() -> Vec<ReflectionField> {
    let hs = Domain::half_space(2, 1, 0.0).unwrap();
    let ball = Domain::ball([0.0, 0.0], 1.0).unwrap();
    let ellipse = Domain::ellipsoid([0.0, 0.0], [2.0, 1.0]).unwrap();
    vec![
        normalize_reflection(ReflectionSpec::Constant { vector: Point::from([1.0, 1.0]) }, &hs).unwrap(),
        normalize_reflection(ReflectionSpec::Constant { vector: Point::from([-3.0, 0.5]) }, &hs).unwrap(),
        ReflectionField::normal(&ball),
        normalize_reflection(ReflectionSpec::RotatedNormal { tangent_weight: 0.5 }, &ball).unwrap(),
        normalize_reflection(ReflectionSpec::RotatedNormal { tangent_weight: -1.2 }, &ellipse).unwrap(),
    ]
}

fn tube_point(field: &ReflectionField, seed: u64) -> Point {
    let domain = field.domain();
    let width = (0.9 * domain.tube_radius()).min(1.0);
    domain.sample_band(BandSpec::two_sided(width).unwrap(), 1, seed).pop().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reflection_is_at_least_unit_length(k in 0usize..5, seed in any::<u64>()) {
        let field = &reflections()[k];
        let x = tube_point(field, seed);
        let proj = field.domain().project(&x).unwrap();
        let r = field.at_boundary(&proj.foot, &proj.normal).unwrap();
        prop_assert!((dot(&r, &proj.normal) - 1.0).abs() < 1e-12);
        prop_assert!(norm(&r) >= 1.0 - 1e-12);
    }

    #[test]
    fn extension_is_constant_along_normals(k in 0usize..5, seed in any::<u64>(), t in -0.9..0.9f64) {
        let field = &reflections()[k];
        let x = tube_point(field, seed);
        let proj = field.domain().project(&x).unwrap();
        let s = t * (0.9 * field.domain().tube_radius()).min(1.0);
        let moved = add_scaled(&proj.foot, s, &proj.normal);
        let a = field.unit_direction_extension(&x).unwrap();
        let b = field.unit_direction_extension(&moved).unwrap();
        prop_assert!(distance(&a, &b) <= 1e-10);
    }

    #[test]
    fn normalization_is_idempotent(k in 0usize..5, seed in any::<u64>()) {
        let field = reflections()[k].clone();
        let inner = field.clone();
        let raw = RawReflection::custom(move |p, n| inner.at_boundary(p, n).unwrap());
        let again = normalize_reflection(raw, field.domain()).unwrap();
        let x = tube_point(&field, seed);
        let proj = field.domain().project(&x).unwrap();
        let a = field.at_boundary(&proj.foot, &proj.normal).unwrap();
        let b = again.at_boundary(&proj.foot, &proj.normal).unwrap();
        prop_assert!(distance(&a, &b) <= 1e-14);
    }

    #[test]
    fn penalty_direction_is_exact(k in 0usize..5, seed in any::<u64>(), n in 1u32..300) {
        let reflection = reflections()[k].clone();
        let field = PenaltyField::new(PenaltySchedule::exponential(n), reflection.clone(), None).unwrap();
        let x = tube_point(&reflection, seed);
        let f = field.eval(&x).unwrap();
        let len = norm(&f);
        prop_assume!(len > 0.0);
        let g = reflection.unit_direction_extension(&x).unwrap();
        prop_assert!(distance(&f.scaled(1.0 / len), &g) <= 1e-12);
    }
}

fn singular_families() -> Vec<ScheduleFamily> {
    vec![
        ScheduleFamily::Exponential,
        ScheduleFamily::ScaledBump {
            h: penreflect::penalty::Bump::NegativeUnitInterval,
            a_exponent: 2.0,
            c_exponent: 1.0,
        },
        ScheduleFamily::ScaledBump {
            h: penreflect::penalty::Bump::UnitInterval,
            a_exponent: 1.5,
            c_exponent: 1.0,
        },
    ]
}

#[test]
fn floor_dominates_the_schedule() {
    for field in reflections() {
        let cutoff = 0.5 * field.domain().tube_radius().min(2.0);
        for family in singular_families() {
            for n in [1, 4, 16, 64] {
                let pf = PenaltyField::new(family.at(n).unwrap(), field.clone(), None).unwrap();
                for s in [-0.9, -0.5, -0.1, 0.0, 0.004, 0.1, 0.5] {
                    let level = s * cutoff;
                    let floor = boundary_floor(&pf, field.domain(), level, 400, 11).unwrap();
                    // Slid samples carry a level error of a few ulps, which
                    // matters at the jumps of indicator bumps.
                    let g = [-1e-12, 0.0, 1e-12]
                        .map(|e| pf.schedule().eval(level + e))
                        .into_iter()
                        .fold(f64::INFINITY, f64::min);
                    assert!(floor >= g - 1e-9 * g.max(1.0), "{family:?} n={n} s={level}: {floor} < {g}");
                }
            }
        }
    }
}

#[test]
fn penalty_vanishes_inside() {
    let ball = Domain::ball([0.0, 0.0], 1.0).unwrap();
    let reflection = ReflectionField::normal(&ball);
    for family in singular_families() {
        let sups: Vec<f64> = [1, 2, 4, 8, 16, 32, 64, 128, 256]
            .iter()
            .map(|&n| {
                let pf = PenaltyField::new(family.at(n).unwrap(), reflection.clone(), Some(0.9)).unwrap();
                interior_sup(&pf, &ball, 0.3, 500, 5).unwrap()
            })
            .collect();
        assert!(*sups.last().unwrap() < 1e-20, "{family:?}: {sups:?}");
        if family == ScheduleFamily::Exponential {
            assert!(sups[0] > 0.1, "{sups:?}");
        }
    }
}

#[test]
fn spike_integral_is_nondecreasing() {
    for family in singular_families() {
        for eps in [0.01, 0.05, 0.1, 0.5] {
            let values: Vec<f64> = (1..=256).map(|n| spike_integral(&family.at(n).unwrap(), eps)).collect();
            assert!(values.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), "{family:?} eps={eps}");
        }
    }
}
