use penreflect::geometry::Domain;
use penreflect::linalg::{add_scaled, distance};
use proptest::prelude::*;

fn domains() -> Vec<Domain> {
    vec![
        Domain::half_space(2, 1, 0.0).unwrap(),
        Domain::ball([0.0, 0.0], 1.0).unwrap(),
        Domain::ball([0.5, -0.5, 1.0], 2.0).unwrap(),
        Domain::ellipsoid([0.0, 0.0], [2.0, 1.0]).unwrap(),
        Domain::ellipsoid([0.0, 0.0, 0.0], [1.5, 1.0, 0.8]).unwrap(),
        Domain::annulus([0.0, 0.0], 0.5, 1.5).unwrap(),
    ]
}

/// Maps a point of the unit cube onto a box around the domain.
fn scale_into(domain: &Domain, u: &[f64]) -> Vec<f64> {
    match domain.bounding_box(0.5) {
        Some((lo, hi)) => u.iter().zip(lo.iter().zip(hi.iter())).map(|(t, (a, b))| a + t * (b - a)).collect(),
        None => u.iter().map(|t| 4.0 * t - 2.0).collect(),
    }
}

fn in_tube(domain: &Domain, x: &[f64]) -> bool {
    domain.signed_distance(x).unwrap().abs() < 0.95 * domain.tube_radius()
}

fn unit_cube(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn signed_distance_is_one_lipschitz(k in 0usize..6, u in unit_cube(3), v in unit_cube(3)) {
        let domain = &domains()[k];
        let d = domain.dimension();
        let x = scale_into(domain, &u[..d]);
        let y = scale_into(domain, &v[..d]);
        let gap = domain.signed_distance(&x).unwrap() - domain.signed_distance(&y).unwrap();
        prop_assert!(gap <= distance(&x, &y) + 1e-9);
    }

    #[test]
    fn projection_is_consistent(k in 0usize..6, u in unit_cube(3)) {
        let domain = &domains()[k];
        let x = scale_into(domain, &u[..domain.dimension()]);
        prop_assume!(in_tube(domain, &x));
        let proj = domain.project(&x).unwrap();
        prop_assert!((distance(&x, &proj.foot) - proj.distance.abs()).abs() <= 1e-8);
        prop_assert!(domain.signed_distance(&proj.foot).unwrap().abs() <= 1e-9);
        // x sits on the normal line through its foot.
        let back = add_scaled(&proj.foot, proj.distance, &proj.normal);
        prop_assert!(distance(&back, &x) <= 1e-8);
    }

    #[test]
    fn normal_is_the_gradient(k in 0usize..6, u in unit_cube(3)) {
        let domain = &domains()[k];
        let x = scale_into(domain, &u[..domain.dimension()]);
        prop_assume!(in_tube(domain, &x));
        let foot = domain.nearest_boundary_point(&x).unwrap();
        let n = domain.inward_normal(&foot).unwrap();
        let h = 1e-4;
        let phi0 = domain.signed_distance(&foot).unwrap();
        let slope = (domain.signed_distance(&add_scaled(&foot, h, &n)).unwrap() - phi0) / h;
        prop_assert!((slope - 1.0).abs() <= 10.0 * h, "slope {}", slope);
    }

    #[test]
    fn closure_projection_is_idempotent(k in 0usize..6, u in unit_cube(3)) {
        let domain = &domains()[k];
        let x = scale_into(domain, &u[..domain.dimension()]);
        prop_assume!(domain.is_convex() || in_tube(domain, &x));
        let p = domain.project_to_closure(&x).unwrap();
        prop_assert_eq!(domain.project_to_closure(&p).unwrap(), p.clone());
        prop_assert!(domain.signed_distance(&p).unwrap() >= -1e-9);
    }
}

/// Nearest of `count` evenly spaced points on the ellipse `(2 cos t, sin t)`.
fn ellipse_brute_force(x: [f64; 2], count: usize) -> ([f64; 2], f64) {
    (0..count)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / count as f64;
            let p = [2.0 * t.cos(), t.sin()];
            (p, distance(&p, &x))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

#[test]
fn ellipsoid_distance_matches_boundary_sampling() {
    let domain = Domain::ellipsoid([0.0, 0.0], [2.0, 1.0]).unwrap();
    for x in [[3.0, 0.0], [1.5, 0.5], [0.3, -0.4], [-2.2, 0.9], [0.0, 1.6]] {
        let (_, dist) = ellipse_brute_force(x, 1_000_000);
        let inside = (x[0] / 2.0).powi(2) + x[1] * x[1] < 1.0;
        let expected = if inside { dist } else { -dist };
        let phi = domain.signed_distance(&x).unwrap();
        assert!((phi - expected).abs() < 1e-8, "{x:?}: {phi} vs {expected}");
    }
    assert!((domain.signed_distance(&[3.0, 0.0]).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn ellipsoid_nearest_point_matches_boundary_sampling() {
    let domain = Domain::ellipsoid([0.0, 0.0], [2.0, 1.0]).unwrap();
    let x = [1.5, 0.5];
    let foot = domain.nearest_boundary_point(&x).unwrap();
    assert!(((foot[0] / 2.0).powi(2) + foot[1] * foot[1] - 1.0).abs() < 1e-10);
    // The sampled minimizer is within half a grid cell of the true foot.
    let (p, _) = ellipse_brute_force(x, 1_000_000);
    assert!(distance(&p, &foot) < 1e-5, "{foot:?} vs {p:?}");
    let (p, d) = ellipse_brute_force(x, 4_000_000);
    assert!((distance(&foot, &x) - d).abs() < 1e-8);
    assert!(distance(&p, &foot) < 3e-6);
}

#[test]
fn ellipsoid_tube_radius_is_the_first_uniqueness_failure() {
    // Walk inward from the vertex of maximal curvature; past the center of
    // curvature the brute-force minimizer jumps off the axis.
    let splits = |depth: f64| ellipse_brute_force([2.0 - depth, 0.0], 200_000).0[1].abs() > 1e-3;
    let (mut lo, mut hi) = (0.1, 1.0);
    assert!(!splits(lo) && splits(hi));
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if splits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let domain = Domain::ellipsoid([0.0, 0.0], [2.0, 1.0]).unwrap();
    assert_eq!(domain.tube_radius(), 0.5);
    assert!((lo - 0.5).abs() < 1e-3, "bisection gave {lo}");
}
