use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherical_ot::cost_conditions::{
    antipodal_domination_gap, convex_dasm_gap, cross_curvature_fd, dasm_gap, dasm_plus_strictness, run_suite, SegmentSpec,
    SuiteConfig,
};
use spherical_ot::geometry::{Covector, Factor, ProductSpec};

fn random_segment(spec: &ProductSpec, rng: &mut ChaCha8Rng) -> SegmentSpec {
    let x = spec.sample_uniform(rng);
    let p0 = spec.sample_domain_covector(&x, 1.0, rng);
    let p1 = spec.sample_domain_covector(&x, 1.0, rng);
    SegmentSpec::new(spec, x, p0, p1).unwrap()
}

fn unit_tangent(spec: &ProductSpec, x: &spherical_ot::geometry::ProductPoint, rng: &mut ChaCha8Rng) -> Covector {
    let p = spec.sample_domain_covector(x, 1.0, rng);
    let n = p.norm();
    p.scaled(1.0 / n)
}

#[test]
fn gaps_vanish_at_endpoints_and_at_the_base() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let seg = random_segment(&spec, &mut rng);
        let y = spec.sample_uniform(&mut rng);
        for t in [0.0, 1.0] {
            assert_abs_diff_eq!(convex_dasm_gap(&spec, &seg, &y, t).unwrap(), 0.0, epsilon = 1e-12);
        }
        // The plain gap is min(0, m_0 - m_1) at t = 0; the larger end is exact.
        let (g0, g1) = (dasm_gap(&spec, &seg, &y, 0.0).unwrap(), dasm_gap(&spec, &seg, &y, 1.0).unwrap());
        assert!(g0 <= 1e-12 && g1 <= 1e-12);
        assert_abs_diff_eq!(g0.max(g1), 0.0, epsilon = 1e-12);
        let t = rng.gen::<f64>();
        assert_abs_diff_eq!(dasm_gap(&spec, &seg, &seg.base, t).unwrap(), 0.0, epsilon = 1e-12);
    }
}

#[test]
fn constant_segment_has_zero_convex_gap() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let x = spec.sample_uniform(&mut rng);
        let p = spec.sample_domain_covector(&x, 1.0, &mut rng);
        let seg = SegmentSpec::new(&spec, x, p.clone(), p).unwrap();
        let y = spec.sample_uniform(&mut rng);
        assert_abs_diff_eq!(convex_dasm_gap(&spec, &seg, &y, rng.gen()).unwrap(), 0.0, epsilon = 1e-12);
    }
}

#[test]
fn sphere_satisfies_both_maximum_principles() {
    for dims in [vec![2usize], vec![2, 1]] {
        let spec = ProductSpec::unit_quadratic(&dims);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst_plain = f64::NEG_INFINITY;
        let mut worst_convex = f64::NEG_INFINITY;
        for _ in 0..10_000 {
            let seg = random_segment(&spec, &mut rng);
            let y = spec.sample_uniform(&mut rng);
            let t = rng.gen::<f64>();
            let plain = dasm_gap(&spec, &seg, &y, t).unwrap();
            let convex = convex_dasm_gap(&spec, &seg, &y, t).unwrap();
            // The convex combination never exceeds the max.
            if convex <= 0.0 {
                assert!(plain <= 1e-12, "{plain}");
            }
            worst_plain = worst_plain.max(plain);
            worst_convex = worst_convex.max(convex);
        }
        assert!(worst_plain <= 1e-8, "{dims:?}: {worst_plain}");
        assert!(worst_convex <= 1e-8, "{dims:?}: {worst_convex}");
    }
}

#[test]
fn circle_heights_match_explicit_angles() {
    // On the unit circle with f = t^2/2, c_exp is rotation by the covector and
    // m_t(y) has a closed form in the wrapped angles.
    let spec = ProductSpec::unit_quadratic(&[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let wrap = |a: f64| {
        let d = a.rem_euclid(2.0 * PI);
        if d > PI {
            2.0 * PI - d
        } else {
            d
        }
    };
    for _ in 0..1000 {
        let a: f64 = rng.gen_range(0.0..2.0 * PI);
        let s0: f64 = rng.gen_range(-PI..PI);
        let s1: f64 = rng.gen_range(-PI..PI);
        let b: f64 = rng.gen_range(0.0..2.0 * PI);
        let t: f64 = rng.gen();
        let x = spec.point(vec![vec![a.cos(), a.sin()]]).unwrap();
        let tangent = |s: f64| Covector {
            blocks: vec![vec![-s * a.sin(), s * a.cos()]],
        };
        let seg = SegmentSpec::new(&spec, x, tangent(s0), tangent(s1)).unwrap();
        let y = spec.point(vec![vec![b.cos(), b.sin()]]).unwrap();
        let st = (1.0 - t) * s0 + t * s1;
        let expected = -0.5 * wrap(b - a - st).powi(2) + 0.5 * st * st;
        assert_abs_diff_eq!(seg.height(&spec, &y, t).unwrap(), expected, epsilon = 1e-10);
    }
}

#[test]
fn strictness_is_positive_away_from_the_base() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::INFINITY;
    let mut counted = 0;
    while counted < 10_000 {
        let seg = random_segment(&spec, &mut rng);
        if spec.distance(&seg.point(&spec, 0.0).unwrap(), &seg.point(&spec, 1.0).unwrap()) < 1e-3 {
            continue;
        }
        let y = spec.sample_uniform(&mut rng);
        if spec.distance(&y, &seg.base) < 0.1 {
            continue;
        }
        let t = rng.gen_range(0.05..0.95);
        worst = worst.min(dasm_plus_strictness(&spec, &seg, &y, t).unwrap());
        counted += 1;
    }
    assert!(worst > 0.0, "{worst}");

    // Geodesic segment through the antipode of the base, y at distance 1.
    let x = spec.point(vec![vec![0.0, 0.0, 1.0]]).unwrap();
    let e = |s: f64| Covector {
        blocks: vec![vec![s, 0.0, 0.0]],
    };
    let seg = SegmentSpec::new(&spec, x.clone(), e(-PI), e(PI)).unwrap();
    let y = spec.point(vec![vec![0.0, 1.0_f64.sin(), 1.0_f64.cos()]]).unwrap();
    assert!(dasm_plus_strictness(&spec, &seg, &y, 0.3).unwrap() > 0.0);
}

#[test]
fn flat_circle_directions_have_zero_cross_curvature() {
    let spec = ProductSpec::unit_quadratic(&[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let x = spec.sample_uniform(&mut rng);
        let xbar = spec.sample_uniform(&mut rng);
        if spec.cut_distance(&x, &xbar) < 0.3 {
            continue;
        }
        let xi = unit_tangent(&spec, &x, &mut rng);
        let eta = unit_tangent(&spec, &x, &mut rng);
        let v = cross_curvature_fd(&spec, &x, &xbar, &xi, &eta, 2e-2).unwrap();
        assert!(v.abs() < 1e-5, "{v}");
    }
}

#[test]
fn sphere_cross_curvature_is_nonnegative() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut tested = 0;
    while tested < 1000 {
        let x = spec.sample_uniform(&mut rng);
        let xbar = spec.sample_uniform(&mut rng);
        if spec.cut_distance(&x, &xbar) < 0.5 {
            continue;
        }
        let xi = unit_tangent(&spec, &x, &mut rng);
        let eta = unit_tangent(&spec, &x, &mut rng);
        let v = cross_curvature_fd(&spec, &x, &xbar, &xi, &eta, 2e-2).unwrap();
        assert!(v >= -1e-5, "{v}");
        tested += 1;
    }
}

#[test]
fn antipodal_domination_examples_and_sign() {
    let f = Factor::quadratic(2, 1.0);
    let s = &f.sphere;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let x = s.sample_uniform(&mut rng);
        let xbar = s.sample_uniform(&mut rng);
        let ybar = s.sample_uniform(&mut rng);
        assert_abs_diff_eq!(antipodal_domination_gap(&f, &x, &xbar, &xbar), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(antipodal_domination_gap(&f, &xbar.antipode(), &xbar, &ybar), 0.0, epsilon = 1e-12);
        worst = worst.max(antipodal_domination_gap(&f, &x, &xbar, &ybar));
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn suite_passes_for_quadratic_cost_and_is_deterministic() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let cfg = SuiteConfig {
        samples: 2_000,
        cross_samples: 200,
        slope_samples: 200,
        seed: 42,
        ..SuiteConfig::default()
    };
    let a = run_suite(&spec, &cfg).unwrap();
    assert!(!a.is_empty());
    for r in &a {
        assert_eq!(r.pass, r.worst <= r.tolerance);
        assert!(r.pass, "{} failed: {}", r.condition, r.worst);
    }
    let b = run_suite(&spec, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}
