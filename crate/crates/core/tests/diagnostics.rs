use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spherical_ot::c_convexity::{GeodesicBall, SectionSpec};
use spherical_ot::diagnostics::{
    alexandrov_constant, alexandrov_upper_check, alexandrov_upper_check_tensor, antipodal_potential, antipodal_section_scaling,
    antipodal_target, circle_section_width, fit_slope, monge_ampere_sandwich, perturbed_target, random_tensor_section,
    regular_component_separation, right_alexandrov_check, right_alexandrov_sweep, sampling_resolution, stay_away_scan,
    AlexandrovConfig, RightAlexandrovConfig, ScalingConfig, SeparationConfig, Sweep,
};
use spherical_ot::exec::{ExecMode, MonteCarlo};
use spherical_ot::geometry::{Factor, ProductSpec};
use spherical_ot::transport::{solve_semidiscrete, DensitySpec, SemiDiscreteProblem, SolverConfig, SolverResult};
use spherical_ot::Error;

fn solved_sphere(n: usize) -> (SemiDiscreteProblem, SolverResult) {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let source = DensitySpec::axis_tilt(&spec, 0.3, false);
    let target = DensitySpec::axis_tilt(&spec, 0.3, true);
    let p = SemiDiscreteProblem::sampled(spec, source, target, n, 5).unwrap();
    let cfg = SolverConfig {
        tolerance: 4e-3,
        budgets: vec![10_000, 30_000],
        seed: 6,
        ..Default::default()
    };
    let res = solve_semidiscrete(&p, &cfg).unwrap();
    (p, res)
}

fn is_precondition(e: &Error, name: &str) -> bool {
    matches!(e, Error::Precondition { diagnostic, .. } if diagnostic == name)
}

#[test]
fn alexandrov_constant_small_dimensions() {
    // |B_1| is 2 on the line and pi in the plane.
    assert_abs_diff_eq!(alexandrov_constant(1), 4.0 * 4.0, epsilon = 1e-12);
    assert_abs_diff_eq!(alexandrov_constant(2), 64.0 * PI * PI, epsilon = 1e-9);
    let b3 = 4.0 * PI / 3.0;
    assert_abs_diff_eq!(alexandrov_constant(3), 12f64.powi(3) * b3 * b3, epsilon = 1e-7);
}

#[test]
fn slope_fit_recovers_lines() {
    let xs = [0.0, 1.0, 2.0, 5.0];
    let ys: Vec<f64> = xs.iter().map(|x| -1.5 * x + 3.0).collect();
    assert_abs_diff_eq!(fit_slope(&xs, &ys), -1.5, epsilon = 1e-12);
}

#[test]
fn antipodal_target_moves_along_a_great_circle() {
    let f = Factor::quadratic(2, 2.0);
    let s = &f.sphere;
    let x0 = s.point(vec![0.0, 0.0, 2.0]).unwrap();
    for eps in [0.01, 0.1, 0.3] {
        let y = antipodal_target(s, &x0, eps);
        assert_abs_diff_eq!(s.distance(&y, &x0.antipode()), 2.0 * PI * eps * 2.0, epsilon = 1e-12);
    }
    let back = antipodal_target(s, &x0, 0.5);
    assert!(s.distance(&back, &x0) < 1e-9);
}

#[test]
fn circle_width_matches_explicit_formula() {
    // Quadratic cost: f'(t) = t, so the two one-sided widths are
    // h / (2 pi eps) and h / (2 pi (1 - eps)).
    let f = Factor::quadratic(1, 1.0);
    for (eps, h) in [(0.05, 1e-3), (0.2, 1e-2), (0.1, 1e-4)] {
        let expected = h / (2.0 * PI * eps) + h / (2.0 * PI * (1.0 - eps));
        assert_abs_diff_eq!(circle_section_width(&f, eps, h), expected, epsilon = 1e-15);
    }
}

#[test]
fn circle_scaling_matches_closed_form() {
    let cfg = ScalingConfig {
        mc: MonteCarlo::new(100_000, 3),
        ..ScalingConfig::default()
    };
    let rec = antipodal_section_scaling(&Factor::quadratic(1, 1.0), &cfg).unwrap();
    let err = rec.closed_form_max_rel_err.unwrap();
    assert!(err < 0.05, "{err}");
    assert_abs_diff_eq!(rec.slope_height, 1.0, epsilon = 0.05);
    let f = Factor::quadratic(1, 1.0);
    let le: Vec<f64> = cfg.eps.iter().map(|e| e.ln()).collect();
    let lw: Vec<f64> = cfg.eps.iter().map(|&e| circle_section_width(&f, e, cfg.sweep_height).ln()).collect();
    assert_abs_diff_eq!(rec.slope_eps, fit_slope(&le, &lw), epsilon = 0.03);
    assert!(rec.rows.iter().filter(|r| r.sweep == Sweep::Regular).all(|r| r.closed_form.is_none()));
}

#[test]
fn sphere_scaling_height_slope_is_the_dimension() {
    let cfg = ScalingConfig {
        mc: MonteCarlo::new(50_000, 4),
        ..ScalingConfig::default()
    };
    let rec = antipodal_section_scaling(&Factor::quadratic(2, 1.0), &cfg).unwrap();
    assert!((rec.slope_height - 2.0).abs() < 0.1, "{}", rec.slope_height);
    assert!(rec.regular_spread < 1.3, "{}", rec.regular_spread);
}

#[test]
fn scaling_rejects_bad_epsilon() {
    let cfg = ScalingConfig {
        eps: vec![0.1, 0.6],
        ..ScalingConfig::default()
    };
    let e = antipodal_section_scaling(&Factor::quadratic(1, 1.0), &cfg).unwrap_err();
    assert!(is_precondition(&e, "antipodal_section_scaling"), "{e}");
}

#[test]
fn right_alexandrov_requires_height_below_delta_squared() {
    let spec = ProductSpec::unit_quadratic(&[2, 2]);
    let (phi, x0) = antipodal_potential(&spec, 2, 0.0).unwrap();
    let cfg = RightAlexandrovConfig {
        mc: MonteCarlo::new(1_000, 1),
        ..Default::default()
    };
    let e = right_alexandrov_check(&phi, &x0, 0.1, 0.1, 0.02, &cfg).unwrap_err();
    assert!(is_precondition(&e, "right_alexandrov_check"), "{e}");
    assert!(e.to_string().contains("delta^2"));
    // The sweep checks the whole grid before sampling anything.
    let e = right_alexandrov_sweep(&phi, &x0, &[0.1], &[0.2, 0.01], &[1e-3], &cfg).unwrap_err();
    assert!(is_precondition(&e, "right_alexandrov_check"), "{e}");
}

#[test]
fn right_alexandrov_rejects_non_antipodal_configurations() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let (phi, _) = antipodal_potential(&spec, 1, 0.0).unwrap();
    let other = spec.point(vec![vec![1.0, 0.0, 0.0]]).unwrap();
    let e = right_alexandrov_check(&phi, &other, 0.1, 0.1, 1e-3, &RightAlexandrovConfig::default()).unwrap_err();
    assert!(is_precondition(&e, "right_alexandrov_check"), "{e}");
}

#[test]
fn right_alexandrov_ratio_is_bounded_on_the_sphere() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let (phi, x0) = antipodal_potential(&spec, 1, 0.0).unwrap();
    let cfg = RightAlexandrovConfig {
        mc: MonteCarlo::new(100_000, 2),
        ..Default::default()
    };
    let sweep = right_alexandrov_sweep(&phi, &x0, &[0.05, 0.1, 0.2], &[0.1], &[1e-4, 1e-3, 1e-2], &cfg).unwrap();
    assert_eq!(sweep.records.len(), 9);
    assert!(sweep.min_ratio > 0.0);
    assert!(sweep.spread < 10.0, "{}", sweep.spread);
    // A single antipodal factor maps onto the whole sphere.
    for r in &sweep.records {
        assert_abs_diff_eq!(r.image_volume, 4.0 * PI, epsilon = 1e-12);
    }
}

#[test]
fn perturbed_target_offsets() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let (phi, x0) = antipodal_potential(&spec, 1, 0.0).unwrap();
    let y = perturbed_target(&phi, &x0, 0.1, 0.2).unwrap();
    let s0 = &spec.factors[0].sphere;
    let s1 = &spec.factors[1].sphere;
    assert_abs_diff_eq!(s0.distance(&y.blocks[0], &x0.blocks[0].antipode()), 2.0 * PI * 0.1, epsilon = 1e-12);
    // With scale 0 the regular factor maps x0 to itself.
    assert_abs_diff_eq!(s1.distance(&y.blocks[1], &x0.blocks[1]), 0.2, epsilon = 1e-12);
}

#[test]
fn separation_of_regular_components() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let (phi, x0) = antipodal_potential(&spec, 1, 0.3).unwrap();
    let slope = perturbed_target(&phi, &x0, 0.1, 0.1).unwrap();
    let section = SectionSpec {
        anchor: x0,
        slope,
        height: 1e-3,
    };
    let cfg = SeparationConfig {
        mc: MonteCarlo::new(20_000, 3),
        points: 64,
        ..Default::default()
    };
    let rec = regular_component_separation(&phi, &section, &[1], 0.1, &cfg).unwrap();
    assert!(rec.pass);
    assert!(rec.min_margin.unwrap() > rec.threshold);
    assert_abs_diff_eq!(rec.threshold, 1e-2 * PI, epsilon = 1e-15);
    let none = regular_component_separation(&phi, &section, &[], 0.1, &cfg).unwrap();
    assert!(none.min_margin.is_none() && none.pass);
    let e = regular_component_separation(&phi, &section, &[1], 0.01, &cfg).unwrap_err();
    assert!(is_precondition(&e, "regular_component_separation"), "{e}");
}

#[test]
fn alexandrov_estimate_holds_on_random_sections() {
    for dims in [vec![2usize], vec![2, 1]] {
        let spec = ProductSpec::unit_quadratic(&dims);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = AlexandrovConfig {
            mc: MonteCarlo::new(5_000, 12),
            ..Default::default()
        };
        for (k, h) in [1e-3, 1e-2, 1e-1].into_iter().enumerate() {
            let (phi, section) = random_tensor_section(&spec, (0.1, 0.6), h, &mut rng).unwrap();
            let run = AlexandrovConfig {
                mc: cfg.mc.reseed(k as u64),
                ..cfg
            };
            let rec = alexandrov_upper_check_tensor(&phi, &section, &run).unwrap();
            assert!(rec.hits > 0);
            assert!(rec.lambda > 0.0 && rec.lambda <= 1.0 + 1e-9, "{}", rec.lambda);
            assert!(rec.pass, "{dims:?} h={h}: {} > {}", rec.lhs, rec.rhs);
        }
    }
}

#[test]
fn alexandrov_check_needs_a_positive_lower_bound() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (phi, section) = random_tensor_section(&spec, (0.2, 0.2), 1e-2, &mut rng).unwrap();
    let e = alexandrov_upper_check(&phi, &section, 0.0, &AlexandrovConfig::default()).unwrap_err();
    assert!(matches!(e, Error::InvalidInput(_)), "{e}");
}

#[test]
fn stay_away_is_positive_and_execution_independent() {
    let (p, res) = solved_sphere(30);
    let mc = MonteCarlo::new(5_000, 7);
    let par = stay_away_scan(&res, &p, &mc.with_exec(ExecMode::Parallel)).unwrap();
    let seq = stay_away_scan(&res, &p, &mc.with_exec(ExecMode::Sequential)).unwrap();
    assert_eq!(par.values, seq.values);
    assert_eq!(par.values.len(), 5_000);
    assert_abs_diff_eq!(par.injectivity, PI, epsilon = 1e-15);
    assert!(par.relative_minimum() > 0.01, "{}", par.relative_minimum());
    let mn = par.values.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(mn, par.minimum);
}

#[test]
fn stay_away_refuses_unconverged_solutions() {
    let (p, mut res) = solved_sphere(30);
    res.max_residual = 10.0 * res.tolerance;
    let e = stay_away_scan(&res, &p, &MonteCarlo::new(100, 1)).unwrap_err();
    assert!(is_precondition(&e, "stay_away_scan"), "{e}");
}

#[test]
fn sandwich_ratios_stay_between_density_bounds() {
    let (p, res) = solved_sphere(30);
    let radius = 3.5 * sampling_resolution(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let probes: Vec<GeodesicBall> = (0..4)
        .map(|_| GeodesicBall {
            centre: p.spec.sample_uniform(&mut rng),
            radius,
        })
        .collect();
    let recs = monge_ampere_sandwich(&res, &p, &probes, &MonteCarlo::new(20_000, 9)).unwrap();
    assert_eq!(recs.len(), 4);
    let lambda = p.lambda();
    for r in &recs {
        assert!(r.ratio > 0.5 * lambda && r.ratio < 2.0 / lambda, "{} vs {lambda}", r.ratio);
        assert!(r.atoms_hit > 0);
    }
    let tiny = vec![GeodesicBall {
        centre: probes[0].centre.clone(),
        radius: 0.1 * radius,
    }];
    let e = monge_ampere_sandwich(&res, &p, &tiny, &MonteCarlo::new(100, 1)).unwrap_err();
    assert!(is_precondition(&e, "monge_ampere_sandwich"), "{e}");
}
