use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherical_ot::exec::{ExecMode, MonteCarlo};
use spherical_ot::geometry::{ProductPoint, ProductSpec};
use spherical_ot::transport::{
    identity_like, laguerre_masses, solve_entropic, solve_on_samples, solve_semidiscrete, transport_map, CostTable,
    DensitySpec, SampleSet, SemiDiscreteProblem, SolverConfig,
};

fn circle_point(spec: &ProductSpec, angle: f64) -> ProductPoint {
    spec.point(vec![vec![angle.cos(), angle.sin()]]).unwrap()
}

fn uniform_problem(spec: ProductSpec, atoms: Vec<ProductPoint>) -> SemiDiscreteProblem {
    let n = atoms.len();
    SemiDiscreteProblem::new(spec, DensitySpec::Uniform, atoms, vec![1.0 / n as f64; n]).unwrap()
}

#[test]
fn single_atom_gets_all_mass() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = uniform_problem(spec.clone(), vec![spec.sample_uniform(&mut rng)]);
    let est = laguerre_masses(&p, &[0.3], &MonteCarlo::new(10_000, 2));
    assert_eq!(est.masses.len(), 1);
    assert!((est.masses[0] - 1.0).abs() < 1e-12);
}

#[test]
fn antipodal_pair_splits_evenly() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let a = spec.point(vec![vec![0.0, 0.0, 1.0]]).unwrap();
    let p = uniform_problem(spec, vec![a.clone(), a.antipode()]);
    let est = laguerre_masses(&p, &[0.0, 0.0], &MonteCarlo::new(20_000, 3));
    for (m, se) in est.masses.iter().zip(&est.std_err) {
        assert!((m - 0.5).abs() <= 3.0 * se, "{m} +- {se}");
    }
    assert!((est.masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn circle_masses_match_grid_quadrature() {
    let spec = ProductSpec::unit_quadratic(&[1]);
    let angles = [0.3, 1.1, 2.0, 3.5, 5.0];
    let psi = [0.05, -0.1, 0.0, 0.2, -0.15];
    let atoms: Vec<_> = angles.iter().map(|a| circle_point(&spec, *a)).collect();
    let p = uniform_problem(spec, atoms);
    let est = laguerre_masses(&p, &psi, &MonteCarlo::new(50_000, 21));
    // midpoint rule over the angle with the explicit wrapped angular distance
    let grid = 200_000;
    let mut exact = [0.0; 5];
    for k in 0..grid {
        let t = (k as f64 + 0.5) / grid as f64 * std::f64::consts::TAU;
        let score = |j: usize| {
            let mut d = (t - angles[j]).rem_euclid(std::f64::consts::TAU);
            if d > std::f64::consts::PI {
                d = std::f64::consts::TAU - d;
            }
            -0.5 * d * d - psi[j]
        };
        let j = (0..5).max_by(|&a, &b| score(a).total_cmp(&score(b))).unwrap();
        exact[j] += 1.0 / grid as f64;
    }
    for j in 0..5 {
        assert!((est.masses[j] - exact[j]).abs() <= 4.0 * est.std_err[j] + 1e-5, "atom {j}: {} vs {}", est.masses[j], exact[j]);
    }
}

#[test]
fn identity_like_instance_is_solved_at_zero() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let atoms: Vec<_> = (0..20).map(|_| spec.sample_uniform(&mut rng)).collect();
    let p = identity_like(spec, DensitySpec::Uniform, atoms, &MonteCarlo::new(400_000, 6)).unwrap();
    let cfg = SolverConfig {
        tolerance: 1e-2,
        budgets: vec![100_000],
        seed: 7,
        ..Default::default()
    };
    let res = solve_semidiscrete(&p, &cfg).unwrap();
    assert_eq!(res.iterations, 0);
    assert!(res.potential.weights.iter().all(|w| *w == 0.0));
}

#[test]
fn symmetric_circle_pair_has_equal_weights_and_half_circle_map() {
    let spec = ProductSpec::unit_quadratic(&[1]);
    let atoms = vec![circle_point(&spec, 0.0), circle_point(&spec, std::f64::consts::PI)];
    let p = uniform_problem(spec.clone(), atoms);
    let cfg = SolverConfig {
        tolerance: 2e-2,
        budgets: vec![20_000],
        seed: 8,
        ..Default::default()
    };
    let res = solve_semidiscrete(&p, &cfg).unwrap();
    let w = &res.potential.weights;
    assert!((w[0] - w[1]).abs() < 0.05, "{w:?}");
    for k in 0..100 {
        let t = (k as f64 + 0.5) / 100.0 * std::f64::consts::TAU;
        let near = if t.cos() > 0.0 { 0 } else { 1 };
        if t.cos().abs() > 0.05 {
            assert_eq!(transport_map(&res.potential, &circle_point(&spec, t)).index, near);
        }
    }
}

fn sphere_problem(n: usize, seed: u64) -> SemiDiscreteProblem {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let source = DensitySpec::axis_tilt(&spec, 0.3, false);
    let target = DensitySpec::axis_tilt(&spec, 0.3, true);
    SemiDiscreteProblem::sampled(spec, source, target, n, seed).unwrap()
}

#[test]
fn solver_reaches_tolerance_and_dual_ascends() {
    let p = sphere_problem(40, 9);
    let cfg = SolverConfig {
        tolerance: 4e-3,
        budgets: vec![10_000, 30_000],
        seed: 10,
        ..Default::default()
    };
    let res = solve_semidiscrete(&p, &cfg).unwrap();
    assert!(res.max_residual <= cfg.tolerance);
    assert!((res.potential.weights.iter().sum::<f64>()).abs() < 1e-9);
    for stage in [0, 1] {
        let duals: Vec<f64> = res.trace.iter().filter(|r| r.stage == stage).map(|r| r.dual).collect();
        for w in duals.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 || res.trace.iter().any(|r| r.kind == spherical_ot::transport::StepKind::Polish));
        }
    }
    // The map is only feasible up to the residuals, so the dual differs from
    // its cost by exactly the residual-weighted potential.
    let coupling: f64 = res.residuals.iter().zip(&res.potential.weights).map(|(r, w)| r * w).sum();
    assert!((res.dual - res.transport_cost - coupling).abs() < 1e-10, "{} {} {coupling}", res.dual, res.transport_cost);
}

#[test]
fn pushforward_matches_target_within_noise() {
    let p = sphere_problem(30, 11);
    let cfg = SolverConfig {
        tolerance: 3e-3,
        budgets: vec![10_000, 50_000],
        seed: 12,
        ..Default::default()
    };
    let res = solve_semidiscrete(&p, &cfg).unwrap();
    let fresh = laguerre_masses(&p, &res.potential.weights, &MonteCarlo::new(100_000, 999));
    let tv: f64 = 0.5 * fresh.masses.iter().zip(&p.masses).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let sigma: f64 = 0.5 * fresh.std_err.iter().sum::<f64>();
    assert!(tv <= 3.0 * sigma + 0.5 * p.len() as f64 * cfg.tolerance, "tv {tv} sigma {sigma}");
}

#[test]
fn solver_is_bitwise_deterministic_across_modes() {
    let p = sphere_problem(20, 13);
    let mut cfg = SolverConfig {
        tolerance: 1e-2,
        budgets: vec![10_000],
        seed: 14,
        ..Default::default()
    };
    let a = solve_semidiscrete(&p, &cfg).unwrap();
    cfg.exec = ExecMode::Sequential;
    let b = solve_semidiscrete(&p, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn gauge_shift_keeps_assignments() {
    let p = sphere_problem(15, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let psi: Vec<f64> = (0..15).map(|_| rng.gen_range(-0.2..0.2)).collect();
    let shifted: Vec<f64> = psi.iter().map(|v| v + 0.37).collect();
    let samples = SampleSet::draw(&p, &MonteCarlo::new(5_000, 17));
    let table = CostTable::new(&p, &samples, ExecMode::Sequential);
    let a = spherical_ot::transport::assign(&table, &samples, &psi, 1e-9, ExecMode::Sequential);
    let b = spherical_ot::transport::assign(&table, &samples, &shifted, 1e-9, ExecMode::Sequential);
    let ia: Vec<u32> = a.top.iter().map(|t| t.0).collect();
    let ib: Vec<u32> = b.top.iter().map(|t| t.0).collect();
    assert_eq!(ia, ib);
}

#[test]
fn discrete_solution_agrees_with_sinkhorn() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let m = 500;
    let n = 25;
    let points: Vec<_> = (0..m).map(|_| spec.sample_uniform(&mut rng)).collect();
    let atoms: Vec<_> = (0..n).map(|_| spec.sample_uniform(&mut rng)).collect();
    let samples = SampleSet::from_weighted(points.clone(), vec![1.0; m]);
    let p = uniform_problem(spec.clone(), atoms.clone());
    // two samples of slack: coordinate corrections move whole samples
    let cfg = SolverConfig {
        tolerance: 4.1e-3,
        ..Default::default()
    };
    let semi = solve_on_samples(&p, &samples, &cfg).unwrap();
    let cost: Vec<f64> = points.iter().flat_map(|x| atoms.iter().map(|a| spec.cost(x, a)).collect::<Vec<_>>()).collect();
    let eps = 0.02;
    let plan = solve_entropic(&vec![1.0 / m as f64; m], &p.masses, &cost, eps, 200_000).unwrap();
    let gap = (plan.transport_cost - semi.transport_cost).abs();
    assert!(gap <= 2.0 * eps * (n as f64).ln(), "gap {gap}");
    // entropic cost sits above the exact optimum
    assert!(plan.transport_cost >= semi.transport_cost - 1e-9);
}

#[test]
fn entropic_single_row_is_forced() {
    let nu = [0.2, 0.5, 0.3];
    let plan = solve_entropic(&[1.0], &nu, &[1.0, 0.0, 2.0], 0.1, 100).unwrap();
    for j in 0..3 {
        assert!((plan.at(0, j) - nu[j]).abs() < 1e-12);
    }
}

#[test]
fn entropic_identical_supports_concentrate_on_diagonal() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut pts = Vec::new();
    for k in 0..3 {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; 3];
            v[k] = s;
            pts.push(spec.point(vec![v]).unwrap());
        }
    }
    let cost: Vec<f64> = pts.iter().flat_map(|x| pts.iter().map(|y| spec.cost(x, y)).collect::<Vec<_>>()).collect();
    let w = vec![1.0 / 6.0; 6];
    let mut diag = Vec::new();
    let mut costs = Vec::new();
    for eps in [1.0, 0.3, 0.1] {
        let plan = solve_entropic(&w, &w, &cost, eps, 100_000).unwrap();
        diag.push((0..6).map(|i| plan.at(i, i)).sum::<f64>());
        costs.push(plan.transport_cost);
    }
    assert!(diag[2] > 0.99, "{diag:?}");
    assert!(diag[0] < diag[1] && diag[1] < diag[2]);
    assert!(costs[0] > costs[1] && costs[1] > costs[2]);
}

#[test]
fn rejects_small_budgets_and_tight_tolerances() {
    let p = sphere_problem(10, 20);
    let small = SolverConfig {
        budgets: vec![1_000],
        ..Default::default()
    };
    assert!(solve_semidiscrete(&p, &small).is_err());
    let tight = SolverConfig {
        tolerance: 1e-5,
        budgets: vec![10_000],
        ..Default::default()
    };
    assert!(matches!(solve_semidiscrete(&p, &tight), Err(spherical_ot::Error::Precondition { .. })));
}
