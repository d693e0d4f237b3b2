//! End-to-end acceptance run: one line per criterion.
//!
//! Exits 0 even when a criterion is red so that the rest of the test suite
//! still runs; set `ACCEPTANCE_STRICT=1` to turn red criteria into a failing
//! exit code.

use std::fs;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use spherical_ot::c_convexity::{midpoint_convexity_gap, DiscretePotential};
use spherical_ot::convex_tools::{hull_volume, john_ellipsoid, slice_inequality_residual, PointCloudBody};
use spherical_ot::cost_conditions::{run_suite, SuiteConfig};
use spherical_ot::diagnostics::{
    alexandrov_upper_check_tensor, antipodal_potential, antipodal_section_scaling, random_tensor_section, right_alexandrov_sweep,
    stay_away_scan, AlexandrovConfig, RightAlexandrovConfig, ScalingConfig,
};
use spherical_ot::exec::MonteCarlo;
use spherical_ot::geometry::{Factor, ProductSpec, QChart};
use spherical_ot::transport::{
    laguerre_masses, solve_entropic, solve_on_samples, solve_semidiscrete, DensitySpec, SampleSet, SemiDiscreteProblem,
    SolverConfig, SolverResult,
};
use spherical_ot::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn configurations() -> Vec<(&'static str, ProductSpec)> {
    vec![
        ("S2", ProductSpec::unit_quadratic(&[2])),
        ("S1xS2", ProductSpec::unit_quadratic(&[1, 2])),
        (
            "S2xS2(r=2)",
            ProductSpec::new(vec![Factor::quadratic(2, 1.0), Factor::quadratic(2, 2.0)]).unwrap(),
        ),
    ]
}

fn c1_round_trip() -> Result<Outcome> {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for (k, (_, spec)) in configurations().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        for _ in 0..10_000 {
            let x = spec.sample_uniform(&mut rng);
            let y = spec.sample_uniform(&mut rng);
            let Ok(p) = spec.cost_grad_x(&x, &y) else {
                skipped += 1;
                continue;
            };
            worst = worst.max(spec.distance(&spec.c_exp(&x, &p)?, &y));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        worst <= 1e-9 && secs < 10.0,
        format!("c_exp(cost_grad_x) round trip: max error {worst:.2e} on 3 x 10^4 pairs ({skipped} on the cut locus), {secs:.2} s"),
    ))
}

fn c2_conditions() -> Result<Outcome> {
    let start = Instant::now();
    let mut all = true;
    let mut parts = Vec::new();
    for (k, (name, spec)) in configurations().into_iter().enumerate() {
        let cfg = SuiteConfig {
            seed: 200 + k as u64,
            ..SuiteConfig::default()
        };
        let reports = run_suite(&spec, &cfg)?;
        let find = |c: &str| reports.iter().find(|r| r.condition == c).map(|r| r.worst).unwrap_or(f64::NAN);
        let ok = reports.iter().all(|r| r.pass);
        all &= ok;
        parts.push(format!(
            "{name}: convex_dasm {:+.1e}, dasm {:+.1e}, cross {:+.1e}",
            find("convex_dasm"),
            find("dasm"),
            -find("cross_curvature_sign")
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(all && secs < 60.0, format!("condition suite: {}; {secs:.1} s", parts.join("; "))))
}

fn c3_convexification() -> Result<Outcome> {
    let mut worst = f64::NEG_INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let specs = configurations();
    for k in 0..20 {
        let spec = &specs[k % specs.len()].1;
        let n = rng.gen_range(5..=50);
        let atoms = (0..n).map(|_| spec.sample_uniform(&mut rng)).collect();
        let weights = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let phi = DiscretePotential::new(spec.clone(), atoms, weights)?;
        let chart = QChart::new(spec.sample_uniform(&mut rng));
        let mut pairs = 0;
        while pairs < 10_000 {
            let x1 = spec.sample_uniform(&mut rng);
            let x2 = spec.sample_uniform(&mut rng);
            let (Ok(q1), Ok(q2)) = (chart.to_q(spec, &x1), chart.to_q(spec, &x2)) else { continue };
            if chart.domain_fill(spec, &q1) > 0.98 || chart.domain_fill(spec, &q2) > 0.98 {
                continue;
            }
            worst = worst.max(midpoint_convexity_gap(&phi, &chart, &q1, &q2)?);
            pairs += 1;
        }
    }
    Ok(outcome(
        worst <= 1e-8,
        format!("q-chart midpoint convexity: worst gap {worst:+.2e} over 20 potentials x 10^4 pairs"),
    ))
}

fn tilted_problem(spec: &ProductSpec, n: usize, seed: u64) -> Result<SemiDiscreteProblem> {
    let source = DensitySpec::axis_tilt(spec, 0.3, false);
    let target = DensitySpec::axis_tilt(spec, 0.3, true);
    SemiDiscreteProblem::sampled(spec.clone(), source, target, n, seed)
}

fn c4_solver() -> Result<Outcome> {
    let mut all = true;
    let mut parts = Vec::new();
    for (k, dims) in [vec![2usize], vec![2, 1]].into_iter().enumerate() {
        let start = Instant::now();
        let spec = ProductSpec::unit_quadratic(&dims);
        let p = tilted_problem(&spec, 200, 400 + k as u64)?;
        let cfg = SolverConfig {
            tolerance: 1e-3,
            budgets: vec![10_000, 30_000, 100_000, 300_000],
            seed: 410 + k as u64,
            ..SolverConfig::default()
        };
        let res = solve_semidiscrete(&p, &cfg)?;
        // Fresh samples, independent of the solver's own estimator.
        let fresh = laguerre_masses(&p, &res.potential.weights, &MonteCarlo::new(1_000_000, 420 + k as u64));
        let indep = fresh.masses.iter().zip(&p.masses).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let se = fresh.std_err.iter().copied().fold(0.0, f64::max);
        let secs = start.elapsed().as_secs_f64();
        let ok = res.max_residual <= 1e-3 && indep <= 1e-3 + 3.0 * se && secs < 300.0;
        all &= ok;
        parts.push(format!(
            "{}: residual {:.2e} (fresh 10^6 samples {indep:.2e} +- {se:.1e}), {secs:.1} s",
            spec.label(),
            res.max_residual
        ));
    }
    // Matched discrete instance: the semi-discrete solver on a fixed uniform
    // sample against Sinkhorn on the same points.
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(430);
    let (m, n) = (2_000, 200);
    let points: Vec<_> = (0..m).map(|_| spec.sample_uniform(&mut rng)).collect();
    let atoms: Vec<_> = (0..n).map(|_| spec.sample_uniform(&mut rng)).collect();
    let p = SemiDiscreteProblem::new(spec.clone(), DensitySpec::Uniform, atoms.clone(), vec![1.0 / n as f64; n])?;
    let samples = SampleSet::from_weighted(points.clone(), vec![1.0; m]);
    let cfg = SolverConfig {
        tolerance: 2.1 / m as f64,
        ..SolverConfig::default()
    };
    let semi = solve_on_samples(&p, &samples, &cfg)?;
    let cost: Vec<f64> = points.iter().flat_map(|x| atoms.iter().map(|a| spec.cost(x, a)).collect::<Vec<_>>()).collect();
    let eps = 0.02;
    let plan = solve_entropic(&vec![1.0 / m as f64; m], &p.masses, &cost, eps, 200_000)?;
    let gap = (plan.transport_cost - semi.transport_cost).abs();
    let bound = 2.0 * eps * (n as f64).ln();
    all &= gap <= bound;
    parts.push(format!("Sinkhorn cost gap {gap:.2e} <= {bound:.2e}"));
    Ok(outcome(all, format!("solver: {}", parts.join("; "))))
}

fn solve_instance(spec: &ProductSpec, seed: u64) -> Result<(SemiDiscreteProblem, SolverResult)> {
    let p = tilted_problem(spec, 100, seed)?;
    let cfg = SolverConfig {
        tolerance: 2e-3,
        budgets: vec![10_000, 30_000, 100_000],
        seed: seed + 1,
        ..SolverConfig::default()
    };
    let res = solve_semidiscrete(&p, &cfg)?;
    Ok((p, res))
}

fn c5_stay_away() -> Result<Outcome> {
    let mut all = true;
    let mut parts = Vec::new();
    for dims in [vec![2usize], vec![2, 1]] {
        let spec = ProductSpec::unit_quadratic(&dims);
        let mut lo = f64::INFINITY;
        let mut change: f64 = 0.0;
        for s in 0..5u64 {
            let (p, res) = solve_instance(&spec, 500 + 10 * s)?;
            let a = stay_away_scan(&res, &p, &MonteCarlo::new(10_000, 510 + s))?;
            let b = stay_away_scan(&res, &p, &MonteCarlo::new(20_000, 520 + s))?;
            lo = lo.min(a.relative_minimum());
            change = change.max((b.minimum - a.minimum).abs() / a.minimum);
            all &= a.minimum > 0.01 * a.injectivity && (b.minimum - a.minimum).abs() < 0.25 * a.minimum;
        }
        parts.push(format!(
            "{}: min/(pi r) {lo:.3}, budget-doubling change {:.1}%",
            spec.label(),
            100.0 * change
        ));
    }
    Ok(outcome(all, format!("stay-away over 5 seeds: {}", parts.join("; "))))
}

fn c6_alexandrov() -> Result<Outcome> {
    let heights = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let mut checked = 0;
    let mut passed = 0;
    let mut excluded = 0;
    let mut worst: f64 = 0.0;
    for (k, (_, spec)) in configurations().into_iter().enumerate() {
        let base = MonteCarlo::new(20_000, 600 + k as u64);
        for s in 0..50u64 {
            let mut rng = spherical_ot::exec::shard_rng(base.seed, s);
            for (j, &h) in heights.iter().enumerate() {
                let (phi, section) = random_tensor_section(&spec, (0.1, 0.6), h, &mut rng)?;
                let cfg = AlexandrovConfig {
                    mc: base.reseed(s * heights.len() as u64 + j as u64),
                    ..AlexandrovConfig::default()
                };
                match alexandrov_upper_check_tensor(&phi, &section, &cfg) {
                    Ok(rec) => {
                        checked += 1;
                        passed += rec.pass as usize;
                        worst = worst.max(rec.lhs / rec.rhs);
                    }
                    Err(spherical_ot::Error::SectionEscapesChart(_)) => excluded += 1,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(outcome(
        checked > 0 && passed == checked,
        format!("Alexandrov upper bound: {passed}/{checked} pass over 3 configurations x 50 sections x 5 heights ({excluded} outside the chart), worst lhs/rhs {worst:.3}"),
    ))
}

fn c7_scaling() -> Result<Outcome> {
    let cfg = ScalingConfig {
        mc: MonteCarlo::new(200_000, 700),
        ..ScalingConfig::default()
    };
    let circle = antipodal_section_scaling(&Factor::quadratic(1, 1.0), &cfg)?;
    let sphere = antipodal_section_scaling(&Factor::quadratic(2, 1.0), &ScalingConfig { mc: cfg.mc.reseed(1), ..cfg.clone() })?;
    let cf = circle.closed_form_max_rel_err.unwrap_or(f64::INFINITY);
    let ok_cf = cf <= 0.05;
    let ok_h = (sphere.slope_height - 2.0).abs() <= 0.05 * 2.0;
    let ok_e = (sphere.slope_eps + 1.0).abs() <= 0.15;
    Ok(outcome(
        ok_cf && ok_h && ok_e,
        format!(
            "antipodal scaling: S1 closed form rel err {:.2}% [{}]; S2 h-slope {:.3} [{}]; S2 eps-slope {:.3} vs -1 +- 0.15 [{}]",
            100.0 * cf,
            tag(ok_cf),
            sphere.slope_height,
            tag(ok_h),
            sphere.slope_eps,
            tag(ok_e)
        ),
    ))
}

fn c8_right_alexandrov() -> Result<Outcome> {
    let eps = [0.05, 0.1, 0.2];
    let deltas = [0.1, 0.2];
    let heights = [1e-4, 1e-3, 1e-2];
    let cfg = RightAlexandrovConfig {
        mc: MonteCarlo::new(1_000_000, 800),
        ..RightAlexandrovConfig::default()
    };
    let mut parts = Vec::new();
    let mut all = true;
    for (k, (dims, a0, gate)) in [(vec![2usize], 1, true), (vec![2, 2], 2, true), (vec![2, 2], 1, false)].into_iter().enumerate() {
        let spec = ProductSpec::unit_quadratic(&dims);
        let (phi, x0) = antipodal_potential(&spec, a0, 0.0)?;
        let run = RightAlexandrovConfig {
            mc: cfg.mc.reseed(k as u64),
            ..cfg
        };
        let sweep = right_alexandrov_sweep(&phi, &x0, &eps, &deltas, &heights, &run)?;
        if gate {
            all &= sweep.spread < 10.0;
        }
        parts.push(format!(
            "{} a0={a0}: spread {:.2}{}",
            spec.label(),
            sweep.spread,
            if gate { "" } else { " (info)" }
        ));
    }
    Ok(outcome(all, format!("right-Alexandrov ratio over eps x delta x h with h <= delta^2: {}", parts.join("; "))))
}

fn c9_convex_tools() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    // Largest relative excess of the containment ratio over d.
    let mut excess = f64::NEG_INFINITY;
    for d in 2..=4 {
        for _ in 0..100 {
            let n = rng.gen_range(d + 1..d + 15);
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
            let j = john_ellipsoid(&PointCloudBody::new(pts)?)?;
            excess = excess.max(j.ratio() / d as f64 - 1.0);
        }
    }
    let mut slice_err: f64 = 0.0;
    for (n1, n2) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
        let d = n1 + n2;
        let sides: Vec<f64> = (0..d).map(|k| 0.5 + k as f64 * 0.7).collect();
        let cube: Vec<Vec<f64>> = (0..1usize << d)
            .map(|mask| (0..d).map(|k| if mask >> k & 1 == 1 { sides[k] } else { 0.0 }).collect())
            .collect();
        let slice: Vec<f64> = sides[n1..].iter().map(|s| 0.3 * s).collect();
        slice_err = slice_err.max((slice_inequality_residual(&PointCloudBody::new(cube)?, &slice)? - 1.0).abs());
    }
    let mut simplex_err: f64 = 0.0;
    for d in 2..=6 {
        let mut pts = vec![vec![0.0; d]];
        for k in 0..d {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            pts.push(e);
        }
        let fact: f64 = (1..=d).map(|k| k as f64).product();
        simplex_err = simplex_err.max((hull_volume(&PointCloudBody::new(pts)?)?.volume - 1.0 / fact).abs());
    }
    Ok(outcome(
        excess <= 1e-6 && slice_err <= 1e-12 && simplex_err <= 1e-12,
        format!(
            "convex tools: John ratio/d - 1 at most {excess:+.1e} over 300 polytopes; box slice residual error {slice_err:.1e}; simplex volume error {simplex_err:.1e}"
        ),
    ))
}

fn c10_determinism() -> Result<Outcome> {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/s2.toml");
    let tmp = tempfile::TempDir::new()?;
    let mut reports = Vec::new();
    let mut codes = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("run{k}"));
        let status = Command::new(env!("CARGO_BIN_EXE_spherical-ot"))
            .args(["all", config, "--out", out.to_str().unwrap()])
            .output()?;
        codes.push(status.status.code());
        reports.push(fs::read(out.join("report.json"))?);
    }
    let same = reports[0] == reports[1];
    Ok(outcome(
        same,
        format!(
            "`all` on configs/s2.toml twice: report.json {} ({} bytes, exit codes {:?})",
            if same { "byte-identical" } else { "differs" },
            reports[0].len(),
            codes
        ),
    ))
}

fn tag(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "red"
    }
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("C1", c1_round_trip),
        ("C2", c2_conditions),
        ("C3", c3_convexification),
        ("C4", c4_solver),
        ("C5", c5_stay_away),
        ("C6", c6_alexandrov),
        ("C7", c7_scaling),
        ("C8", c8_right_alexandrov),
        ("C9", c9_convex_tools),
        ("C10", c10_determinism),
    ];
    let mut red = Vec::new();
    for (id, run) in criteria {
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!("{id:<4} {} {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            red.push(id);
        }
    }
    println!("acceptance: {}/10 criteria pass{}", 10 - red.len(), if red.is_empty() { String::new() } else { format!(", red: {}", red.join(" ")) });
    if !red.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
