use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spherical_ot::c_convexity::{
    c_subdifferential, c_transform, contact_set_sample, duality_defect, localized_image_membership, midpoint_convexity_gap,
    section_sample, slice_lemma_check, subdifferential_defect, CConvex, DiscretePotential, FactorPotential, GeodesicBall,
    SectionSpec, TensorPotential, TransformConfig,
};
use spherical_ot::exec::MonteCarlo;
use spherical_ot::geometry::{ProductPoint, ProductSpec, QChart};

fn random_potential(spec: &ProductSpec, n: usize, rng: &mut ChaCha8Rng) -> DiscretePotential {
    let atoms = (0..n).map(|_| spec.sample_uniform(rng)).collect();
    let weights = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
    DiscretePotential::new(spec.clone(), atoms, weights).unwrap()
}

#[test]
fn evaluate_matches_brute_force_and_detects_ties() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let phi = random_potential(&spec, 12, &mut rng);
    for _ in 0..1000 {
        let x = spec.sample_uniform(&mut rng);
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for j in 0..12 {
            let v = -spec.cost(&x, &phi.atoms[j]) - phi.weights[j];
            if v > best {
                best = v;
                arg = j;
            }
        }
        let (v, act) = phi.evaluate(&x);
        assert_eq!(v, best);
        assert_eq!(act, vec![arg]);
        assert_eq!(phi.value(&x), best);
    }

    let s2 = ProductSpec::unit_quadratic(&[2]);
    let x = s2.point(vec![vec![0.0, 0.0, 1.0]]).unwrap();
    let a = s2.point(vec![vec![0.6, 0.0, 0.8]]).unwrap();
    let b = s2.point(vec![vec![-0.6, 0.0, 0.8]]).unwrap();
    let pair = DiscretePotential::new(s2.clone(), vec![a.clone(), b], vec![0.0, 0.0]).unwrap();
    assert_eq!(pair.evaluate(&x).1, vec![0, 1]);
    let single = DiscretePotential::new(s2.clone(), vec![a.clone()], vec![0.0]).unwrap();
    let (v, act) = single.evaluate(&x);
    assert_abs_diff_eq!(v, -s2.cost(&x, &a), epsilon = 1e-15);
    assert_eq!(act, vec![0]);
}

#[test]
fn c_transform_single_atom_is_zero_at_the_atom() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = spec.sample_uniform(&mut rng);
    let phi = DiscretePotential::new(spec, vec![a.clone()], vec![0.0]).unwrap();
    let m = c_transform(&phi, &[a], &TransformConfig::default()).unwrap();
    assert_abs_diff_eq!(m[0].value, 0.0, epsilon = 1e-10);
}

#[test]
fn c_transform_is_bounded_by_weights_and_respects_duality() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = random_potential(&spec, 8, &mut rng);
    let cfg = TransformConfig {
        seed: 4,
        ..TransformConfig::default()
    };
    let bars = c_transform(&phi, &phi.atoms, &cfg).unwrap();
    for (j, m) in bars.iter().enumerate() {
        // -c(x, y_j) - phi(x) <= psi_j everywhere, with equality on the cell of j.
        assert!(m.value <= phi.weights[j] + 1e-10, "atom {j}: {} > {}", m.value, phi.weights[j]);
        assert_abs_diff_eq!(duality_defect(&phi, m.value, &m.point, &phi.atoms[j]), 0.0, epsilon = 1e-8);
        let owns_cell = (0..2000).any(|_| phi.evaluate(&spec.sample_uniform(&mut rng)).1 == vec![j]);
        if owns_cell {
            assert_abs_diff_eq!(m.value, phi.weights[j], epsilon = 1e-8);
        }
    }
    let probes: Vec<ProductPoint> = (0..10).map(|_| spec.sample_uniform(&mut rng)).collect();
    let bars = c_transform(&phi, &probes, &cfg).unwrap();
    for (xb, m) in probes.iter().zip(&bars) {
        for _ in 0..200 {
            let x = spec.sample_uniform(&mut rng);
            assert!(duality_defect(&phi, m.value, &x, xb) >= -1e-8);
        }
    }
}

#[test]
fn weights_are_tight_exactly_for_atoms_that_own_a_cell() {
    // An atom whose weight is so large that it is never active has a
    // transform strictly below psi_j.
    let spec = ProductSpec::unit_quadratic(&[2]);
    let a = spec.point(vec![vec![0.0, 0.0, 1.0]]).unwrap();
    let b = spec.point(vec![vec![0.0, 0.0, -1.0]]).unwrap();
    let c = spec.point(vec![vec![1.0, 0.0, 0.0]]).unwrap();
    let phi = DiscretePotential::new(spec, vec![a, b, c], vec![0.0, 0.0, 10.0]).unwrap();
    let bars = c_transform(&phi, &phi.atoms, &TransformConfig::default()).unwrap();
    assert_abs_diff_eq!(bars[0].value, 0.0, epsilon = 1e-8);
    assert_abs_diff_eq!(bars[1].value, 0.0, epsilon = 1e-8);
    assert!(bars[2].value < 10.0 - 1.0);
}

#[test]
fn subdifferential_of_single_active_atom_is_that_atom() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let phi = random_potential(&spec, 6, &mut rng);
    let x = spec.sample_uniform(&mut rng);
    let (_, act) = phi.evaluate(&x);
    let sd = c_subdifferential(&phi, &x, 16, &mut rng).unwrap();
    assert_eq!(sd.targets, vec![phi.atoms[act[0]].clone()]);
    assert!(sd.hull.is_empty());
    for _ in 0..1000 {
        let y = spec.sample_uniform(&mut rng);
        assert!(subdifferential_defect(&phi, &x, &sd.targets[0], &y) >= -1e-12);
    }
}

#[test]
fn hull_images_of_a_tie_are_in_the_subdifferential() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = spec.point(vec![vec![0.0, 0.0, 1.0]]).unwrap();
    let atoms = vec![
        spec.point(vec![vec![0.6, 0.0, 0.8]]).unwrap(),
        spec.point(vec![vec![-0.3, 0.3 * 3f64.sqrt(), 0.8]]).unwrap(),
        spec.point(vec![vec![-0.3, -0.3 * 3f64.sqrt(), 0.8]]).unwrap(),
    ];
    let phi = DiscretePotential::new(spec.clone(), atoms, vec![0.0; 3]).unwrap();
    let sd = c_subdifferential(&phi, &x, 32, &mut rng).unwrap();
    assert_eq!(sd.targets.len(), 3);
    assert_eq!(sd.hull.len(), 32);
    for z in &sd.hull {
        for _ in 0..1000 {
            let y = spec.sample_uniform(&mut rng);
            assert!(subdifferential_defect(&phi, &x, z, &y) >= -1e-8);
        }
        // Reciprocity: x lies in the contact set of each hull image.
        let phibar = -phi.value(&x) - spec.cost(&x, z);
        assert_abs_diff_eq!(duality_defect(&phi, phibar, &x, z), 0.0, epsilon = 1e-14);
    }
}

#[test]
fn localized_image_contains_the_subdifferential() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let phi = random_potential(&spec, 10, &mut rng);
    for _ in 0..20 {
        let x0 = spec.sample_uniform(&mut rng);
        let (_, act) = phi.evaluate(&x0);
        let ball = GeodesicBall {
            centre: x0.clone(),
            radius: 0.3,
        };
        assert!(localized_image_membership(&phi, &ball, &x0, &phi.atoms[act[0]], 200, &mut rng));
    }
}

#[test]
fn slice_through_an_antipodal_active_atom_is_in_the_subdifferential() {
    let spec = ProductSpec::unit_quadratic(&[2, 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = spec.sample_uniform(&mut rng);
    let near = spec.sample_uniform(&mut rng);
    let atom = x.with_block(0, x.blocks[0].antipode()).with_block(1, near.blocks[1].clone());
    let phi = DiscretePotential::new(spec, vec![atom], vec![0.0]).unwrap();
    let worst = slice_lemma_check(&phi, &x, 0, 0, 100, 200, &mut rng).unwrap();
    assert!(worst >= -1e-8, "{worst}");
}

#[test]
fn single_atom_section_is_the_whole_manifold() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = spec.sample_uniform(&mut rng);
    let phi = DiscretePotential::new(spec.clone(), vec![a.clone()], vec![0.2]).unwrap();
    let s = SectionSpec {
        anchor: spec.sample_uniform(&mut rng),
        slope: a,
        height: 0.0,
    };
    let r = section_sample(&phi, &s, &MonteCarlo::new(4_000, 1));
    assert_abs_diff_eq!(r.volume, spec.volume(), epsilon = 1e-12);
}

#[test]
fn sphere_section_volume_matches_grid_quadrature() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let phi = random_potential(&spec, 5, &mut rng);
    let anchor = spec.sample_uniform(&mut rng);
    let (_, act) = phi.evaluate(&anchor);
    let s = SectionSpec {
        anchor: anchor.clone(),
        slope: phi.atoms[act[0]].clone(),
        height: 0.3,
    };
    let est = section_sample(&phi, &s, &MonteCarlo::new(200_000, 2));
    // Midpoint rule in polar coordinates.
    let (nt, np) = (600, 1200);
    let phi0 = phi.value(&anchor);
    let mut exact = 0.0;
    for a in 0..nt {
        let th = (a as f64 + 0.5) * PI / nt as f64;
        for b in 0..np {
            let ph = (b as f64 + 0.5) * 2.0 * PI / np as f64;
            let x = spec.point(vec![vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]]).unwrap();
            if s.excess(&phi, phi0, &x) <= s.height {
                exact += th.sin() * (PI / nt as f64) * (2.0 * PI / np as f64);
            }
        }
    }
    assert!(exact > 0.05 && exact < 4.0 * PI - 0.05, "degenerate section {exact}");
    assert!((est.volume - exact).abs() <= 3.0 * est.std_err + 2e-3, "{} vs {exact} (se {})", est.volume, est.std_err);
}

#[test]
fn transformed_discrete_potentials_are_midpoint_convex() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..5 {
        let phi = random_potential(&spec, 20, &mut rng);
        let chart = QChart::new(spec.sample_uniform(&mut rng));
        let mut pairs = 0;
        while pairs < 2_000 {
            let x1 = spec.sample_uniform(&mut rng);
            let x2 = spec.sample_uniform(&mut rng);
            let (Ok(q1), Ok(q2)) = (chart.to_q(&spec, &x1), chart.to_q(&spec, &x2)) else { continue };
            if chart.domain_fill(&spec, &q1) > 0.98 || chart.domain_fill(&spec, &q2) > 0.98 {
                continue;
            }
            let back = chart.from_q(&spec, &q1).unwrap();
            assert!(spec.distance(&back, &x1) < 1e-9);
            worst = worst.max(midpoint_convexity_gap(&phi, &chart, &q1, &q2).unwrap());
            pairs += 1;
        }
    }
    assert!(worst <= 1e-8, "{worst}");
}

#[test]
fn contact_set_of_a_single_support_is_everything() {
    let spec = ProductSpec::unit_quadratic(&[2]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = spec.sample_uniform(&mut rng);
    let phi = DiscretePotential::new(spec, vec![a.clone()], vec![0.0]).unwrap();
    let cfg = TransformConfig {
        starts: 0,
        ..TransformConfig::default()
    };
    let pts = contact_set_sample(&phi, 0.0, &a, 1e-7, 500, &cfg).unwrap();
    assert_eq!(pts.len(), 500);
}

#[test]
fn tensor_jacobian_closed_form_matches_finite_differences() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let z = spec.sample_uniform(&mut rng);
        let factors = z
            .blocks
            .iter()
            .map(|b| FactorPotential::Scaled {
                anchor: b.clone(),
                scale: rng.gen_range(0.0..0.7),
            })
            .collect();
        let phi = TensorPotential::new(spec.clone(), factors).unwrap();
        let x = spec.sample_uniform(&mut rng);
        if spec.cut_distance(&x, &z) < 0.2 {
            continue;
        }
        let a = phi.jacobian_closed_form(&x).unwrap();
        let b = phi.jacobian(&x, 1e-5).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-6 * a.max(1.0));
        // The map lands in the subdifferential of the smooth potential.
        let y = phi.map(&x).unwrap();
        for _ in 0..100 {
            let w = spec.sample_uniform(&mut rng);
            assert!(subdifferential_defect(&phi, &x, &y, &w) >= -1e-10);
        }
    }
}

#[test]
fn potential_json_round_trip_is_exact() {
    let spec = ProductSpec::unit_quadratic(&[2, 1]);
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let phi = random_potential(&spec, 7, &mut rng);
    let back = DiscretePotential::from_json(&phi.to_json().unwrap()).unwrap();
    assert_eq!(back, phi);
}
