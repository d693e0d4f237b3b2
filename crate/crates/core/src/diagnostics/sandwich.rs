use serde::{Deserialize, Serialize};

use crate::c_convexity::{GeodesicBall, Region};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, shard_count, shard_range, shard_rng, MonteCarlo};
use crate::geometry::ProductPoint;
use crate::transport::{SemiDiscreteProblem, SolverResult};

/// `|dphi^c(Omega)| / |Omega|` for one probe ball against `[lambda, 1/lambda]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRecord {
    pub centre: ProductPoint,
    pub radius: f64,
    pub region_volume: f64,
    pub image_volume: f64,
    pub ratio: f64,
    pub std_err: f64,
    pub lambda: f64,
    pub atoms_hit: usize,
    pub pass: bool,
}

/// Typical atom spacing `(vol M / N)^(1/n)`.
pub fn sampling_resolution(problem: &SemiDiscreteProblem) -> f64 {
    (problem.spec.volume() / problem.len() as f64).powf(1.0 / problem.spec.dim() as f64)
}

/// Each atom stands for the volume `nu_j / rho_bar(y_j)` of target space. A
/// probe ball claims the share `mu(Omega ∩ Lag_j) / mu(Lag_j)` of it, so the
/// estimate is the sample mean of `rho(x) nu_j / (mu_j rho_bar(y_j))` over
/// uniform points of the ball, with `mu_j` the solver's final cell masses.
pub fn monge_ampere_sandwich(
    result: &SolverResult,
    problem: &SemiDiscreteProblem,
    probes: &[GeodesicBall],
    mc: &MonteCarlo,
) -> Result<Vec<SandwichRecord>> {
    let spec = &problem.spec;
    let floor = 3.0 * sampling_resolution(problem);
    let lambda = problem.lambda();
    if mc.samples < 2 {
        return Err(Error::invalid("monge_ampere_sandwich needs at least two samples per probe"));
    }
    let cell: Vec<f64> = problem
        .masses
        .iter()
        .zip(&result.residuals)
        .map(|(m, r)| (m + r).max(f64::MIN_POSITIVE))
        .collect();
    let mut out = Vec::with_capacity(probes.len());
    for (p, ball) in probes.iter().enumerate() {
        if ball.radius < floor || ball.radius >= spec.min_diameter() {
            return Err(Error::precondition(
                "monge_ampere_sandwich",
                format!("probe radius {} must lie in [{floor}, {})", ball.radius, spec.min_diameter()),
            ));
        }
        spec.check_point(&ball.centre)?;
        let run = mc.reseed(p as u64);
        let parts = map_indexed(run.exec, shard_count(run.samples), |k| {
            let (lo, hi) = shard_range(run.samples, k);
            let mut rng = shard_rng(run.seed, k as u64);
            let mut acc = Vec::with_capacity(hi - lo);
            for _ in lo..hi {
                let x = ball.interior_sample(spec, &mut rng);
                let (j, _) = result.potential.argmax(&x);
                let y = problem.source.ratio(spec, &x) * problem.masses[j]
                    / (cell[j] * problem.target_density.ratio(spec, &problem.atoms[j]));
                acc.push((y, j));
            }
            acc
        });
        let mut hit = vec![false; problem.len()];
        let (mut s1, mut s2) = (0.0, 0.0);
        for (y, j) in parts.into_iter().flatten() {
            s1 += y;
            s2 += y * y;
            hit[j] = true;
        }
        let n = run.samples as f64;
        let ratio = s1 / n;
        let var = ((s2 / n - ratio * ratio) * n / (n - 1.0)).max(0.0);
        let std_err = (var / n).sqrt();
        let rel = std_err / ratio.max(f64::MIN_POSITIVE);
        let region_volume = ball.volume(spec);
        out.push(SandwichRecord {
            centre: ball.centre.clone(),
            radius: ball.radius,
            region_volume,
            image_volume: ratio * region_volume,
            ratio,
            std_err,
            lambda,
            atoms_hit: hit.iter().filter(|h| **h).count(),
            pass: ratio >= lambda * (1.0 - 3.0 * rel) && ratio <= (1.0 + 3.0 * rel) / lambda,
        });
    }
    Ok(out)
}
