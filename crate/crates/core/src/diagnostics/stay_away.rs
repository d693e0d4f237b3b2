use serde::{Deserialize, Serialize};

use crate::c_convexity::c_subdifferential;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, shard_count, shard_range, shard_rng, MonteCarlo};
use crate::geometry::{ProductPoint, ProductSpec};
use crate::transport::{SemiDiscreteProblem, SolverResult};

/// Hull samples per tie point.
const TIE_HULL: usize = 8;

/// Distance from the c-subdifferential to the cut locus over sampled sources.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StayAwayReport {
    pub configuration: String,
    pub spec: ProductSpec,
    pub samples: usize,
    /// `dist(dphi^c(x), Cut(x))` per sample, in sample order.
    pub values: Vec<f64>,
    pub minimum: f64,
    pub witness_point: ProductPoint,
    pub witness_target: ProductPoint,
    /// `min_i pi r_i`, the largest possible value.
    pub injectivity: f64,
    pub source_bounds: (f64, f64),
    pub target_bounds: (f64, f64),
    pub lambda: f64,
}

impl StayAwayReport {
    /// Minimum divided by `min_i pi r_i`.
    pub fn relative_minimum(&self) -> f64 {
        self.minimum / self.injectivity
    }
}

/// Scans `mc.samples` uniform sources. Ties contribute every active atom and
/// [`TIE_HULL`] c-exponential images of the hull of their covectors.
pub fn stay_away_scan(result: &SolverResult, problem: &SemiDiscreteProblem, mc: &MonteCarlo) -> Result<StayAwayReport> {
    if !result.converged() {
        return Err(Error::precondition(
            "stay_away_scan",
            format!("solver residual {:e} exceeds its tolerance {:e}", result.max_residual, result.tolerance),
        ));
    }
    if mc.samples == 0 {
        return Err(Error::invalid("stay_away_scan needs at least one sample"));
    }
    let phi = &result.potential;
    let spec = &phi.spec;
    let parts = map_indexed(mc.exec, shard_count(mc.samples), |k| {
        let (lo, hi) = shard_range(mc.samples, k);
        let mut rng = shard_rng(mc.seed, k as u64);
        let mut out = Vec::with_capacity(hi - lo);
        for _ in lo..hi {
            let x = spec.sample_uniform(&mut rng);
            let (_, act) = phi.evaluate(&x);
            let mut best = (f64::INFINITY, act[0]);
            let mut best_target = None;
            for &j in &act {
                let d = spec.cut_distance(&x, &phi.atoms[j]);
                if d < best.0 {
                    best = (d, j);
                    best_target = None;
                }
            }
            if act.len() > 1 {
                // An antipodal active atom already gives distance zero.
                match c_subdifferential(phi, &x, TIE_HULL, &mut rng) {
                    Ok(sd) => {
                        for y in &sd.hull {
                            let d = spec.cut_distance(&x, y);
                            if d < best.0 {
                                best.0 = d;
                                best_target = Some(y.clone());
                            }
                        }
                    }
                    Err(_) => best.0 = 0.0,
                }
            }
            let target = best_target.unwrap_or_else(|| phi.atoms[best.1].clone());
            out.push((best.0, x, target));
        }
        out
    });
    let mut values = Vec::with_capacity(mc.samples);
    let mut witness: Option<(f64, ProductPoint, ProductPoint)> = None;
    for (d, x, y) in parts.into_iter().flatten() {
        values.push(d);
        if witness.as_ref().map_or(true, |w| d < w.0) {
            witness = Some((d, x, y));
        }
    }
    let (minimum, witness_point, witness_target) = witness.expect("at least one sample");
    Ok(StayAwayReport {
        configuration: spec.label(),
        spec: spec.clone(),
        samples: mc.samples,
        values,
        minimum,
        witness_point,
        witness_target,
        injectivity: spec.min_diameter(),
        source_bounds: problem.source.bounds(),
        target_bounds: problem.target_density.bounds(),
        lambda: problem.lambda(),
    })
}
