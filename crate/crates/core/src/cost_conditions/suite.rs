use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    antipodal_domination_gap, convex_dasm_gap, cross_curvature_fd, dasm_gap, dasm_plus_strictness, slope_lipschitz_check,
    SegmentSpec,
};
use crate::error::Result;
use crate::exec::{map_indexed, shard_count, shard_range, shard_rng, ExecMode, MonteCarlo};
use crate::geometry::{Covector, ProductPoint, ProductSpec, QChart};

/// Result of one sampled condition check.
///
/// `worst` is the largest signed violation seen and the check passes iff
/// `worst <= tolerance`. Lower-bound checks store the negated minimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub configuration: String,
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub witness: serde_json::Value,
}

impl ConditionReport {
    fn new(condition: &str, spec: &ProductSpec, samples: usize, worst: f64, tolerance: f64, witness: serde_json::Value) -> Self {
        Self {
            condition: condition.to_string(),
            configuration: spec.label(),
            samples,
            worst,
            tolerance,
            pass: worst <= tolerance,
            witness,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    /// Samples per inequality check, refinement included.
    pub samples: usize,
    /// Configurations for the cross-curvature sign.
    pub cross_samples: usize,
    pub slope_samples: usize,
    pub rounds: usize,
    pub exact_tolerance: f64,
    pub fd_tolerance: f64,
    pub fd_step: f64,
    /// Minimum `dist(y, x)` in the strictness sweep.
    pub separation: f64,
    pub seed: u64,
    pub exec: ExecMode,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            cross_samples: 1_000,
            slope_samples: 1_000,
            rounds: 3,
            exact_tolerance: 1e-8,
            fd_tolerance: 1e-5,
            fd_step: 2e-2,
            separation: 0.1,
            seed: 0,
            exec: ExecMode::Parallel,
        }
    }
}

/// Scores every draw and keeps the maximum, reduced in shard order.
fn sweep<W, D, E>(exec: ExecMode, seed: u64, n: usize, draw: D, eval: E) -> (usize, Option<(f64, W)>)
where
    W: Send + Clone,
    D: Fn(&mut ChaCha8Rng) -> Option<W> + Sync + Send,
    E: Fn(&W) -> Option<f64> + Sync + Send,
{
    let parts = map_indexed(exec, shard_count(n), |s| {
        let (lo, hi) = shard_range(n, s);
        let mut rng = shard_rng(seed, s as u64);
        let mut best: Option<(f64, W)> = None;
        let mut count = 0;
        for _ in lo..hi {
            let Some(w) = draw(&mut rng) else { continue };
            let Some(v) = eval(&w) else { continue };
            count += 1;
            if best.as_ref().map_or(true, |(b, _)| v > *b) {
                best = Some((v, w));
            }
        }
        (count, best)
    });
    let mut total = 0;
    let mut best: Option<(f64, W)> = None;
    for (c, b) in parts {
        total += c;
        if let Some((v, w)) = b {
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, w));
            }
        }
    }
    (total, best)
}

/// Initial sweep over half the budget, then `rounds` rounds of local
/// resampling around the running worst witness with shrinking scale.
fn adversarial<W, D, P, E>(cfg: &SuiteConfig, salt: u64, n: usize, draw: D, perturb: P, eval: E) -> (usize, Option<(f64, W)>)
where
    W: Send + Sync + Clone,
    D: Fn(&mut ChaCha8Rng) -> Option<W> + Sync + Send,
    P: Fn(&W, f64, &mut ChaCha8Rng) -> Option<W> + Sync + Send,
    E: Fn(&W) -> Option<f64> + Sync + Send,
{
    let base = MonteCarlo::new(n, cfg.seed).reseed(salt);
    let rounds = cfg.rounds;
    let first = if rounds == 0 { n } else { n / 2 };
    let (mut total, mut best) = sweep(cfg.exec, base.seed, first, &draw, &eval);
    let per_round = if rounds == 0 { 0 } else { (n - first) / rounds };
    for r in 0..rounds {
        let Some((_, centre)) = best.clone() else { break };
        let scale = 0.3 * 0.3_f64.powi(r as i32);
        let seed = base.reseed(1000 + r as u64).seed;
        let (c, b) = sweep(cfg.exec, seed, per_round, |rng| perturb(&centre, scale, rng), &eval);
        total += c;
        if let Some((v, w)) = b {
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, w));
            }
        }
    }
    (total, best)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn jitter_point(spec: &ProductSpec, x: &ProductPoint, scale: f64, rng: &mut ChaCha8Rng) -> ProductPoint {
    let v = Covector {
        blocks: spec
            .factors
            .iter()
            .zip(&x.blocks)
            .map(|(f, b)| {
                let g: Vec<f64> = (0..f.sphere.ambient()).map(|_| gauss(rng) * scale * f.sphere.radius).collect();
                f.sphere.project_tangent(b, &g)
            })
            .collect(),
    };
    spec.exp(x, &v)
}

/// Clamps each block of frame coordinates into the closed domain ball.
fn clamp_domain(spec: &ProductSpec, coords: &mut [f64]) {
    for (f, off) in spec.factors.iter().zip(spec.offsets()) {
        let blk = &mut coords[off..off + f.sphere.dim];
        let n = blk.iter().map(|v| v * v).sum::<f64>().sqrt();
        let lim = f.domain_radius();
        if n > lim {
            for v in blk.iter_mut() {
                *v *= lim / n;
            }
        }
    }
}

#[derive(Clone, Debug)]
struct SegmentTuple {
    x: ProductPoint,
    p0: Vec<f64>,
    p1: Vec<f64>,
    y: ProductPoint,
    t: f64,
}

impl SegmentTuple {
    fn draw(spec: &ProductSpec, rng: &mut ChaCha8Rng) -> Self {
        let x = spec.sample_uniform(rng);
        let p0 = spec.to_frame(&x, &spec.sample_domain_covector(&x, 1.0, rng));
        let p1 = spec.to_frame(&x, &spec.sample_domain_covector(&x, 1.0, rng));
        let y = spec.sample_uniform(rng);
        let t = rng.gen::<f64>();
        Self { x, p0, p1, y, t }
    }

    fn perturb(&self, spec: &ProductSpec, scale: f64, t_range: (f64, f64), rng: &mut ChaCha8Rng) -> Self {
        let x = jitter_point(spec, &self.x, scale, rng);
        let mut p0 = self.p0.clone();
        let mut p1 = self.p1.clone();
        for (off, f) in spec.offsets().into_iter().zip(&spec.factors) {
            let s = scale * f.domain_radius();
            for k in off..off + f.sphere.dim {
                p0[k] += gauss(rng) * s;
                p1[k] += gauss(rng) * s;
            }
        }
        clamp_domain(spec, &mut p0);
        clamp_domain(spec, &mut p1);
        let y = jitter_point(spec, &self.y, scale, rng);
        let t = (self.t + gauss(rng) * scale).clamp(t_range.0, t_range.1);
        Self { x, p0, p1, y, t }
    }

    fn segment(&self, spec: &ProductSpec) -> Option<SegmentSpec> {
        let p0 = spec.from_frame(&self.x, &self.p0);
        let p1 = spec.from_frame(&self.x, &self.p1);
        SegmentSpec::new(spec, self.x.clone(), p0, p1).ok()
    }

    fn witness(&self, spec: &ProductSpec) -> serde_json::Value {
        json!({
            "x": self.x,
            "p0": spec.from_frame(&self.x, &self.p0),
            "p1": spec.from_frame(&self.x, &self.p1),
            "y": self.y,
            "t": self.t,
        })
    }
}

/// Runs every condition check on `spec` and returns the reports in a fixed order.
pub fn run_suite(spec: &ProductSpec, cfg: &SuiteConfig) -> Result<Vec<ConditionReport>> {
    spec.validate()?;
    let mut out = Vec::new();
    let n = cfg.samples;

    let convex_eval = |w: &SegmentTuple| w.segment(spec).and_then(|s| convex_dasm_gap(spec, &s, &w.y, w.t).ok());
    let dasm_eval = |w: &SegmentTuple| w.segment(spec).and_then(|s| dasm_gap(spec, &s, &w.y, w.t).ok());
    let draw = |rng: &mut ChaCha8Rng| Some(SegmentTuple::draw(spec, rng));
    let perturb = |w: &SegmentTuple, s: f64, rng: &mut ChaCha8Rng| Some(w.perturb(spec, s, (0.0, 1.0), rng));

    let (count, best) = adversarial(cfg, 1, n, draw, perturb, convex_eval);
    let (worst, witness) = best.map_or((f64::NEG_INFINITY, json!(null)), |(v, w)| (v, w.witness(spec)));
    out.push(ConditionReport::new("convex_dasm", spec, count, worst, cfg.exact_tolerance, witness));

    let (count, best) = adversarial(cfg, 2, n, draw, perturb, dasm_eval);
    let (worst, witness) = best.map_or((f64::NEG_INFINITY, json!(null)), |(v, w)| (v, w.witness(spec)));
    out.push(ConditionReport::new("dasm", spec, count, worst, cfg.exact_tolerance, witness));

    // A convex combination never exceeds the max, so the plain gap is bounded
    // by the convex gap sample by sample.
    let order_eval = |w: &SegmentTuple| {
        let s = w.segment(spec)?;
        Some(dasm_gap(spec, &s, &w.y, w.t).ok()? - convex_dasm_gap(spec, &s, &w.y, w.t).ok()?)
    };
    let (count, best) = sweep(cfg.exec, MonteCarlo::new(n, cfg.seed).reseed(3).seed, n, draw, order_eval);
    let (worst, witness) = best.map_or((f64::NEG_INFINITY, json!(null)), |(v, w)| (v, w.witness(spec)));
    out.push(ConditionReport::new("dasm_below_convex_dasm", spec, count, worst, 1e-12, witness));

    let endpoint_eval = |w: &SegmentTuple| {
        let s = w.segment(spec)?;
        let mut m: f64 = 0.0;
        for t in [0.0, 1.0] {
            m = m.max(convex_dasm_gap(spec, &s, &w.y, t).ok()?.abs());
        }
        // The plain gap is min(0, m_0 - m_1) at t = 0, so only the larger
        // endpoint is an equality.
        let top = dasm_gap(spec, &s, &w.y, 0.0).ok()?.max(dasm_gap(spec, &s, &w.y, 1.0).ok()?);
        Some(m.max(top.abs()))
    };
    let m = (n / 10).max(1);
    let (count, best) = sweep(cfg.exec, MonteCarlo::new(m, cfg.seed).reseed(4).seed, m, draw, endpoint_eval);
    let (worst, witness) = best.map_or((f64::NEG_INFINITY, json!(null)), |(v, w)| (v, w.witness(spec)));
    out.push(ConditionReport::new("endpoint_identity", spec, count, worst, 1e-12, witness));

    // The strict principle is a per-factor property; products can attain
    // equality away from the base point.
    for (i, f) in spec.factors.iter().enumerate() {
        let single = ProductSpec { factors: vec![*f] };
        let sep = cfg.separation * f.sphere.radius;
        let strict_eval = |w: &SegmentTuple| {
            if single.distance(&w.x, &w.y) < sep {
                return None;
            }
            let d: f64 = w.p0.iter().zip(&w.p1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if d < 0.05 * f.domain_radius() {
                return None;
            }
            let s = w.segment(&single)?;
            Some(-dasm_plus_strictness(&single, &s, &w.y, w.t).ok()?)
        };
        let t_range = (0.01, 0.99);
        let draw1 = |rng: &mut ChaCha8Rng| {
            let mut w = SegmentTuple::draw(&single, rng);
            w.t = t_range.0 + (t_range.1 - t_range.0) * rng.gen::<f64>();
            Some(w)
        };
        let perturb1 = |w: &SegmentTuple, s: f64, rng: &mut ChaCha8Rng| Some(w.perturb(&single, s, t_range, rng));
        let (count, best) = adversarial(cfg, 10 + i as u64, n, draw1, perturb1, strict_eval);
        let (worst, witness) = best.map_or((f64::NEG_INFINITY, json!(null)), |(v, w)| (v, w.witness(&single)));
        let mut r = ConditionReport::new("dasm_plus_strictness", &single, count, worst, -f64::MIN_POSITIVE, witness);
        r.configuration = format!("{} factor {i}", spec.label());
        out.push(r);

        let dom_eval = |w: &[crate::geometry::SpherePoint; 3]| Some(antipodal_domination_gap(f, &w[0], &w[1], &w[2]));
        let dom_draw = |rng: &mut ChaCha8Rng| {
            Some([f.sphere.sample_uniform(rng), f.sphere.sample_uniform(rng), f.sphere.sample_uniform(rng)])
        };
        let dom_perturb = |w: &[crate::geometry::SpherePoint; 3], s: f64, rng: &mut ChaCha8Rng| {
            let one = |p: &crate::geometry::SpherePoint, rng: &mut ChaCha8Rng| {
                let g: Vec<f64> = (0..f.sphere.ambient()).map(|_| gauss(rng) * s * f.sphere.radius).collect();
                f.sphere.exp(p, &f.sphere.project_tangent(p, &g))
            };
            Some([one(&w[0], rng), one(&w[1], rng), one(&w[2], rng)])
        };
        let (count, best) = adversarial(cfg, 20 + i as u64, n, dom_draw, dom_perturb, dom_eval);
        let (worst, witness) = best.map_or((f64::NEG_INFINITY, json!(null)), |(v, w)| (v, json!({"x": w[0], "xbar": w[1], "ybar": w[2]})));
        let mut r = ConditionReport::new("antipodal_domination", &single, count, worst, cfg.exact_tolerance, witness);
        r.configuration = format!("{} factor {i}", spec.label());
        out.push(r);
    }

    out.push(cross_curvature_report(spec, cfg));
    out.push(slope_report(spec, cfg)?);
    Ok(out)
}

#[derive(Clone, Debug)]
struct CrossTuple {
    x: ProductPoint,
    p: Vec<f64>,
    xi: Vec<f64>,
    eta: Vec<f64>,
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if n > 0.0 {
        for a in v.iter_mut() {
            *a /= n;
        }
    }
}

fn cross_curvature_report(spec: &ProductSpec, cfg: &SuiteConfig) -> ConditionReport {
    let n = spec.dim();
    let fill = 0.9;
    let eval = |w: &CrossTuple| {
        let xbar = spec.c_exp(&w.x, &spec.from_frame(&w.x, &w.p)).ok()?;
        let xi = spec.from_frame(&w.x, &w.xi);
        let eta = spec.from_frame(&w.x, &w.eta);
        cross_curvature_fd(spec, &w.x, &xbar, &xi, &eta, cfg.fd_step).ok().map(|v| -v)
    };
    let draw = |rng: &mut ChaCha8Rng| {
        let x = spec.sample_uniform(rng);
        let p = spec.to_frame(&x, &spec.sample_domain_covector(&x, fill, rng));
        let mut xi: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
        let mut eta: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
        unit(&mut xi);
        unit(&mut eta);
        Some(CrossTuple { x, p, xi, eta })
    };
    let perturb = |w: &CrossTuple, s: f64, rng: &mut ChaCha8Rng| {
        let x = jitter_point(spec, &w.x, s, rng);
        let mut p = w.p.clone();
        for (off, f) in spec.offsets().into_iter().zip(&spec.factors) {
            for k in off..off + f.sphere.dim {
                p[k] += gauss(rng) * s * f.domain_radius();
            }
        }
        let limits: Vec<f64> = spec.factors.iter().map(|f| f.domain_radius() * fill).collect();
        for ((f, off), lim) in spec.factors.iter().zip(spec.offsets()).zip(limits) {
            let blk = &mut p[off..off + f.sphere.dim];
            let nb = blk.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nb > lim {
                blk.iter_mut().for_each(|v| *v *= lim / nb);
            }
        }
        let mut xi: Vec<f64> = w.xi.iter().map(|v| v + gauss(rng) * s).collect();
        let mut eta: Vec<f64> = w.eta.iter().map(|v| v + gauss(rng) * s).collect();
        unit(&mut xi);
        unit(&mut eta);
        Some(CrossTuple { x, p, xi, eta })
    };
    let (count, best) = adversarial(cfg, 30, cfg.cross_samples, draw, perturb, eval);
    let (worst, witness) = best.map_or((f64::NEG_INFINITY, json!(null)), |(v, w)| {
        (
            v,
            json!({
                "x": w.x,
                "p": spec.from_frame(&w.x, &w.p),
                "xi": spec.from_frame(&w.x, &w.xi),
                "eta": spec.from_frame(&w.x, &w.eta),
                "value": -v,
            }),
        )
    });
    ConditionReport::new("cross_curvature_sign", spec, count, worst, cfg.fd_tolerance, witness)
}

/// Empirical slope-comparison constant on a fixed compact chart, with the
/// half-budget supremum kept in the witness as a stability trace.
fn slope_report(spec: &ProductSpec, cfg: &SuiteConfig) -> Result<ConditionReport> {
    let mut rng = shard_rng(MonteCarlo::new(1, cfg.seed).reseed(40).seed, 0);
    let chart = QChart::new(spec.sample_uniform(&mut rng));
    let n = spec.dim();
    let fill = 0.6;
    let margin = 0.5 * spec.min_diameter() / std::f64::consts::PI;
    let draw = |rng: &mut ChaCha8Rng| {
        let pick = |rng: &mut ChaCha8Rng| spec.to_frame(&chart.anchor, &spec.sample_domain_covector(&chart.anchor, fill, rng));
        let q = pick(rng);
        let q_ref = pick(rng);
        let y = spec.sample_uniform(rng);
        Some((q, q_ref, y))
    };
    let eval = |w: &(Vec<f64>, Vec<f64>, ProductPoint)| {
        let (q, q_ref, y) = w;
        let a = chart.from_q(spec, q).ok()?;
        let b = chart.from_q(spec, q_ref).ok()?;
        if spec.cut_distance(&a, y) < margin || spec.cut_distance(&b, y) < margin || spec.distance(y, &chart.anchor) < margin {
            return None;
        }
        slope_lipschitz_check(spec, &chart, q, q_ref, y).ok()
    };
    let seed = MonteCarlo::new(1, cfg.seed).reseed(41).seed;
    let half = (cfg.slope_samples / 2).max(1);
    let (_, best_half) = sweep(cfg.exec, seed, half, draw, eval);
    let (count, best) = sweep(cfg.exec, seed, cfg.slope_samples, draw, eval);
    let sup_half = best_half.map_or(0.0, |(v, _)| v);
    let (worst, witness) = best.map_or((0.0, json!(null)), |(v, (q, qr, y))| {
        (v, json!({"chart": chart.anchor, "q": q, "q_ref": qr, "y": y, "sup_half_budget": sup_half, "dim": n}))
    });
    Ok(ConditionReport::new("slope_comparison_constant", spec, count, worst, 1e3, witness))
}
