use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::potential::{CConvex, DiscretePotential};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, shard_rng, ExecMode};
use crate::geometry::ProductPoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    /// Uniform candidates screened before refinement.
    pub grid: usize,
    /// Best candidates refined by local ascent.
    pub starts: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub exec: ExecMode,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            grid: 2_000,
            starts: 20,
            tolerance: 1e-8,
            max_iter: 2_000,
            seed: 0,
            exec: ExecMode::Parallel,
        }
    }
}

/// Maximized value and the maximizer found.
#[derive(Clone, Debug)]
pub struct Maximum {
    pub value: f64,
    pub point: ProductPoint,
}

/// Local maximization of `F(x) = -c(x, xbar) - phi(x)` by proximal bundle
/// steps. Near-active supports give affine models `gap_j + <g_j, d>` of `F`
/// and each step maximizes their minimum minus `|d|^2 / 2s`, which follows
/// curved ridges instead of zigzagging across them.
pub fn ascend<P: CConvex + ?Sized>(phi: &P, xbar: &ProductPoint, start: ProductPoint, cfg: &TransformConfig) -> Result<Maximum> {
    let spec = phi.spec();
    let objective = |x: &ProductPoint| -spec.cost(x, xbar) - phi.value(x);
    let mut x = start;
    let mut fx = objective(&x);
    let max_move = 0.25 * spec.min_diameter();
    // Cost gradients are bounded by about this.
    let lipschitz = phi.cost_scale() / spec.min_diameter();
    let mut prox = max_move / lipschitz;
    for _ in 0..cfg.max_iter {
        if prox * lipschitz < cfg.tolerance * 1e-3 {
            return Ok(Maximum { value: fx, point: x });
        }
        let Ok(own) = spec.cost_grad_x(&x, xbar) else {
            // At the cut locus of xbar the cost is maximal along every
            // direction; nudge off it.
            prox *= 0.5;
            continue;
        };
        // A support further below than this cannot become active in one step.
        let reach = 2.0 * lipschitz * (prox * 2.0 * lipschitz).min(max_move);
        let sups = phi.supports_within(&x, reach);
        let (gens, gaps): (Vec<Vec<f64>>, Vec<f64>) = sups
            .iter()
            .filter_map(|s| s.covector.as_ref().map(|c| (spec.to_frame(&x, &own.lincomb(1.0, c, -1.0)), s.gap)))
            .unzip();
        if gens.is_empty() {
            prox *= 0.5;
            continue;
        }
        let (mut dir, model) = bundle_step(&gens, &gaps, prox);
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > max_move {
            dir.iter_mut().for_each(|v| *v *= max_move / len);
        }
        if model <= 1e-3 * cfg.tolerance {
            return Ok(Maximum { value: fx, point: x });
        }
        let y = spec.exp(&x, &spec.from_frame(&x, &dir));
        let fy = objective(&y);
        if fy - fx >= 0.1 * model {
            x = y;
            fx = fy;
            prox *= 2.0;
        } else {
            if fy > fx {
                x = y;
                fx = fy;
            }
            prox *= 0.25;
        }
    }
    Err(Error::Convergence {
        what: "c-transform ascent".into(),
        iterations: cfg.max_iter,
    })
}

/// Solves `max_d min_j (gap_j + <g_j, d>) - |d|^2 / 2s` through its dual
/// `min over the simplex of <w, gaps> + s/2 |sum w_j g_j|^2` and returns the
/// step together with the model increase it predicts.
fn bundle_step(gens: &[Vec<f64>], gaps: &[f64], prox: f64) -> (Vec<f64>, f64) {
    let m = gens.len();
    let dim = gens[0].len();
    let combine = |w: &[f64]| -> Vec<f64> {
        (0..dim).map(|a| w.iter().zip(gens).map(|(wj, g)| wj * g[a]).sum()).collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let w = if m == 1 {
        vec![1.0]
    } else {
        // Shift so the smallest gap is zero; the dual is invariant under this.
        let base = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let gaps: Vec<f64> = gaps.iter().map(|g| g - base).collect();
        // Largest Gram eigenvalue by power iteration sets the step.
        let mut e = vec![1.0 / (m as f64).sqrt(); m];
        let mut lam = 0.0;
        for _ in 0..50 {
            let v = combine(&e);
            let ge: Vec<f64> = gens.iter().map(|g| dot(g, &v)).collect();
            lam = ge.iter().map(|x| x * x).sum::<f64>().sqrt();
            if lam <= 0.0 {
                break;
            }
            e = ge.into_iter().map(|x| x / lam).collect();
        }
        let rate = 1.0 / (1.01 * prox * lam).max(1e-300);
        let mut w = vec![1.0 / m as f64; m];
        let mut mom = w.clone();
        let mut t = 1.0_f64;
        for _ in 0..5_000 {
            let v = combine(&mom);
            let grad: Vec<f64> = (0..m).map(|j| gaps[j] + prox * dot(&gens[j], &v)).collect();
            let trial: Vec<f64> = mom.iter().zip(&grad).map(|(a, g)| a - rate * g).collect();
            let next = project_simplex(&trial);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            mom = next.iter().zip(&w).map(|(a, b)| a + (t - 1.0) / t_next * (a - b)).collect();
            w = next;
            t = t_next;
            // Duality gap between the dual iterate and the step it induces.
            let v = combine(&w);
            let vv = dot(&v, &v);
            let dual = dot(&w, &gaps) + 0.5 * prox * vv;
            let primal = gens
                .iter()
                .zip(&gaps)
                .map(|(g, gap)| gap + prox * dot(g, &v))
                .fold(f64::INFINITY, f64::min)
                - 0.5 * prox * vv;
            if dual - primal <= 1e-15 + 1e-6 * dual.abs() {
                break;
            }
        }
        w
    };
    let dir: Vec<f64> = combine(&w).into_iter().map(|v| v * prox).collect();
    let model = gens
        .iter()
        .zip(gaps)
        .map(|(g, gap)| gap + dot(g, &dir))
        .fold(f64::INFINITY, f64::min);
    (dir, model.max(0.0))
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        acc += ui;
        let t = (acc - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Global maximum of `-c(., xbar) - phi` by multi-start ascent; `salt`
/// decorrelates the candidate grid between probes.
pub fn maximize<P: CConvex + ?Sized>(phi: &P, xbar: &ProductPoint, cfg: &TransformConfig, salt: u64) -> Result<Maximum> {
    let spec = phi.spec();
    let mut rng: ChaCha8Rng = shard_rng(cfg.seed, salt);
    let mut cands: Vec<(f64, ProductPoint)> = (0..cfg.grid)
        .map(|_| {
            let x = spec.sample_uniform(&mut rng);
            (-spec.cost(&x, xbar) - phi.value(&x), x)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best: Option<Maximum> = None;
    for (_, x) in cands.into_iter().take(cfg.starts.max(1)) {
        let m = ascend(phi, xbar, x, cfg)?;
        if best.as_ref().map_or(true, |b| m.value > b.value) {
            best = Some(m);
        }
    }
    best.ok_or_else(|| Error::invalid("empty candidate grid"))
}

/// `phibar(xbar) = sup_x [-c(x, xbar) - phi(x)]` at each probe.
pub fn c_transform(phi: &DiscretePotential, probes: &[ProductPoint], cfg: &TransformConfig) -> Result<Vec<Maximum>> {
    map_indexed(cfg.exec, probes.len(), |k| maximize(phi, &probes[k], cfg, k as u64))
        .into_iter()
        .collect()
}

/// `phi(x) + phibar(xbar) + c(x, xbar)`; nonnegative for an exact transform.
pub fn duality_defect<P: CConvex + ?Sized>(phi: &P, phibar: f64, x: &ProductPoint, xbar: &ProductPoint) -> f64 {
    phi.value(x) + phibar + phi.spec().cost(x, xbar)
}

/// Sample of the contact set `S(xbar)`: uniform points with duality defect at
/// most `eps`, plus refined maximizers started from the lowest-defect draws.
pub fn contact_set_sample<P: CConvex + ?Sized>(
    phi: &P,
    phibar: f64,
    xbar: &ProductPoint,
    eps: f64,
    budget: usize,
    cfg: &TransformConfig,
) -> Result<Vec<ProductPoint>> {
    let spec = phi.spec();
    let mut rng = shard_rng(cfg.seed, 0xC0);
    let mut scored: Vec<(f64, ProductPoint)> = (0..budget)
        .map(|_| {
            let x = spec.sample_uniform(&mut rng);
            (duality_defect(phi, phibar, &x, xbar), x)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<ProductPoint> = scored.iter().filter(|(d, _)| *d <= eps).map(|(_, x)| x.clone()).collect();
    for (_, x) in scored.into_iter().take(cfg.starts) {
        let m = ascend(phi, xbar, x, cfg)?;
        if duality_defect(phi, phibar, &m.point, xbar) <= eps {
            out.push(m.point);
        }
    }
    Ok(out)
}
