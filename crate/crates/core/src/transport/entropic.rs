use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entropic coupling from log-domain Sinkhorn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropicPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major coupling matrix.
    pub coupling: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub iterations: usize,
    /// L1 row-marginal violation; column marginals are exact after each sweep.
    pub violation: f64,
    pub transport_cost: f64,
}

impl EntropicPlan {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols + j]
    }
}

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Minimizes `<C, P> + eps KL(P | mu x nu)` over couplings of `mu` and `nu`.
/// `cost` is row-major `mu.len() x nu.len()`.
pub fn solve_entropic(mu: &[f64], nu: &[f64], cost: &[f64], eps: f64, max_iter: usize) -> Result<EntropicPlan> {
    let (m, n) = (mu.len(), nu.len());
    if !(eps > 0.0) {
        return Err(Error::invalid("entropic regularization must be positive"));
    }
    if m == 0 || n == 0 || cost.len() != m * n {
        return Err(Error::invalid(format!("cost matrix has {} entries, expected {m} x {n}", cost.len())));
    }
    if mu.iter().chain(nu).any(|w| !(*w > 0.0)) {
        return Err(Error::invalid("marginal weights must be positive"));
    }
    let log_mu: Vec<f64> = mu.iter().map(|w| w.ln()).collect();
    let log_nu: Vec<f64> = nu.iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let mut violation = f64::INFINITY;
    let mut iterations = 0;
    // geometric schedule down to eps, warm-starting the duals
    let top = cost.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(eps);
    let mut level = top;
    loop {
        level = (level * 0.5).max(eps);
        let last = level == eps;
        let target = if last { 1e-9 } else { 1e-6 };
        while iterations < max_iter {
            iterations += 1;
            sweep(&mut f, &mut g, &log_mu, &log_nu, cost, level);
            if iterations % 10 == 0 || iterations == max_iter {
                violation = row_violation(&f, &g, &log_mu, &log_nu, mu, cost, level);
                if violation <= target {
                    break;
                }
            }
        }
        if last || iterations >= max_iter {
            break;
        }
    }
    if violation > 1e-9 {
        return Err(Error::Convergence {
            what: format!("Sinkhorn (marginal violation {violation:e})"),
            iterations,
        });
    }
    let mut coupling = vec![0.0; m * n];
    let mut transport_cost = 0.0;
    for i in 0..m {
        for j in 0..n {
            let p = (log_mu[i] + log_nu[j] + (f[i] + g[j] - cost[i * n + j]) / eps).exp();
            coupling[i * n + j] = p;
            transport_cost += p * cost[i * n + j];
        }
    }
    Ok(EntropicPlan {
        rows: m,
        cols: n,
        coupling,
        f,
        g,
        iterations,
        violation,
        transport_cost,
    })
}

fn sweep(f: &mut [f64], g: &mut [f64], log_mu: &[f64], log_nu: &[f64], cost: &[f64], eps: f64) {
    let n = g.len();
    for i in 0..f.len() {
        f[i] = -eps * log_sum_exp((0..n).map(|j| log_nu[j] + (g[j] - cost[i * n + j]) / eps));
    }
    for j in 0..n {
        g[j] = -eps * log_sum_exp((0..f.len()).map(|i| log_mu[i] + (f[i] - cost[i * n + j]) / eps));
    }
}

fn row_violation(f: &[f64], g: &[f64], log_mu: &[f64], log_nu: &[f64], mu: &[f64], cost: &[f64], eps: f64) -> f64 {
    let n = g.len();
    (0..f.len())
        .map(|i| {
            let row: f64 = (0..n).map(|j| (log_mu[i] + log_nu[j] + (f[i] + g[j] - cost[i * n + j]) / eps).exp()).sum();
            (row - mu[i]).abs()
        })
        .sum()
}
