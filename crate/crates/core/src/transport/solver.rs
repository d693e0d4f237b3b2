use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::masses::{assign, mass_std_err, Assignment, CostTable, SampleSet};
use super::problem::SemiDiscreteProblem;
use crate::c_convexity::DiscretePotential;
use crate::error::{Error, Result};
use crate::exec::{ExecMode, MonteCarlo};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tolerance: f64,
    /// Monte Carlo budget per stage; each stage warm-starts from the last.
    pub budgets: Vec<usize>,
    pub max_iter: usize,
    /// Gap quantile defining the boundary band of the Hessian estimate.
    pub band_quantile: f64,
    pub seed: u64,
    pub exec: ExecMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            budgets: vec![10_000, 30_000, 100_000],
            max_iter: 500,
            band_quantile: 0.05,
            seed: 0,
            exec: ExecMode::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Start,
    Newton,
    Polish,
}

/// One accepted iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub stage: usize,
    pub samples: usize,
    pub kind: StepKind,
    pub step: f64,
    /// Concave dual `-int phi_psi dmu - sum nu_j psi_j`.
    pub dual: f64,
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub potential: DiscretePotential,
    pub trace: Vec<TraceRow>,
    /// Signed `mu(Lag_j) - nu_j` on the final sample set.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub max_std_err: f64,
    pub iterations: usize,
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    /// Primal cost `int c(x, T x) dmu` on the final sample set.
    pub transport_cost: f64,
    pub dual: f64,
}

impl SolverResult {
    pub fn converged(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

/// Semi-discrete solve against the problem's source density.
pub fn solve_semidiscrete(problem: &SemiDiscreteProblem, cfg: &SolverConfig) -> Result<SolverResult> {
    problem.validate()?;
    if cfg.budgets.is_empty() {
        return Err(Error::invalid("at least one budget stage is required"));
    }
    if let Some(b) = cfg.budgets.iter().find(|b| **b < 10_000) {
        return Err(Error::precondition("solve_semidiscrete", format!("budget {b} is below 10^4 samples")));
    }
    let mut run = Run::new(problem, cfg);
    let last = cfg.budgets.len() - 1;
    for (stage, &budget) in cfg.budgets.iter().enumerate() {
        let mc = MonteCarlo::new(budget, cfg.seed).with_exec(cfg.exec).reseed(stage as u64);
        let samples = SampleSet::draw(problem, &mc);
        if stage == last {
            let ess = samples.effective_size();
            let se = problem
                .masses
                .iter()
                .map(|m| (m * (1.0 - m) / ess).sqrt())
                .fold(0.0, f64::max);
            if cfg.tolerance < 3.0 * se {
                return Err(Error::precondition(
                    "solve_semidiscrete",
                    format!("tolerance {:e} is below 3 standard errors ({:e}) at the final budget", cfg.tolerance, 3.0 * se),
                ));
            }
        }
        let target = if stage == last {
            0.5 * cfg.tolerance
        } else {
            cfg.tolerance.max(2.0 / (budget as f64).sqrt() * max_mass_sqrt(problem))
        };
        run.stage(stage, &samples, target)?;
    }
    run.finish()
}

/// Solve with the empirical source given by `samples`, e.g. a discrete
/// source measure. No Monte Carlo error is involved.
pub fn solve_on_samples(problem: &SemiDiscreteProblem, samples: &SampleSet, cfg: &SolverConfig) -> Result<SolverResult> {
    problem.validate()?;
    let mut run = Run::new(problem, cfg);
    run.stage(0, samples, 0.5 * cfg.tolerance)?;
    run.finish()
}

fn max_mass_sqrt(problem: &SemiDiscreteProblem) -> f64 {
    problem.masses.iter().copied().fold(0.0, f64::max).sqrt()
}

struct Run<'a> {
    problem: &'a SemiDiscreteProblem,
    cfg: &'a SolverConfig,
    tie: f64,
    scale: f64,
    psi: Vec<f64>,
    trace: Vec<TraceRow>,
    iterations: usize,
    last: Option<StageState>,
}

struct StageState {
    samples: usize,
    a: Assignment,
    std_err: Vec<f64>,
    cost: f64,
}

impl<'a> Run<'a> {
    fn new(problem: &'a SemiDiscreteProblem, cfg: &'a SolverConfig) -> Self {
        let scale: f64 = problem
            .spec
            .factors
            .iter()
            .map(|f| f.profile.f(f.sphere.diameter()))
            .sum();
        Self {
            problem,
            cfg,
            tie: 1e-9 * scale,
            scale,
            psi: vec![0.0; problem.len()],
            trace: Vec::new(),
            iterations: 0,
            last: None,
        }
    }

    fn dual(&self, a: &Assignment, psi: &[f64]) -> f64 {
        -a.mean_potential - self.problem.masses.iter().zip(psi).map(|(n, p)| n * p).sum::<f64>()
    }

    fn residual(&self, a: &Assignment) -> f64 {
        a.masses
            .iter()
            .zip(&self.problem.masses)
            .map(|(m, n)| (m - n).abs())
            .fold(0.0, f64::max)
    }

    fn record(&mut self, stage: usize, samples: usize, kind: StepKind, step: f64, a: &Assignment) {
        let row = TraceRow {
            iteration: self.iterations,
            stage,
            samples,
            kind,
            step,
            dual: self.dual(a, &self.psi),
            max_residual: self.residual(a),
        };
        self.trace.push(row);
    }

    fn stage(&mut self, stage: usize, samples: &SampleSet, target: f64) -> Result<()> {
        let exec = self.cfg.exec;
        let table = CostTable::new(self.problem, samples, exec);
        let n_atoms = self.problem.len();
        let mut a = assign(&table, samples, &self.psi, self.tie, exec);
        self.record(stage, samples.len(), StepKind::Start, 0.0, &a);
        let small = samples.len() * n_atoms <= 2_000_000;
        let mut stalls = 0;
        let max_stalls = if small { 10 } else { 3 };
        while self.residual(&a) > target && self.iterations < self.cfg.max_iter && stalls < max_stalls {
            self.iterations += 1;
            let before = self.residual(&a);
            if let Some((psi, next, step)) = self.newton_step(&table, samples, &a) {
                self.psi = psi;
                a = next;
                self.record(stage, samples.len(), StepKind::Newton, step, &a);
                if self.residual(&a) < 0.99 * before {
                    stalls = 0;
                    continue;
                }
            }
            let limit = if small { n_atoms } else { 20 };
            let next = self.polish(&table, samples, a.clone(), target, limit);
            if self.residual(&next) < before {
                a = next;
                self.record(stage, samples.len(), StepKind::Polish, 0.0, &a);
                stalls = 0;
            } else {
                stalls += 1;
            }
        }
        let cost: f64 = a
            .top
            .iter()
            .zip(&samples.weights)
            .enumerate()
            .map(|(s, ((j, _, _, _), w))| w * table.row(s)[*j as usize])
            .sum();
        self.last = Some(StageState {
            samples: samples.len(),
            std_err: mass_std_err(samples, &a),
            a,
            cost,
        });
        Ok(())
    }

    /// Damped Newton step on the band Hessian; `None` when no damping helps.
    fn newton_step(&self, table: &CostTable, samples: &SampleSet, a: &Assignment) -> Option<(Vec<f64>, Assignment, f64)> {
        let n = self.problem.len();
        if n == 1 {
            return None;
        }
        let r: Vec<f64> = a.masses.iter().zip(&self.problem.masses).map(|(m, v)| m - v).collect();
        let mut gaps: Vec<f64> = a.top.iter().map(|t| t.2).collect();
        let k = ((gaps.len() as f64 * self.cfg.band_quantile) as usize).min(gaps.len() - 1);
        let (_, beta, _) = gaps.select_nth_unstable_by(k, f64::total_cmp);
        let beta = beta.max(1e-12 * self.scale);
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (t, w) in a.top.iter().zip(&samples.weights) {
            if t.2 < beta {
                let (i, j) = (t.0 as usize, t.1 as usize);
                let d = w / (2.0 * beta);
                h[(i, j)] -= d;
                h[(j, i)] -= d;
                h[(i, i)] += d;
                h[(j, j)] += d;
            }
        }
        let mean_diag = (0..n).map(|i| h[(i, i)]).sum::<f64>() / n as f64;
        let ridge = 1e-6 * mean_diag + 1e-12;
        for i in 0..n {
            h[(i, i)] += ridge;
        }
        let mut dir = h.cholesky()?.solve(&DVector::from_vec(r)).as_slice().to_vec();
        let shift = dir.iter().sum::<f64>() / n as f64;
        dir.iter_mut().for_each(|d| *d -= shift);
        let cap = 0.1 * self.scale;
        let big = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if big > cap {
            dir.iter_mut().for_each(|d| *d *= cap / big);
        }
        let g0 = self.dual(a, &self.psi);
        let r0 = self.residual(a);
        let mut t = 1.0;
        for _ in 0..20 {
            let cand: Vec<f64> = self.psi.iter().zip(&dir).map(|(p, d)| p + t * d).collect();
            let cand = gauge(cand);
            let next = assign(table, samples, &cand, self.tie, self.cfg.exec);
            let g = self.dual(&next, &cand);
            if g > g0 || (g >= g0 && self.residual(&next) < r0) {
                return Some((cand, next, t));
            }
            t *= 0.5;
        }
        None
    }

    /// Exact single-coordinate corrections, largest residual first.
    fn polish(&mut self, table: &CostTable, samples: &SampleSet, mut a: Assignment, target: f64, limit: usize) -> Assignment {
        let n = self.problem.len();
        let mut order: Vec<usize> = (0..n).collect();
        let res = |a: &Assignment, j: usize| a.masses[j] - self.problem.masses[j];
        order.sort_by(|&i, &j| res(&a, j).abs().total_cmp(&res(&a, i).abs()).then(i.cmp(&j)));
        for &j in order.iter().take(limit) {
            let r = res(&a, j);
            if r.abs() <= target {
                continue;
            }
            // (threshold, weight): shifting psi_j past the threshold moves that sample
            let mut moves: Vec<(f64, f64)> = Vec::new();
            for (s, (t, w)) in a.top.iter().zip(&samples.weights).enumerate() {
                let score = -table.row(s)[j] - self.psi[j];
                let in_j = t.0 as usize == j;
                if r > 0.0 && in_j {
                    moves.push((t.2, *w));
                } else if r < 0.0 && !in_j {
                    let best = -table.row(s)[t.0 as usize] - self.psi[t.0 as usize];
                    moves.push((best - score, *w));
                }
            }
            moves.sort_by(|x, y| x.0.total_cmp(&y.0));
            let want = r.abs();
            let mut acc = 0.0;
            let mut best_k = 0;
            let mut best_err = want;
            for (k, (_, w)) in moves.iter().enumerate() {
                acc += w;
                let err = (acc - want).abs();
                if err < best_err {
                    best_err = err;
                    best_k = k + 1;
                }
                if acc > want {
                    break;
                }
            }
            if best_k == 0 {
                continue;
            }
            let lo = moves[best_k - 1].0;
            let hi = moves.get(best_k).map_or(lo + 1e-6 * self.scale, |m| m.0);
            let delta = 0.5 * (lo + hi);
            if r > 0.0 {
                self.psi[j] += delta;
            } else {
                self.psi[j] -= delta;
            }
            a = assign(table, samples, &self.psi, self.tie, self.cfg.exec);
        }
        self.psi = gauge(std::mem::take(&mut self.psi));
        assign(table, samples, &self.psi, self.tie, self.cfg.exec)
    }

    fn finish(self) -> Result<SolverResult> {
        let state = self.last.as_ref().expect("at least one stage ran");
        let residuals: Vec<f64> = state
            .a
            .masses
            .iter()
            .zip(&self.problem.masses)
            .map(|(m, n)| m - n)
            .collect();
        let max_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let potential = DiscretePotential::new(self.problem.spec.clone(), self.problem.atoms.clone(), self.psi.clone())?;
        let result = SolverResult {
            potential,
            dual: self.dual(&state.a, &self.psi),
            trace: self.trace,
            residuals,
            max_residual,
            max_std_err: state.std_err.iter().copied().fold(0.0, f64::max),
            iterations: self.iterations,
            seed: self.cfg.seed,
            samples: state.samples,
            tolerance: self.cfg.tolerance,
            transport_cost: state.cost,
        };
        if result.converged() {
            Ok(result)
        } else {
            Err(Error::SolverStalled {
                iterations: result.iterations,
                max_residual,
                best: Box::new(result),
            })
        }
    }
}

fn gauge(mut psi: Vec<f64>) -> Vec<f64> {
    let mean = psi.iter().sum::<f64>() / psi.len() as f64;
    psi.iter_mut().for_each(|p| *p -= mean);
    psi
}
