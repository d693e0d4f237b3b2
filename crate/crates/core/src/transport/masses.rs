use serde::{Deserialize, Serialize};

use super::problem::SemiDiscreteProblem;
use crate::exec::{map_chunks, map_indexed, shard_count, shard_range, shard_rng, ExecMode, MonteCarlo, SHARD_SIZE};
use crate::geometry::ProductPoint;

/// Source samples with self-normalized importance weights (sum 1).
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub points: Vec<ProductPoint>,
    pub weights: Vec<f64>,
}

impl SampleSet {
    /// Uniform draws weighted by the source density ratio.
    pub fn draw(problem: &SemiDiscreteProblem, mc: &MonteCarlo) -> Self {
        let spec = &problem.spec;
        let parts = map_indexed(mc.exec, shard_count(mc.samples), |k| {
            let (lo, hi) = shard_range(mc.samples, k);
            let mut rng = shard_rng(mc.seed, k as u64);
            (lo..hi)
                .map(|_| {
                    let x = spec.sample_uniform(&mut rng);
                    let w = problem.source.ratio(spec, &x);
                    (x, w)
                })
                .collect::<Vec<_>>()
        });
        let (points, raw): (Vec<_>, Vec<_>) = parts.into_iter().flatten().unzip();
        Self::from_weighted(points, raw)
    }

    /// Empirical measure with given nonnegative weights.
    pub fn from_weighted(points: Vec<ProductPoint>, raw: Vec<f64>) -> Self {
        let total: f64 = raw.iter().sum();
        Self {
            points,
            weights: raw.into_iter().map(|w| w / total).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Effective sample size `1 / sum w^2`.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Row-major `samples x atoms` cost table.
#[derive(Clone, Debug)]
pub struct CostTable {
    pub n: usize,
    pub atoms: usize,
    pub data: Vec<f64>,
}

impl CostTable {
    pub fn new(problem: &SemiDiscreteProblem, samples: &SampleSet, exec: ExecMode) -> Self {
        let spec = &problem.spec;
        let rows = map_chunks(exec, &samples.points, SHARD_SIZE, |chunk| {
            let mut out = Vec::with_capacity(chunk.len() * problem.atoms.len());
            for x in chunk {
                for a in &problem.atoms {
                    out.push(spec.cost(x, a));
                }
            }
            out
        });
        Self {
            n: samples.len(),
            atoms: problem.atoms.len(),
            data: rows.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.atoms..(s + 1) * self.atoms]
    }
}

/// Cell assignment of every sample under weights `psi`.
#[derive(Clone, Debug)]
pub struct Assignment {
    pub masses: Vec<f64>,
    /// `int phi_psi d mu`.
    pub mean_potential: f64,
    /// Per sample: best atom, runner-up atom, score gap, number of tied atoms.
    pub top: Vec<(u32, u32, f64, u32)>,
}

/// Scores `-c - psi`, tie splitting within `tie` of the max.
pub fn assign(table: &CostTable, samples: &SampleSet, psi: &[f64], tie: f64, exec: ExecMode) -> Assignment {
    let n_atoms = table.atoms;
    let parts = map_indexed(exec, shard_count(table.n), |k| {
        let (lo, hi) = shard_range(table.n, k);
        let mut masses = vec![0.0; n_atoms];
        let mut pot = 0.0;
        let mut top = Vec::with_capacity(hi - lo);
        let mut tied = Vec::with_capacity(4);
        for s in lo..hi {
            let row = table.row(s);
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            let mut second = f64::NEG_INFINITY;
            let mut arg2 = 0;
            for j in 0..n_atoms {
                let v = -row[j] - psi[j];
                if v > best {
                    second = best;
                    arg2 = arg;
                    best = v;
                    arg = j;
                } else if v > second {
                    second = v;
                    arg2 = j;
                }
            }
            let w = samples.weights[s];
            pot += w * best;
            if best - second <= tie {
                tied.clear();
                for j in 0..n_atoms {
                    if -row[j] - psi[j] >= best - tie {
                        tied.push(j);
                    }
                }
                let share = w / tied.len() as f64;
                for &j in &tied {
                    masses[j] += share;
                }
                top.push((arg as u32, arg2 as u32, best - second, tied.len() as u32));
            } else {
                masses[arg] += w;
                top.push((arg as u32, arg2 as u32, best - second, 1));
            }
        }
        (masses, pot, top)
    });
    let mut masses = vec![0.0; n_atoms];
    let mut mean_potential = 0.0;
    let mut top = Vec::with_capacity(table.n);
    for (m, p, t) in parts {
        for (a, b) in masses.iter_mut().zip(m) {
            *a += b;
        }
        mean_potential += p;
        top.extend(t);
    }
    Assignment {
        masses,
        mean_potential,
        top,
    }
}

/// Mass estimate with per-atom standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub masses: Vec<f64>,
    pub std_err: Vec<f64>,
    pub samples: usize,
}

impl MassEstimate {
    pub fn max_residual(&self, target: &[f64]) -> f64 {
        self.masses
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Standard errors of a self-normalized cell estimate.
pub fn mass_std_err(samples: &SampleSet, a: &Assignment) -> Vec<f64> {
    let n_atoms = a.masses.len();
    let mut var = vec![0.0; n_atoms];
    let mut base = 0.0;
    for (w, (j, _, _, ties)) in samples.weights.iter().zip(&a.top) {
        base += w * w;
        if *ties == 1 {
            let j = *j as usize;
            // (1 - m_j)^2 - m_j^2 correction for the sample's own cell
            var[j] += w * w * (1.0 - 2.0 * a.masses[j]);
        }
    }
    (0..n_atoms)
        .map(|j| (var[j] + base * a.masses[j] * a.masses[j]).max(0.0).sqrt())
        .collect()
}

/// Monte Carlo estimate of `mu(Lag_j)` under weights `psi`.
pub fn laguerre_masses(problem: &SemiDiscreteProblem, psi: &[f64], mc: &MonteCarlo) -> MassEstimate {
    let samples = SampleSet::draw(problem, mc);
    let table = CostTable::new(problem, &samples, mc.exec);
    let tie = 1e-9 * problem.spec.factors.iter().map(|f| f.profile.f(f.sphere.diameter())).sum::<f64>();
    let a = assign(&table, &samples, psi, tie, mc.exec);
    MassEstimate {
        std_err: mass_std_err(&samples, &a),
        masses: a.masses,
        samples: samples.len(),
    }
}
