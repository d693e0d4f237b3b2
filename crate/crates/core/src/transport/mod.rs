//! Semi-discrete optimal transport and an entropic cross-check.

mod density;
mod entropic;
pub mod io;
mod map;
mod masses;
mod problem;
mod solver;

pub use density::DensitySpec;
pub use entropic::{solve_entropic, EntropicPlan};
pub use map::{transport_map, MapImage};
pub use masses::{assign, laguerre_masses, mass_std_err, Assignment, CostTable, MassEstimate, SampleSet};
pub use problem::SemiDiscreteProblem;
pub use solver::{solve_on_samples, solve_semidiscrete, SolverConfig, SolverResult, StepKind, TraceRow};

use crate::error::Result;
use crate::exec::MonteCarlo;
use crate::geometry::{ProductPoint, ProductSpec};

impl SolverResult {
    pub fn map(&self, x: &ProductPoint) -> MapImage {
        transport_map(&self.potential, x)
    }
}

/// Problem whose masses are the source measure of the atoms' own cells at
/// zero weights, so `psi = 0` already solves it up to Monte Carlo error.
pub fn identity_like(spec: ProductSpec, source: DensitySpec, atoms: Vec<ProductPoint>, mc: &MonteCarlo) -> Result<SemiDiscreteProblem> {
    let n = atoms.len();
    let probe = SemiDiscreteProblem {
        spec,
        source,
        atoms,
        masses: vec![1.0 / n as f64; n],
        target_density: DensitySpec::Uniform,
    };
    let est = laguerre_masses(&probe, &vec![0.0; n], mc);
    let floor = 1e-12;
    let masses = problem::normalize(est.masses.iter().map(|m| m.max(floor)).collect());
    SemiDiscreteProblem::new(probe.spec, probe.source, probe.atoms, masses)
}
