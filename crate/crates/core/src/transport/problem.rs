use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::density::DensitySpec;
use crate::error::{Error, Result};
use crate::geometry::{ProductPoint, ProductSpec};

/// Absolutely continuous source against a finite target measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiDiscreteProblem {
    pub spec: ProductSpec,
    pub source: DensitySpec,
    pub atoms: Vec<ProductPoint>,
    pub masses: Vec<f64>,
    /// Density the atoms quadrature, used for Monge-Ampere bounds.
    #[serde(default)]
    pub target_density: DensitySpec,
}

impl SemiDiscreteProblem {
    pub fn new(spec: ProductSpec, source: DensitySpec, atoms: Vec<ProductPoint>, masses: Vec<f64>) -> Result<Self> {
        let p = Self {
            spec,
            source,
            atoms,
            masses,
            target_density: DensitySpec::Uniform,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.source.validate(&self.spec)?;
        self.target_density.validate(&self.spec)?;
        if self.atoms.is_empty() || self.atoms.len() != self.masses.len() {
            return Err(Error::invalid("need one positive mass per atom and at least one atom"));
        }
        for a in &self.atoms {
            self.spec.check_point(a)?;
        }
        if self.masses.iter().any(|m| !(*m > 0.0)) {
            return Err(Error::invalid("target masses must be positive"));
        }
        let total: f64 = self.masses.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("target masses sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `N` uniformly placed atoms with masses proportional to `target` at the
    /// atoms, so the target is a quadrature of that density.
    pub fn sampled(spec: ProductSpec, source: DensitySpec, target: DensitySpec, n_atoms: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms: Vec<ProductPoint> = (0..n_atoms).map(|_| spec.sample_uniform(&mut rng)).collect();
        let raw: Vec<f64> = atoms.iter().map(|a| target.ratio(&spec, a)).collect();
        let total: f64 = raw.iter().sum();
        let masses = normalize(raw.iter().map(|m| m / total).collect());
        let p = Self {
            spec,
            source,
            atoms,
            masses,
            target_density: target,
        };
        p.validate()?;
        Ok(p)
    }

    /// Density ratio bound `lambda = lambda_lo / lambda_hi` of the pair, the
    /// constant of the Monge-Ampere sandwich.
    pub fn lambda(&self) -> f64 {
        let (slo, shi) = self.source.bounds();
        let (tlo, thi) = self.target_density.bounds();
        (slo / thi).min(tlo / shi)
    }
}

/// Rescales so that the floating-point sum is 1 to within one ulp-scale term.
pub(crate) fn normalize(mut m: Vec<f64>) -> Vec<f64> {
    for _ in 0..3 {
        let total: f64 = m.iter().sum();
        m.iter_mut().for_each(|v| *v /= total);
    }
    m
}
