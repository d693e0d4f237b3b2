use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::vec::{dot, norm};
use crate::geometry::{ProductPoint, ProductSpec};

/// Density relative to the normalized Riemannian volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform,
    /// `prod_i (1 + a_i <w_i, x^i> / r_i)` with unit directions `w_i` and
    /// amplitudes `0 <= a_i < 1`. Each factor integrates to one exactly.
    Tilt { amplitudes: Vec<f64>, directions: Vec<Vec<f64>> },
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec::Uniform
    }
}

impl DensitySpec {
    /// Tilt with the same amplitude on every factor, pointing along the first
    /// ambient axis (or its negative with `flip`).
    pub fn axis_tilt(spec: &ProductSpec, amplitude: f64, flip: bool) -> Self {
        let sign = if flip { -1.0 } else { 1.0 };
        DensitySpec::Tilt {
            amplitudes: vec![amplitude; spec.k()],
            directions: spec
                .factors
                .iter()
                .map(|f| {
                    let mut w = vec![0.0; f.sphere.ambient()];
                    w[0] = sign;
                    w
                })
                .collect(),
        }
    }

    /// Same family with every tilt direction reversed.
    pub fn reversed(&self) -> Self {
        match self {
            DensitySpec::Uniform => DensitySpec::Uniform,
            DensitySpec::Tilt { amplitudes, directions } => DensitySpec::Tilt {
                amplitudes: amplitudes.clone(),
                directions: directions.iter().map(|w| w.iter().map(|v| -v).collect()).collect(),
            },
        }
    }

    pub fn validate(&self, spec: &ProductSpec) -> Result<()> {
        match self {
            DensitySpec::Uniform => Ok(()),
            DensitySpec::Tilt { amplitudes, directions } => {
                if amplitudes.len() != spec.k() || directions.len() != spec.k() {
                    return Err(Error::invalid("tilt needs one amplitude and one direction per factor"));
                }
                for (i, f) in spec.factors.iter().enumerate() {
                    if !(0.0..1.0).contains(&amplitudes[i]) {
                        return Err(Error::invalid(format!("tilt amplitude {} outside [0, 1)", amplitudes[i])));
                    }
                    if directions[i].len() != f.sphere.ambient() || (norm(&directions[i]) - 1.0).abs() > 1e-9 {
                        return Err(Error::invalid(format!("tilt direction {i} must be a unit vector of length {}", f.sphere.ambient())));
                    }
                }
                Ok(())
            }
        }
    }

    /// Density divided by the uniform density.
    #[inline]
    pub fn ratio(&self, spec: &ProductSpec, x: &ProductPoint) -> f64 {
        match self {
            DensitySpec::Uniform => 1.0,
            DensitySpec::Tilt { amplitudes, directions } => spec
                .factors
                .iter()
                .enumerate()
                .map(|(i, f)| 1.0 + amplitudes[i] * dot(&directions[i], &x.blocks[i].0) / f.sphere.radius)
                .product(),
        }
    }

    /// `(lambda_lo, lambda_hi)` bounds on [`ratio`](Self::ratio).
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            DensitySpec::Uniform => (1.0, 1.0),
            DensitySpec::Tilt { amplitudes, .. } => (
                amplitudes.iter().map(|a| 1.0 - a).product(),
                amplitudes.iter().map(|a| 1.0 + a).product(),
            ),
        }
    }
}
