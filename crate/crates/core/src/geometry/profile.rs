use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial cost profile `f` with `c(x, y) = f(dist(x, y))`.
///
/// Profiles are even, vanish at zero and are strongly convex on `[0, pi r]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostProfile {
    /// `f(t) = t^2 / 2`.
    Quadratic,
    /// `f(t) = (cosh(kappa t) - 1) / kappa^2`.
    Cosh { kappa: f64 },
}

impl Default for CostProfile {
    fn default() -> Self {
        CostProfile::Quadratic
    }
}

impl CostProfile {
    #[inline]
    pub fn f(&self, t: f64) -> f64 {
        match *self {
            CostProfile::Quadratic => 0.5 * t * t,
            CostProfile::Cosh { kappa } => 2.0 * (0.5 * kappa * t).sinh().powi(2) / (kappa * kappa),
        }
    }

    #[inline]
    pub fn f_prime(&self, t: f64) -> f64 {
        match *self {
            CostProfile::Quadratic => t,
            CostProfile::Cosh { kappa } => (kappa * t).sinh() / kappa,
        }
    }

    #[inline]
    pub fn f_second(&self, t: f64) -> f64 {
        match *self {
            CostProfile::Quadratic => 1.0,
            CostProfile::Cosh { kappa } => (kappa * t).cosh(),
        }
    }

    /// Inverse of `f_prime` on `[0, f'(pi r)]`.
    #[inline]
    pub fn f_prime_inverse(&self, s: f64) -> f64 {
        match *self {
            CostProfile::Quadratic => s,
            CostProfile::Cosh { kappa } => (kappa * s).asinh() / kappa,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            CostProfile::Quadratic => "quadratic".to_string(),
            CostProfile::Cosh { kappa } => format!("cosh(kappa={kappa})"),
        }
    }

    /// Sampled check of the profile contract on `[0, pi r]`.
    pub fn validate(&self, radius: f64) -> Result<()> {
        if let CostProfile::Cosh { kappa } = *self {
            if !(kappa.is_finite() && kappa > 0.0) {
                return Err(Error::invalid(format!("cosh profile needs kappa > 0, got {kappa}")));
            }
        }
        if self.f(0.0).abs() > 1e-15 {
            return Err(Error::invalid("cost profile must vanish at 0"));
        }
        let top = std::f64::consts::PI * radius;
        for k in 0..=256 {
            let t = top * k as f64 / 256.0;
            if (self.f(t) - self.f(-t)).abs() > 1e-12 * (1.0 + self.f(t).abs()) {
                return Err(Error::invalid(format!("cost profile is not even at t={t}")));
            }
            if self.f_second(t) <= 0.0 {
                return Err(Error::invalid(format!("cost profile is not strongly convex at t={t}")));
            }
            let back = self.f_prime_inverse(self.f_prime(t));
            if (back - t).abs() > 1e-10 * (1.0 + t) {
                return Err(Error::invalid(format!("f' inverse mismatch at t={t}: {back}")));
            }
        }
        Ok(())
    }
}
