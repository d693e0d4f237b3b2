use nalgebra::{DMatrix, DVector};

use super::product::{ProductPoint, ProductSpec};
use crate::error::{Error, Result};

/// Convexifying chart `x -> q = -D_{xbar} c(x, ybar0)` at a fixed target
/// point, in frame coordinates at `ybar0`.
///
/// In this chart the transformed cost `c(x(q), y) - c(x(q), ybar0)` has
/// convex sublevel structure whenever the cost satisfies convex DASM.
#[derive(Clone, Debug)]
pub struct QChart {
    pub anchor: ProductPoint,
}

impl QChart {
    pub fn new(anchor: ProductPoint) -> Self {
        Self { anchor }
    }

    pub fn to_q(&self, spec: &ProductSpec, x: &ProductPoint) -> Result<Vec<f64>> {
        let p = spec.cost_grad_x(&self.anchor, x)?;
        Ok(spec.to_frame(&self.anchor, &p))
    }

    pub fn from_q(&self, spec: &ProductSpec, q: &[f64]) -> Result<ProductPoint> {
        let p = spec.from_frame(&self.anchor, q);
        spec.c_exp(&self.anchor, &p)
    }

    /// Largest fraction of the per-factor domain radius used by `q`.
    pub fn domain_fill(&self, spec: &ProductSpec, q: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (f, off) in spec.factors.iter().zip(spec.offsets()) {
            let n = q[off..off + f.sphere.dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(n / f.domain_radius());
        }
        worst
    }

    /// `c(x(q), y) - c(x(q), ybar0)`.
    pub fn transformed_cost(&self, spec: &ProductSpec, q: &[f64], y: &ProductPoint) -> Result<f64> {
        let x = self.from_q(spec, q)?;
        Ok(spec.cost(&x, y) - spec.cost(&x, &self.anchor))
    }

    /// `-D_q` of the transformed cost at `q`, in frame coordinates at `ybar0`.
    pub fn slope(&self, spec: &ProductSpec, q: &[f64], y: &ProductPoint) -> Result<Vec<f64>> {
        let x = self.from_q(spec, q)?;
        self.slope_at(spec, &x, y)
    }

    pub(crate) fn slope_at(&self, spec: &ProductSpec, x: &ProductPoint, y: &ProductPoint) -> Result<Vec<f64>> {
        let m = spec.mixed_hessian(x, &self.anchor)?;
        let a = spec.to_frame(x, &spec.cost_grad_x(x, y)?);
        let b = spec.to_frame(x, &spec.cost_grad_x(x, &self.anchor)?);
        let rhs = DVector::from_iterator(a.len(), a.iter().zip(&b).map(|(u, v)| u - v));
        solve(m, rhs)
    }
}

pub(crate) fn solve(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<Vec<f64>> {
    m.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::invalid("singular mixed Hessian"))
}
