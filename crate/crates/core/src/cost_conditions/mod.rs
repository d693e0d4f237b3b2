//! Sampled checks of the structural cost conditions: Loeper's maximum
//! principle in plain, convex and strict form, the cross-curvature sign, the
//! slope comparison in the convexifying chart, and antipodal domination.
//!
//! Every check evaluates the defining inequality directly, and the
//! [`suite`] runner sweeps random configurations with adversarial refinement
//! around the worst witness.

mod suite;

pub use suite::{run_suite, ConditionReport, SuiteConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Covector, Factor, ProductPoint, ProductSpec, QChart, SpherePoint};

/// c-segment `t -> c_exp(x, (1 - t) p0 + t p1)` based at `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub base: ProductPoint,
    pub p0: Covector,
    pub p1: Covector,
}

impl SegmentSpec {
    pub fn new(spec: &ProductSpec, base: ProductPoint, p0: Covector, p1: Covector) -> Result<Self> {
        for p in [&p0, &p1] {
            spec.check_covector(&base, p)?;
            for (i, (f, n)) in spec.factors.iter().zip(p.block_norms()).enumerate() {
                let limit = f.domain_radius();
                if n > limit * (1.0 + 1e-9) {
                    return Err(Error::Domain { factor: i, norm: n, limit });
                }
            }
        }
        Ok(Self { base, p0, p1 })
    }

    pub fn covector(&self, t: f64) -> Covector {
        self.p0.lincomb(1.0 - t, &self.p1, t)
    }

    pub fn point(&self, spec: &ProductSpec, t: f64) -> Result<ProductPoint> {
        spec.c_exp(&self.base, &self.covector(t))
    }

    /// `m_t(y) = -c(y, xbar(t)) + c(x, xbar(t))`.
    pub fn height(&self, spec: &ProductSpec, y: &ProductPoint, t: f64) -> Result<f64> {
        let xt = self.point(spec, t)?;
        Ok(-spec.cost(y, &xt) + spec.cost(&self.base, &xt))
    }

    fn heights(&self, spec: &ProductSpec, y: &ProductPoint, t: f64) -> Result<(f64, f64, f64)> {
        Ok((self.height(spec, y, 0.0)?, self.height(spec, y, t)?, self.height(spec, y, 1.0)?))
    }
}

/// `m_t(y) - max(m_0(y), m_1(y))`; nonpositive under Loeper's maximum principle.
pub fn dasm_gap(spec: &ProductSpec, seg: &SegmentSpec, y: &ProductPoint, t: f64) -> Result<f64> {
    let (m0, mt, m1) = seg.heights(spec, y, t)?;
    Ok(mt - m0.max(m1))
}

/// `m_t(y) - ((1 - t) m_0(y) + t m_1(y))`; nonpositive under convex DASM.
pub fn convex_dasm_gap(spec: &ProductSpec, seg: &SegmentSpec, y: &ProductPoint, t: f64) -> Result<f64> {
    let (m0, mt, m1) = seg.heights(spec, y, t)?;
    Ok(mt - ((1.0 - t) * m0 + t * m1))
}

/// `max(m_0(y), m_1(y)) - m_t(y)`; strictly positive for `y != x` on a single
/// sphere satisfying the strict maximum principle.
pub fn dasm_plus_strictness(spec: &ProductSpec, seg: &SegmentSpec, y: &ProductPoint, t: f64) -> Result<f64> {
    Ok(-dasm_gap(spec, seg, y, t)?)
}

/// Fourth-order mixed difference `d^2/ds^2 d^2/dt^2 [-c(exp_x(s xi), c_exp(x, p + t eta))]`
/// at `s = t = 0`, with `p = -D_x c(x, xbar)`.
///
/// Uses the 3x3 central stencil at steps `h` and `h/2` followed by one
/// Richardson pass.
pub fn cross_curvature_fd(
    spec: &ProductSpec,
    x: &ProductPoint,
    xbar: &ProductPoint,
    xi: &Covector,
    eta: &Covector,
    step: f64,
) -> Result<f64> {
    let p = spec.cost_grad_x(x, xbar)?;
    let g = |s: f64, t: f64| -> Result<f64> {
        let y = spec.exp(x, &xi.scaled(s));
        let z = spec.c_exp(x, &p.lincomb(1.0, eta, t))?;
        Ok(-spec.cost(&y, &z))
    };
    let w = [1.0, -2.0, 1.0];
    let stencil = |h: f64| -> Result<f64> {
        let mut acc = 0.0;
        for (a, wa) in w.iter().enumerate() {
            for (b, wb) in w.iter().enumerate() {
                acc += wa * wb * g((a as f64 - 1.0) * h, (b as f64 - 1.0) * h)?;
            }
        }
        Ok(acc / h.powi(4))
    };
    let coarse = stencil(step)?;
    let fine = stencil(step / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// `|-D_q c(q, y) + D_q c(q', y)| / (|q - q'| |D_q c(q', y)|)` for the
/// transformed cost of `chart`; zero when `q = q'`.
pub fn slope_lipschitz_check(spec: &ProductSpec, chart: &QChart, q: &[f64], q_ref: &[f64], y: &ProductPoint) -> Result<f64> {
    let dq: f64 = q.iter().zip(q_ref).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dq == 0.0 {
        return Ok(0.0);
    }
    let a = chart.slope(spec, q, y)?;
    let b = chart.slope(spec, q_ref, y)?;
    let num: f64 = a.iter().zip(&b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::invalid("reference slope vanishes"));
    }
    Ok(num / (dq * den))
}

/// `[-c(x, ybar) + c(x, xbar)] - [-c(-xbar, ybar) + c(-xbar, xbar)]` on one
/// factor; nonpositive, vanishing at `ybar = xbar`.
pub fn antipodal_domination_gap(factor: &Factor, x: &SpherePoint, xbar: &SpherePoint, ybar: &SpherePoint) -> f64 {
    let c = |a: &SpherePoint, b: &SpherePoint| factor.profile.f(factor.sphere.distance(a, b));
    let anti = xbar.antipode();
    (-c(x, ybar) + c(x, xbar)) - (-c(&anti, ybar) + c(&anti, xbar))
}
