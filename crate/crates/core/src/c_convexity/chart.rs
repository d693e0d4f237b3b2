use super::potential::CConvex;
use crate::error::Result;
use crate::geometry::{ProductPoint, ProductSpec, QChart};

/// `q = -D_{xbar} c(x, ybar0)` in frame coordinates at `ybar0`.
pub fn to_q_chart(spec: &ProductSpec, ybar0: &ProductPoint, x: &ProductPoint) -> Result<Vec<f64>> {
    QChart::new(ybar0.clone()).to_q(spec, x)
}

/// `phi(x(q)) + c(x(q), ybar0)`; convex in `q` under convex DASM.
pub fn transformed_potential<P: CConvex + ?Sized>(phi: &P, chart: &QChart, q: &[f64]) -> Result<f64> {
    let x = chart.from_q(phi.spec(), q)?;
    Ok(phi.value(&x) + phi.spec().cost(&x, &chart.anchor))
}

/// `u((q1 + q2)/2) - (u(q1) + u(q2))/2` for the transformed potential `u`;
/// nonpositive when `u` is midpoint convex.
pub fn midpoint_convexity_gap<P: CConvex + ?Sized>(phi: &P, chart: &QChart, q1: &[f64], q2: &[f64]) -> Result<f64> {
    let mid: Vec<f64> = q1.iter().zip(q2).map(|(a, b)| 0.5 * (a + b)).collect();
    let um = transformed_potential(phi, chart, &mid)?;
    let u1 = transformed_potential(phi, chart, q1)?;
    let u2 = transformed_potential(phi, chart, q2)?;
    Ok(um - 0.5 * (u1 + u2))
}
