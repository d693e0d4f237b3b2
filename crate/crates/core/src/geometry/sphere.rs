use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::vec::{dist, dot, norm, sum_norm};
use crate::error::{Error, Result};

/// Relative cut-locus guard used by `log` and cost gradients.
pub const CUT_GUARD: f64 = 1e-9;

/// Round sphere `S^n_r` embedded in `R^{n+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSpec {
    pub dim: usize,
    pub radius: f64,
}

/// Point of a sphere as an embedded vector of norm `radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpherePoint(pub Vec<f64>);

impl SpherePoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn antipode(&self) -> SpherePoint {
        SpherePoint(self.0.iter().map(|v| -v).collect())
    }
}

impl SphereSpec {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        let s = Self { dim, radius };
        s.validate()?;
        Ok(s)
    }

    pub fn unit(dim: usize) -> Self {
        Self { dim, radius: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("sphere dimension must be at least 1"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid(format!("sphere radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }

    pub fn ambient(&self) -> usize {
        self.dim + 1
    }

    /// Maximal geodesic distance `pi r`.
    pub fn diameter(&self) -> f64 {
        PI * self.radius
    }

    /// Builds a point by rescaling an arbitrary nonzero vector onto the sphere.
    pub fn point(&self, coords: Vec<f64>) -> Result<SpherePoint> {
        if coords.len() != self.ambient() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, sphere S^{} needs {}",
                coords.len(),
                self.dim,
                self.ambient()
            )));
        }
        let n = norm(&coords);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("cannot project the zero vector onto a sphere"));
        }
        let s = self.radius / n;
        Ok(SpherePoint(coords.into_iter().map(|v| v * s).collect()))
    }

    pub fn check_point(&self, x: &SpherePoint) -> Result<()> {
        if x.0.len() != self.ambient() {
            return Err(Error::invalid("point dimension mismatch"));
        }
        let n = norm(&x.0);
        if (n - self.radius).abs() > 1e-12 * self.radius.max(1.0) * 10.0 {
            return Err(Error::invalid(format!("point norm {n} differs from radius {}", self.radius)));
        }
        Ok(())
    }

    /// Great-circle distance, computed from chord lengths for accuracy at both
    /// ends of `[0, pi r]`.
    #[inline]
    pub fn distance(&self, x: &SpherePoint, y: &SpherePoint) -> f64 {
        let r = self.radius;
        let a = dist(&x.0, &y.0);
        let b = sum_norm(&x.0, &y.0);
        if a <= b {
            2.0 * r * (a / (2.0 * r)).min(1.0).asin()
        } else {
            PI * r - 2.0 * r * (b / (2.0 * r)).min(1.0).asin()
        }
    }

    /// Riemannian exponential map along `v` tangent at `x`.
    pub fn exp(&self, x: &SpherePoint, v: &[f64]) -> SpherePoint {
        let t = norm(v);
        if t == 0.0 {
            return x.clone();
        }
        let th = t / self.radius;
        let (s, c) = th.sin_cos();
        let k = s * self.radius / t;
        let mut y: Vec<f64> = x.0.iter().zip(v).map(|(xi, vi)| c * xi + k * vi).collect();
        let n = norm(&y);
        for yi in &mut y {
            *yi *= self.radius / n;
        }
        SpherePoint(y)
    }

    /// Inverse of [`exp`](Self::exp) with the default cut guard.
    pub fn log(&self, x: &SpherePoint, y: &SpherePoint) -> Result<Vec<f64>> {
        self.log_guarded(x, y, CUT_GUARD * self.radius, 0)
    }

    /// Inverse exponential map; errors when `y` is within `guard` of `-x`.
    pub fn log_guarded(&self, x: &SpherePoint, y: &SpherePoint, guard: f64, factor: usize) -> Result<Vec<f64>> {
        let d = self.distance(x, y);
        if d > self.diameter() - guard {
            return Err(Error::CutLocus {
                factor,
                distance: d,
                guard,
            });
        }
        Ok(self.log_unchecked(x, y, d))
    }

    /// `log` with a known distance; returns zero when the direction is undefined.
    pub(crate) fn log_unchecked(&self, x: &SpherePoint, y: &SpherePoint, d: f64) -> Vec<f64> {
        let s = dot(&x.0, &y.0) / (self.radius * self.radius);
        let w: Vec<f64> = y.0.iter().zip(&x.0).map(|(yi, xi)| yi - s * xi).collect();
        let nw = norm(&w);
        if nw == 0.0 || d == 0.0 {
            return vec![0.0; w.len()];
        }
        w.into_iter().map(|wi| wi * d / nw).collect()
    }

    /// Projection of an ambient vector onto the tangent space at `x`.
    pub fn project_tangent(&self, x: &SpherePoint, v: &[f64]) -> Vec<f64> {
        let s = dot(&x.0, v) / (self.radius * self.radius);
        v.iter().zip(&x.0).map(|(vi, xi)| vi - s * xi).collect()
    }

    /// Deterministic positively oriented orthonormal tangent frame at `x`.
    ///
    /// Gram-Schmidt on the canonical basis, dropping the basis vector most
    /// aligned with `x`; the last vector is flipped if needed so that
    /// `(x/r, e_1, ..., e_n)` has positive determinant.
    pub fn frame(&self, x: &SpherePoint) -> Vec<Vec<f64>> {
        let m = self.ambient();
        let u: Vec<f64> = x.0.iter().map(|v| v / self.radius).collect();
        let drop = (0..m)
            .max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()))
            .unwrap_or(0);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.dim);
        for k in (0..m).filter(|&k| k != drop) {
            let mut v = vec![0.0; m];
            v[k] = 1.0;
            for _ in 0..2 {
                let s = dot(&u, &v);
                for (vi, ui) in v.iter_mut().zip(&u) {
                    *vi -= s * ui;
                }
                for b in &basis {
                    let s = dot(b, &v);
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi -= s * bi;
                    }
                }
            }
            let n = norm(&v);
            basis.push(v.into_iter().map(|vi| vi / n).collect());
        }
        let mut full = nalgebra::DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            full[(i, 0)] = u[i];
            for (j, b) in basis.iter().enumerate() {
                full[(i, j + 1)] = b[i];
            }
        }
        if full.determinant() < 0.0 {
            if let Some(last) = basis.last_mut() {
                for v in last.iter_mut() {
                    *v = -*v;
                }
            }
        }
        basis
    }

    /// Riemannian volume of `S^n_r`.
    pub fn volume(&self) -> f64 {
        unit_sphere_area(self.dim) * self.radius.powi(self.dim as i32)
    }

    /// Volume of the geodesic ball of radius `rho` (clamped to `pi r`).
    pub fn cap_volume(&self, rho: f64) -> f64 {
        let theta = (rho / self.radius).clamp(0.0, PI);
        let n = self.dim;
        let r_n = self.radius.powi(n as i32);
        let angular = match n {
            1 => 2.0 * theta,
            2 => 2.0 * PI * (1.0 - theta.cos()),
            _ => unit_sphere_area(n - 1) * simpson(|t| t.sin().powi(n as i32 - 1), 0.0, theta, 2048),
        };
        angular * r_n
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> SpherePoint {
        loop {
            let v: Vec<f64> = (0..self.ambient()).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm(&v);
            if n > 1e-12 {
                return SpherePoint(v.into_iter().map(|x| x * self.radius / n).collect());
            }
        }
    }

    /// Uniform unit tangent direction at `x`.
    pub fn sample_direction<R: Rng + ?Sized>(&self, x: &SpherePoint, rng: &mut R) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..self.ambient()).map(|_| rng.sample(StandardNormal)).collect();
            let t = self.project_tangent(x, &v);
            let n = norm(&t);
            if n > 1e-9 {
                return t.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Uniform sample from the geodesic ball of radius `rho` about `center`.
    pub fn sample_cap<R: Rng + ?Sized>(&self, center: &SpherePoint, rho: f64, rng: &mut R) -> SpherePoint {
        let theta_max = (rho / self.radius).clamp(0.0, PI);
        if theta_max >= PI {
            return self.sample_uniform(rng);
        }
        let n = self.dim;
        let theta = match n {
            1 => rng.gen::<f64>() * theta_max,
            2 => {
                let c = 1.0 - rng.gen::<f64>() * (1.0 - theta_max.cos());
                c.clamp(-1.0, 1.0).acos()
            }
            _ => {
                let peak = if theta_max >= PI / 2.0 { 1.0 } else { theta_max.sin() };
                loop {
                    let t = rng.gen::<f64>() * theta_max;
                    if rng.gen::<f64>() * peak.powi(n as i32 - 1) <= t.sin().powi(n as i32 - 1) {
                        break t;
                    }
                }
            }
        };
        let dir = self.sample_direction(center, rng);
        let v: Vec<f64> = dir.iter().map(|d| d * theta * self.radius).collect();
        self.exp(center, &v)
    }
}

/// Area of the unit sphere `S^n` in `R^{n+1}`.
pub fn unit_sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * unit_sphere_area(n - 2),
    }
}

/// Volume of the unit ball in `R^n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        unit_sphere_area(n - 1) / n as f64
    }
}

pub(crate) fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}
