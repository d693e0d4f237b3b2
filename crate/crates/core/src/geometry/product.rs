use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::profile::CostProfile;
use super::sphere::{SpherePoint, SphereSpec, CUT_GUARD};
use super::vec::{dot, norm};
use crate::error::{Error, Result};

/// One sphere factor together with its radial cost profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Factor {
    pub sphere: SphereSpec,
    #[serde(default)]
    pub profile: CostProfile,
}

impl Factor {
    pub fn new(dim: usize, radius: f64, profile: CostProfile) -> Self {
        Self {
            sphere: SphereSpec { dim, radius },
            profile,
        }
    }

    pub fn quadratic(dim: usize, radius: f64) -> Self {
        Self::new(dim, radius, CostProfile::Quadratic)
    }

    /// `|p|` at which the c-exponential of this factor reaches the antipode.
    pub fn domain_radius(&self) -> f64 {
        self.profile.f_prime(self.sphere.diameter())
    }
}

/// Product of round spheres with the tensor cost `c = sum_i f_i(d_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductSpec {
    pub factors: Vec<Factor>,
}

/// Point of a product manifold, one embedded block per factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProductPoint {
    pub blocks: Vec<SpherePoint>,
}

/// Cotangent vector as ambient blocks, each orthogonal to the matching block
/// of the base point it is attached to. The base is passed alongside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Covector {
    pub blocks: Vec<Vec<f64>>,
}

impl ProductPoint {
    pub fn new(blocks: Vec<SpherePoint>) -> Self {
        Self { blocks }
    }

    pub fn antipode(&self) -> ProductPoint {
        ProductPoint::new(self.blocks.iter().map(SpherePoint::antipode).collect())
    }

    /// Copy with block `i` replaced.
    pub fn with_block(&self, i: usize, block: SpherePoint) -> ProductPoint {
        let mut p = self.clone();
        p.blocks[i] = block;
        p
    }

    /// All embedded coordinates concatenated.
    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.0.iter().copied()).collect()
    }
}

impl Covector {
    pub fn zeros(spec: &ProductSpec) -> Self {
        Self {
            blocks: spec.factors.iter().map(|f| vec![0.0; f.sphere.ambient()]).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| dot(b, b)).sum::<f64>().sqrt()
    }

    pub fn block_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| norm(b)).collect()
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Covector, b: f64) -> Covector {
        Covector {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(u, v)| u.iter().zip(v).map(|(x, y)| a * x + b * y).collect())
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Covector {
        Covector {
            blocks: self.blocks.iter().map(|b| b.iter().map(|v| v * s).collect()).collect(),
        }
    }

    pub fn dot(&self, other: &Covector) -> f64 {
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| dot(a, b)).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }
}

impl ProductSpec {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let s = Self { factors };
        s.validate()?;
        Ok(s)
    }

    /// Product of unit spheres with quadratic cost.
    pub fn unit_quadratic(dims: &[usize]) -> Self {
        Self {
            factors: dims.iter().map(|&d| Factor::quadratic(d, 1.0)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::invalid("product needs at least one factor"));
        }
        for f in &self.factors {
            f.sphere.validate()?;
            f.profile.validate(f.sphere.radius)?;
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    /// Total manifold dimension.
    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.sphere.dim).sum()
    }

    /// Offsets of each factor inside frame coordinates of length [`dim`](Self::dim).
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.k());
        let mut acc = 0;
        for f in &self.factors {
            out.push(acc);
            acc += f.sphere.dim;
        }
        out
    }

    pub fn volume(&self) -> f64 {
        self.factors.iter().map(|f| f.sphere.volume()).product()
    }

    pub fn min_diameter(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| f.sphere.diameter())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_quadratic(&self) -> bool {
        self.factors.iter().all(|f| f.profile == CostProfile::Quadratic)
    }

    pub fn label(&self) -> String {
        self.factors
            .iter()
            .map(|f| {
                let r = f.sphere.radius;
                if r == 1.0 {
                    format!("S{}", f.sphere.dim)
                } else {
                    format!("S{}(r={})", f.sphere.dim, r)
                }
            })
            .collect::<Vec<_>>()
            .join("xS")
            .replace("xSS", "xS")
    }

    pub fn point(&self, blocks: Vec<Vec<f64>>) -> Result<ProductPoint> {
        if blocks.len() != self.k() {
            return Err(Error::invalid(format!("point has {} blocks, expected {}", blocks.len(), self.k())));
        }
        let blocks = self
            .factors
            .iter()
            .zip(blocks)
            .map(|(f, b)| f.sphere.point(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductPoint::new(blocks))
    }

    pub fn check_point(&self, x: &ProductPoint) -> Result<()> {
        if x.blocks.len() != self.k() {
            return Err(Error::invalid("point block count mismatch"));
        }
        for (f, b) in self.factors.iter().zip(&x.blocks) {
            f.sphere.check_point(b)?;
        }
        Ok(())
    }

    pub fn check_covector(&self, x: &ProductPoint, p: &Covector) -> Result<()> {
        if p.blocks.len() != self.k() {
            return Err(Error::invalid("covector block count mismatch"));
        }
        for (i, (b, xb)) in p.blocks.iter().zip(&x.blocks).enumerate() {
            if b.len() != xb.0.len() {
                return Err(Error::invalid(format!("covector block {i} has wrong length")));
            }
            let r = self.factors[i].sphere.radius;
            if dot(b, &xb.0).abs() > 1e-10 * r * (1.0 + norm(b)) {
                return Err(Error::invalid(format!("covector block {i} is not tangent")));
            }
        }
        Ok(())
    }

    pub fn factor_distances(&self, x: &ProductPoint, y: &ProductPoint) -> Vec<f64> {
        self.factors
            .iter()
            .zip(x.blocks.iter().zip(&y.blocks))
            .map(|(f, (a, b))| f.sphere.distance(a, b))
            .collect()
    }

    /// Riemannian product distance.
    pub fn distance(&self, x: &ProductPoint, y: &ProductPoint) -> f64 {
        self.factor_distances(x, y).iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    #[inline]
    pub fn factor_cost(&self, i: usize, a: &SpherePoint, b: &SpherePoint) -> f64 {
        let f = &self.factors[i];
        f.profile.f(f.sphere.distance(a, b))
    }

    /// Tensor cost `sum_i f_i(dist_i(x^i, y^i))`.
    #[inline]
    pub fn cost(&self, x: &ProductPoint, y: &ProductPoint) -> f64 {
        self.factors
            .iter()
            .zip(x.blocks.iter().zip(&y.blocks))
            .map(|(f, (a, b))| f.profile.f(f.sphere.distance(a, b)))
            .sum()
    }

    /// `-D_x c(x, y)` with the default cut guard.
    pub fn cost_grad_x(&self, x: &ProductPoint, y: &ProductPoint) -> Result<Covector> {
        self.cost_grad_x_guarded(x, y, CUT_GUARD)
    }

    /// `-D_x c(x, y)`; `rel_guard` is relative to each radius.
    pub fn cost_grad_x_guarded(&self, x: &ProductPoint, y: &ProductPoint, rel_guard: f64) -> Result<Covector> {
        let mut blocks = Vec::with_capacity(self.k());
        for (i, f) in self.factors.iter().enumerate() {
            let s = &f.sphere;
            let (a, b) = (&x.blocks[i], &y.blocks[i]);
            let d = s.distance(a, b);
            let guard = rel_guard * s.radius;
            if d > s.diameter() - guard {
                return Err(Error::CutLocus {
                    factor: i,
                    distance: d,
                    guard,
                });
            }
            let v = s.log_unchecked(a, b, d);
            if d == 0.0 {
                blocks.push(v);
            } else {
                let k = f.profile.f_prime(d) / d;
                blocks.push(v.into_iter().map(|t| t * k).collect());
            }
        }
        Ok(Covector { blocks })
    }

    /// `-D_{xbar} c(x, xbar)` as a covector at `xbar`.
    pub fn cost_grad_xbar(&self, x: &ProductPoint, xbar: &ProductPoint) -> Result<Covector> {
        self.cost_grad_x(xbar, x)
    }

    /// c-exponential: the point `y` with `-D_x c(x, y) = p`.
    ///
    /// A block with `|p^i| = f_i'(pi r_i)` maps to the antipode of `x^i`.
    pub fn c_exp(&self, x: &ProductPoint, p: &Covector) -> Result<ProductPoint> {
        let mut blocks = Vec::with_capacity(self.k());
        for (i, f) in self.factors.iter().enumerate() {
            let s = &f.sphere;
            let pb = &p.blocks[i];
            let np = norm(pb);
            let limit = f.domain_radius();
            if np > limit * (1.0 + 1e-9) {
                return Err(Error::Domain {
                    factor: i,
                    norm: np,
                    limit,
                });
            }
            if np == 0.0 {
                blocks.push(x.blocks[i].clone());
                continue;
            }
            if np >= limit {
                blocks.push(x.blocks[i].antipode());
                continue;
            }
            let t = f.profile.f_prime_inverse(np).min(s.diameter());
            let v: Vec<f64> = pb.iter().map(|c| c * t / np).collect();
            blocks.push(s.exp(&x.blocks[i], &v));
        }
        Ok(ProductPoint::new(blocks))
    }

    /// Distance from `y` to the cut locus of `x`: `min_i (pi r_i - d_i)`.
    pub fn cut_distance(&self, x: &ProductPoint, y: &ProductPoint) -> f64 {
        self.factors
            .iter()
            .zip(x.blocks.iter().zip(&y.blocks))
            .map(|(f, (a, b))| (f.sphere.diameter() - f.sphere.distance(a, b)).max(0.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-factor orthonormal frames at `x`.
    pub fn frames(&self, x: &ProductPoint) -> Vec<Vec<Vec<f64>>> {
        self.factors
            .iter()
            .zip(&x.blocks)
            .map(|(f, b)| f.sphere.frame(b))
            .collect()
    }

    /// Frame coordinates (length `dim`) of a covector at `x`.
    pub fn to_frame(&self, x: &ProductPoint, p: &Covector) -> Vec<f64> {
        self.frames(x)
            .iter()
            .zip(&p.blocks)
            .flat_map(|(fr, b)| fr.iter().map(|e| dot(e, b)).collect::<Vec<_>>())
            .collect()
    }

    /// Covector at `x` with the given frame coordinates.
    pub fn from_frame(&self, x: &ProductPoint, coords: &[f64]) -> Covector {
        let frames = self.frames(x);
        let mut off = 0;
        let blocks = frames
            .iter()
            .zip(&self.factors)
            .map(|(fr, f)| {
                let mut b = vec![0.0; f.sphere.ambient()];
                for (a, e) in fr.iter().enumerate() {
                    for (bi, ei) in b.iter_mut().zip(e) {
                        *bi += coords[off + a] * ei;
                    }
                }
                off += f.sphere.dim;
                b
            })
            .collect();
        Covector { blocks }
    }

    /// Exponential map of the product metric.
    pub fn exp(&self, x: &ProductPoint, v: &Covector) -> ProductPoint {
        ProductPoint::new(
            self.factors
                .iter()
                .enumerate()
                .map(|(i, f)| f.sphere.exp(&x.blocks[i], &v.blocks[i]))
                .collect(),
        )
    }

    /// `-D_x D_{xbar} c(x, xbar)` in the frames at `x` (rows) and `xbar` (columns).
    ///
    /// The blocks are in closed form: with `u` the unit direction from `x` to
    /// `xbar` and `ubar` the unit direction at `xbar` pointing away from `x`,
    /// `w -> f''(d) <w, ubar> u + f'(d) / (r sin(d/r)) (w - <w, ubar> ubar)`.
    pub fn mixed_hessian(&self, x: &ProductPoint, xbar: &ProductPoint) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, off) in self.offsets().into_iter().enumerate() {
            let block = self.mixed_hessian_block(i, &x.blocks[i], &xbar.blocks[i])?;
            m.view_mut((off, off), block.shape()).copy_from(&block);
        }
        Ok(m)
    }

    pub(crate) fn mixed_hessian_block(&self, i: usize, a: &SpherePoint, b: &SpherePoint) -> Result<DMatrix<f64>> {
        let f = &self.factors[i];
        let s = &f.sphere;
        let n = s.dim;
        let d = s.distance(a, b);
        let guard = CUT_GUARD * s.radius;
        if d > s.diameter() - guard {
            return Err(Error::CutLocus {
                factor: i,
                distance: d,
                guard,
            });
        }
        let ea = s.frame(a);
        let eb = s.frame(b);
        let mut m = DMatrix::zeros(n, n);
        if d < 1e-8 * s.radius {
            let c = f.profile.f_second(0.0);
            for r in 0..n {
                for col in 0..n {
                    m[(r, col)] = c * dot(&ea[r], &eb[col]);
                }
            }
            return Ok(m);
        }
        let u: Vec<f64> = s.log_unchecked(a, b, d).iter().map(|v| v / d).collect();
        let ub: Vec<f64> = s.log_unchecked(b, a, d).iter().map(|v| -v / d).collect();
        let f2 = f.profile.f_second(d);
        let kappa = f.profile.f_prime(d) / (s.radius * (d / s.radius).sin());
        for col in 0..n {
            let w = &eb[col];
            let wu = dot(w, &ub);
            let img: Vec<f64> = (0..s.ambient())
                .map(|k| f2 * wu * u[k] + kappa * (w[k] - wu * ub[k]))
                .collect();
            for r in 0..n {
                m[(r, col)] = dot(&ea[r], &img);
            }
        }
        Ok(m)
    }

    /// Determinant of [`mixed_hessian`](Self::mixed_hessian) from the per-factor
    /// closed form `f''(d) (f'(d) / (r sin(d/r)))^(n-1)`.
    pub fn mixed_hessian_det(&self, x: &ProductPoint, xbar: &ProductPoint) -> Result<f64> {
        let mut det = 1.0;
        for (i, f) in self.factors.iter().enumerate() {
            let s = &f.sphere;
            let d = s.distance(&x.blocks[i], &xbar.blocks[i]);
            let guard = CUT_GUARD * s.radius;
            if d > s.diameter() - guard {
                return Err(Error::CutLocus {
                    factor: i,
                    distance: d,
                    guard,
                });
            }
            let kappa = if d < 1e-8 * s.radius {
                f.profile.f_second(0.0)
            } else {
                f.profile.f_prime(d) / (s.radius * (d / s.radius).sin())
            };
            det *= f.profile.f_second(d) * kappa.powi(s.dim as i32 - 1);
        }
        Ok(det)
    }

    /// Central-difference mixed Hessian with one Richardson pass. `rel_step` is
    /// relative to each radius.
    pub fn mixed_hessian_fd(&self, x: &ProductPoint, xbar: &ProductPoint, rel_step: f64) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let ex = self.frames(x);
        let eb = self.frames(xbar);
        let mut dirs_x = Vec::with_capacity(n);
        let mut dirs_b = Vec::with_capacity(n);
        for (i, f) in self.factors.iter().enumerate() {
            for a in 0..f.sphere.dim {
                dirs_x.push((i, ex[i][a].clone(), f.sphere.radius));
                dirs_b.push((i, eb[i][a].clone(), f.sphere.radius));
            }
        }
        let guard = self.cut_distance(x, xbar);
        if guard <= CUT_GUARD * self.min_diameter() {
            return Err(Error::CutLocus {
                factor: 0,
                distance: guard,
                guard: CUT_GUARD,
            });
        }
        let mut m = DMatrix::zeros(n, n);
        for (r, (fi, ux, rx)) in dirs_x.iter().enumerate() {
            for (c, (fj, vb, rb)) in dirs_b.iter().enumerate() {
                let g = |s: f64, t: f64| {
                    let mut px = x.clone();
                    let sv: Vec<f64> = ux.iter().map(|v| v * s).collect();
                    px.blocks[*fi] = self.factors[*fi].sphere.exp(&x.blocks[*fi], &sv);
                    let mut pb = xbar.clone();
                    let tv: Vec<f64> = vb.iter().map(|v| v * t).collect();
                    pb.blocks[*fj] = self.factors[*fj].sphere.exp(&xbar.blocks[*fj], &tv);
                    -self.cost(&px, &pb)
                };
                let h = rel_step * rx.max(*rb);
                let stencil = |h: f64| (g(h, h) - g(h, -h) - g(-h, h) + g(-h, -h)) / (4.0 * h * h);
                let coarse = stencil(h);
                let fine = stencil(h / 2.0);
                m[(r, c)] = (4.0 * fine - coarse) / 3.0;
            }
        }
        Ok(m)
    }

    /// Affine map `p -> M p + eta0` taking frame coordinates `p` at `ybar0`
    /// (a slope of the transformed cost in the chart `q = -D_{xbar} c(., ybar0)`)
    /// to the covector at `x0` with the same c-exponential image.
    pub fn covector_transfer(&self, x0: &ProductPoint, ybar0: &ProductPoint, p: &[f64]) -> Result<Covector> {
        let m = self.mixed_hessian(x0, ybar0)?;
        let eta0 = self.cost_grad_x(x0, ybar0)?;
        let pv = nalgebra::DVector::from_column_slice(p);
        let shift = &m * pv;
        let mut coords = self.to_frame(x0, &eta0);
        for (c, s) in coords.iter_mut().zip(shift.iter()) {
            *c += s;
        }
        Ok(self.from_frame(x0, &coords))
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ProductPoint {
        ProductPoint::new(self.factors.iter().map(|f| f.sphere.sample_uniform(rng)).collect())
    }

    /// Uniform tangent vector with each block of length at most `radii[i]`.
    pub fn sample_tangent_ball<R: Rng + ?Sized>(&self, x: &ProductPoint, radii: &[f64], rng: &mut R) -> Covector {
        let blocks = self
            .factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let d = f.sphere.sample_direction(&x.blocks[i], rng);
                let n = f.sphere.dim as f64;
                let r = radii[i] * rng.gen::<f64>().powf(1.0 / n);
                d.into_iter().map(|v| v * r).collect()
            })
            .collect();
        Covector { blocks }
    }

    /// Uniform covector in the c-exponential domain, scaled by `fill <= 1`.
    pub fn sample_domain_covector<R: Rng + ?Sized>(&self, x: &ProductPoint, fill: f64, rng: &mut R) -> Covector {
        let radii: Vec<f64> = self.factors.iter().map(|f| f.domain_radius() * fill).collect();
        self.sample_tangent_ball(x, &radii, rng)
    }
}
