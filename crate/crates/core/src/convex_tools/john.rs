use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::body::{AffineMap, PointCloudBody};
use super::hull::ConvexHull;
use crate::error::{Error, Result};

/// Maximum-volume inscribed ellipsoid `L(B_1)` of a polytope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JohnEllipsoid {
    /// `L: u -> B u + c`, with `B_1 ⊂ L^{-1}(co body)`.
    pub map: AffineMap,
    /// Exact containment radii of `L^{-1}(co body)`.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Support-function estimates over random directions.
    pub sampled_inner: f64,
    pub sampled_outer: f64,
    pub newton_steps: usize,
}

impl JohnEllipsoid {
    pub fn ratio(&self) -> f64 {
        self.outer_radius / self.inner_radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JohnConfig {
    /// Duality-gap target of the barrier method on `log det`.
    pub tolerance: f64,
    pub directions: usize,
    pub seed: u64,
}

impl Default for JohnConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            directions: 4096,
            seed: 0,
        }
    }
}

pub fn john_ellipsoid(body: &PointCloudBody) -> Result<JohnEllipsoid> {
    john_ellipsoid_with(body, &JohnConfig::default())
}

/// Barrier method on `max log det B` s.t. `|B a_i| + a_i . c <= b_i`.
pub fn john_ellipsoid_with(body: &PointCloudBody, cfg: &JohnConfig) -> Result<JohnEllipsoid> {
    let d = body.dim;
    if d < 2 {
        return Err(Error::invalid("john_ellipsoid needs dimension >= 2"));
    }
    let hull = ConvexHull::new(body)?;
    let cons = hull.inequalities();
    let verts: Vec<Vec<f64>> = hull.vertices().into_iter().map(|i| body.points[i].clone()).collect();
    let m = d * (d + 1) / 2;
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|k| (k..d).map(move |l| (k, l))).collect();
    let nv = m + d;

    let centre: Vec<f64> = (0..d).map(|k| verts.iter().map(|v| v[k]).sum::<f64>() / verts.len() as f64).collect();
    let slack0 = cons
        .iter()
        .map(|(a, b)| b - a.iter().zip(&centre).map(|(x, y)| x * y).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    if !(slack0 > 0.0) {
        return Err(Error::DegenerateBody("vertex centroid is not interior".into()));
    }
    let mut z = vec![0.0; nv];
    for (p, (k, l)) in pairs.iter().enumerate() {
        if k == l {
            z[p] = 0.5 * slack0;
        }
    }
    z[m..].copy_from_slice(&centre);

    let unpack = |z: &[f64]| {
        let mut bm = DMatrix::<f64>::zeros(d, d);
        for (p, &(k, l)) in pairs.iter().enumerate() {
            bm[(k, l)] = z[p];
            bm[(l, k)] = z[p];
        }
        bm
    };
    // f = t (-log det B) - sum log g_i; None outside the domain
    let value = |z: &[f64], t: f64| -> Option<f64> {
        let bm = unpack(z);
        let chol = bm.clone().cholesky()?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mut bar = 0.0;
        for (a, b) in &cons {
            let av = DVector::from_column_slice(a);
            let g = b - a.iter().zip(&z[m..]).map(|(x, y)| x * y).sum::<f64>() - (&bm * &av).norm();
            if !(g > 0.0) {
                return None;
            }
            bar -= g.ln();
        }
        Some(-t * logdet + bar)
    };

    let mut t = 1.0;
    let mut steps = 0;
    let n_con = cons.len() as f64;
    loop {
        for _ in 0..100 {
            let bm = unpack(&z);
            let binv = bm.clone().try_inverse().ok_or_else(|| Error::DegenerateBody("singular ellipsoid".into()))?;
            let mut grad = DVector::<f64>::zeros(nv);
            let mut hess = DMatrix::<f64>::zeros(nv, nv);
            for (p, &(k, l)) in pairs.iter().enumerate() {
                grad[p] = -t * if k == l { binv[(k, k)] } else { 2.0 * binv[(k, l)] };
                for (q, &(r, s)) in pairs.iter().enumerate() {
                    // tr(B^-1 E_p B^-1 E_q) for symmetric basis matrices
                    let term = |a: usize, b: usize, c: usize, e: usize| binv[(b, c)] * binv[(e, a)];
                    let mut h = term(k, l, r, s);
                    if r != s {
                        h += term(k, l, s, r);
                    }
                    if k != l {
                        h += term(l, k, r, s);
                        if r != s {
                            h += term(l, k, s, r);
                        }
                    }
                    hess[(p, q)] = t * h;
                }
            }
            for (a, b) in &cons {
                let av = DVector::from_column_slice(a);
                let u = &bm * &av;
                let un = u.norm();
                let g = b - a.iter().zip(&z[m..]).map(|(x, y)| x * y).sum::<f64>() - un;
                let mut jac = DMatrix::<f64>::zeros(d, m);
                for (p, &(k, l)) in pairs.iter().enumerate() {
                    if k == l {
                        jac[(k, p)] = a[k];
                    } else {
                        jac[(k, p)] = a[l];
                        jac[(l, p)] = a[k];
                    }
                }
                let mut dg = DVector::<f64>::zeros(nv);
                let du = jac.transpose() * &u / un;
                for p in 0..m {
                    dg[p] = -du[p];
                }
                for k in 0..d {
                    dg[m + k] = -a[k];
                }
                grad -= &dg / g;
                hess += &dg * dg.transpose() / (g * g);
                let curv = DMatrix::<f64>::identity(d, d) / un - &u * u.transpose() / (un * un * un);
                let hb = jac.transpose() * curv * &jac / g;
                for p in 0..m {
                    for q in 0..m {
                        hess[(p, q)] += hb[(p, q)];
                    }
                }
            }
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => return Err(Error::DegenerateBody("indefinite barrier Hessian".into())),
            };
            let decrement = -grad.dot(&step);
            if decrement <= 1e-14 {
                break;
            }
            let f0 = value(&z, t).expect("iterate stays feasible");
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = z.iter().zip(step.iter()).map(|(a, b)| a + s * b).collect();
                if let Some(f) = value(&cand, t) {
                    if f <= f0 - 0.25 * s * decrement {
                        z = cand;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            steps += 1;
            if !accepted {
                break;
            }
        }
        if n_con / t < cfg.tolerance {
            break;
        }
        t *= 10.0;
    }

    let bm = unpack(&z);
    let c = DVector::from_column_slice(&z[m..]);
    let map = AffineMap {
        matrix: bm.clone(),
        offset: c.clone(),
    };
    let inv = map.inverse()?;
    let inner_radius = cons
        .iter()
        .map(|(a, b)| {
            let av = DVector::from_column_slice(a);
            (b - av.dot(&c)) / (&bm * &av).norm()
        })
        .fold(f64::INFINITY, f64::min);
    let pulled: Vec<DVector<f64>> = verts.iter().map(|v| DVector::from_vec(inv.apply(v))).collect();
    let outer_radius = pulled.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampled_inner = f64::INFINITY;
    let mut sampled_outer: f64 = 0.0;
    for _ in 0..cfg.directions {
        let u = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let u = &u / u.norm();
        let h = pulled.iter().map(|v| v.dot(&u)).fold(f64::NEG_INFINITY, f64::max);
        sampled_inner = sampled_inner.min(h);
        sampled_outer = sampled_outer.max(h);
    }
    Ok(JohnEllipsoid {
        map,
        inner_radius,
        outer_radius,
        sampled_inner,
        sampled_outer,
        newton_steps: steps,
    })
}
