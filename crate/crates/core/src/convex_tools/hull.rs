use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::body::PointCloudBody;
use super::min_norm::hull_separates;
use crate::error::{Error, Result};

/// Simplicial facet with outward normal: interior satisfies `normal . x <= offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub vertices: Vec<usize>,
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Triangulated boundary of `co(points)` from beneath-beyond insertion.
#[derive(Clone, Debug)]
pub struct ConvexHull {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub facets: Vec<Facet>,
    pub interior: Vec<f64>,
    eps: f64,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit normal of the hyperplane through `d` points in `R^d` (cofactor form).
fn hyperplane(pts: &[&[f64]]) -> Option<(Vec<f64>, f64)> {
    let d = pts[0].len();
    let rows: Vec<Vec<f64>> = pts[1..].iter().map(|p| sub(p, pts[0])).collect();
    let mut normal = vec![0.0; d];
    for k in 0..d {
        let minor = DMatrix::from_fn(d - 1, d - 1, |i, j| rows[i][if j < k { j } else { j + 1 }]);
        let det = if d == 1 { 1.0 } else { minor.determinant() };
        normal[k] = if k % 2 == 0 { det } else { -det };
    }
    let len = dot(&normal, &normal).sqrt();
    if !(len > 0.0) {
        return None;
    }
    normal.iter_mut().for_each(|v| *v /= len);
    let offset = dot(&normal, pts[0]);
    Some((normal, offset))
}

fn simplex_volume(pts: &[&[f64]], apex: &[f64]) -> f64 {
    let d = apex.len();
    let m = DMatrix::from_fn(d, d, |i, j| pts[i][j] - apex[j]);
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    m.determinant().abs() / fact
}

impl ConvexHull {
    pub fn new(body: &PointCloudBody) -> Result<Self> {
        let d = body.dim;
        if d < 2 {
            return Err(Error::invalid("facet hulls need dimension >= 2; use hull_volume for intervals"));
        }
        let pts = &body.points;
        let eps = 1e-12 * body.scale().max(f64::MIN_POSITIVE);
        let start = initial_simplex(pts, eps)?;
        let interior: Vec<f64> = (0..d)
            .map(|k| start.iter().map(|&i| pts[i][k]).sum::<f64>() / (d + 1) as f64)
            .collect();
        let mut hull = Self {
            dim: d,
            points: pts.clone(),
            facets: Vec::new(),
            interior,
            eps,
        };
        for skip in 0..=d {
            let verts: Vec<usize> = start.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &i)| i).collect();
            hull.push_facet(verts)?;
        }
        let mut used = vec![false; pts.len()];
        start.iter().for_each(|&i| used[i] = true);
        // farthest-first insertion keeps the intermediate hulls well shaped
        let c = hull.interior.clone();
        let mut order: Vec<usize> = (0..pts.len()).filter(|&i| !used[i]).collect();
        order.sort_by(|&a, &b| {
            let da = dot(&sub(&pts[a], &c), &sub(&pts[a], &c));
            let db = dot(&sub(&pts[b], &c), &sub(&pts[b], &c));
            db.total_cmp(&da).then(a.cmp(&b))
        });
        for p in order {
            hull.insert(p)?;
        }
        Ok(hull)
    }

    fn push_facet(&mut self, mut verts: Vec<usize>) -> Result<()> {
        verts.sort_unstable();
        let refs: Vec<&[f64]> = verts.iter().map(|&i| self.points[i].as_slice()).collect();
        let (mut normal, mut offset) =
            hyperplane(&refs).ok_or_else(|| Error::DegenerateBody("flat facet during hull construction".into()))?;
        if dot(&normal, &self.interior) > offset {
            normal.iter_mut().for_each(|v| *v = -*v);
            offset = -offset;
        }
        self.facets.push(Facet {
            vertices: verts,
            normal,
            offset,
        });
        Ok(())
    }

    fn insert(&mut self, p: usize) -> Result<()> {
        let x = self.points[p].clone();
        let visible: Vec<bool> = self
            .facets
            .iter()
            .map(|f| dot(&f.normal, &x) - f.offset > self.eps)
            .collect();
        if !visible.iter().any(|v| *v) {
            return Ok(());
        }
        let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
        for (f, _) in self.facets.iter().zip(&visible).filter(|(_, v)| **v) {
            for skip in 0..f.vertices.len() {
                let r: Vec<usize> = f.vertices.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &v)| v).collect();
                *ridges.entry(r).or_insert(0) += 1;
            }
        }
        let mut horizon: Vec<Vec<usize>> = ridges.into_iter().filter(|(_, n)| *n == 1).map(|(r, _)| r).collect();
        horizon.sort();
        let mut kept = Vec::with_capacity(self.facets.len());
        for (f, v) in std::mem::take(&mut self.facets).into_iter().zip(visible) {
            if !v {
                kept.push(f);
            }
        }
        self.facets = kept;
        for mut r in horizon {
            r.push(p);
            self.push_facet(r)?;
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.facets
            .iter()
            .map(|f| {
                let refs: Vec<&[f64]> = f.vertices.iter().map(|&i| self.points[i].as_slice()).collect();
                simplex_volume(&refs, &self.interior)
            })
            .sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.facets.iter().all(|f| dot(&f.normal, x) <= f.offset + self.eps)
    }

    /// Merged facet inequalities `a . x <= b`, one per distinct hyperplane.
    pub fn inequalities(&self) -> Vec<(Vec<f64>, f64)> {
        let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
        for f in &self.facets {
            let dup = out.iter().any(|(a, b)| {
                (b - f.offset).abs() <= 1e-9 * (1.0 + b.abs()) && a.iter().zip(&f.normal).all(|(u, v)| (u - v).abs() <= 1e-9)
            });
            if !dup {
                out.push((f.normal.clone(), f.offset));
            }
        }
        out
    }

    /// Vertex indices that lie on some facet.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets.iter().flat_map(|f| f.vertices.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn initial_simplex(pts: &[Vec<f64>], eps: f64) -> Result<Vec<usize>> {
    let d = pts[0].len();
    let first = (0..pts.len())
        .min_by(|&a, &b| pts[a].partial_cmp(&pts[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    let mut chosen = vec![first];
    // greedily maximize the distance to the affine span of the chosen points
    while chosen.len() <= d {
        let base = &pts[chosen[0]];
        let span: Vec<Vec<f64>> = chosen[1..].iter().map(|&i| sub(&pts[i], base)).collect();
        let q = gram_schmidt(&span);
        let resid = |i: usize| {
            let mut v = sub(&pts[i], base);
            for e in &q {
                let c = dot(&v, e);
                v.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
            }
            dot(&v, &v).sqrt()
        };
        let (best, dist) = (0..pts.len())
            .map(|i| (i, resid(i)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .unwrap();
        if dist <= 1e3 * eps {
            return Err(Error::DegenerateBody("points are not affinely spanning".into()));
        }
        chosen.push(best);
    }
    Ok(chosen)
}

fn gram_schmidt(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for e in &q {
            let c = dot(&w, e);
            w.iter_mut().zip(e).for_each(|(a, b)| *a -= c * b);
        }
        let n = dot(&w, &w).sqrt();
        if n > 0.0 {
            q.push(w.into_iter().map(|a| a / n).collect());
        }
    }
    q
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullVolume {
    pub volume: f64,
    pub std_err: f64,
    pub method: VolumeMethod,
}

/// Largest dimension handled by facet enumeration.
pub const EXACT_MAX_DIM: usize = 6;

/// Volume of `co(body)`: exact up to dimension 6, Monte Carlo above.
pub fn hull_volume(body: &PointCloudBody) -> Result<HullVolume> {
    if body.dim == 1 {
        let lo = body.points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = body.points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        return Ok(HullVolume {
            volume: hi - lo,
            std_err: 0.0,
            method: VolumeMethod::Exact,
        });
    }
    if body.dim <= EXACT_MAX_DIM {
        return Ok(HullVolume {
            volume: ConvexHull::new(body)?.volume(),
            std_err: 0.0,
            method: VolumeMethod::Exact,
        });
    }
    hull_volume_mc(body, 20_000, 0)
}

/// Hit-or-miss estimate over the bounding box; a sample is outside when the
/// minimum-norm iteration certifies a separating hyperplane.
pub fn hull_volume_mc(body: &PointCloudBody, samples: usize, seed: u64) -> Result<HullVolume> {
    let d = body.dim;
    let lo: Vec<f64> = (0..d).map(|k| body.points.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|k| body.points.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let y: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
        if !hull_separates(&body.points, &y) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok(HullVolume {
        volume: p * box_vol,
        std_err: (p * (1.0 - p) / samples as f64).sqrt() * box_vol,
        method: VolumeMethod::MonteCarlo,
    })
}
