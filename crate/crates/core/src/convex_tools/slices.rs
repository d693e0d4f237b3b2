use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::body::PointCloudBody;
use super::hull::{hull_volume, ConvexHull};
use super::min_norm::hull_distance;
use crate::error::{Error, Result};

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Vertices of `co(body) ∩ {x_i = v_i for (i, v) in fixed}`, in the free
/// coordinates (ascending index order).
pub fn slice_points(body: &PointCloudBody, fixed: &[(usize, f64)]) -> Result<Vec<Vec<f64>>> {
    let d = body.dim;
    let m = fixed.len();
    if m == 0 || m >= d {
        return Err(Error::invalid("a slice must fix between 1 and d-1 coordinates"));
    }
    let free: Vec<usize> = (0..d).filter(|k| fixed.iter().all(|(i, _)| i != k)).collect();
    let eps = 1e-12 * body.scale();
    let mut cands: Vec<Vec<f64>> = Vec::new();
    let mut push = |x: Vec<f64>| {
        cands.push(free.iter().map(|&k| x[k]).collect());
    };
    for p in &body.points {
        if fixed.iter().all(|(i, v)| (p[*i] - v).abs() <= eps) {
            push(p.clone());
        }
    }
    if d == 1 {
        unreachable!("m < d excludes d = 1");
    }
    // every m-face of the triangulated boundary meets the subspace in at most one point
    let hull = ConvexHull::new(body)?;
    let picks = subsets(d, m + 1);
    let mut seen = std::collections::HashSet::new();
    for f in &hull.facets {
        for s in &picks {
            let mut face: Vec<usize> = s.iter().map(|&k| f.vertices[k]).collect();
            face.sort_unstable();
            if !seen.insert(face.clone()) {
                continue;
            }
            let a = DMatrix::from_fn(m + 1, m + 1, |r, c| {
                if r < m {
                    body.points[face[c]][fixed[r].0]
                } else {
                    1.0
                }
            });
            let rhs = DVector::from_fn(m + 1, |r, _| if r < m { fixed[r].1 } else { 1.0 });
            let Some(lam) = a.lu().solve(&rhs) else { continue };
            if lam.iter().any(|l| !l.is_finite() || *l < -1e-12) {
                continue;
            }
            let mut x = vec![0.0; d];
            for (c, &vi) in face.iter().enumerate() {
                for k in 0..d {
                    x[k] += lam[c] * body.points[vi][k];
                }
            }
            if fixed.iter().all(|(i, v)| (x[*i] - v).abs() <= 1e-9 * (1.0 + v.abs())) {
                push(x);
            }
        }
    }
    if cands.is_empty() {
        return Err(Error::DegenerateBody("slice misses the body".into()));
    }
    Ok(cands)
}

/// Volume of the slice, zero when it is lower dimensional.
pub fn slice_volume(body: &PointCloudBody, fixed: &[(usize, f64)]) -> Result<f64> {
    let pts = slice_points(body, fixed)?;
    match PointCloudBody::new(pts) {
        Ok(b) => Ok(hull_volume(&b)?.volume),
        Err(Error::DegenerateBody(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Orthogonal projection onto the listed coordinates.
pub fn projection(body: &PointCloudBody, coords: &[usize]) -> Result<PointCloudBody> {
    PointCloudBody::new(body.points.iter().map(|p| coords.iter().map(|&k| p[k]).collect()).collect())
}

/// `H(S') H(pi''(S)) / |S|` for `S ⊂ R^{n'} x R^{n''}` sliced at `x'' = slice`;
/// the last `slice.len()` coordinates form the second factor.
pub fn slice_inequality_residual(body: &PointCloudBody, slice: &[f64]) -> Result<f64> {
    let d = body.dim;
    let n2 = slice.len();
    if n2 == 0 || n2 >= d {
        return Err(Error::invalid("second factor must have dimension between 1 and d-1"));
    }
    let second: Vec<usize> = (d - n2..d).collect();
    let proj = projection(body, &second)?;
    if hull_distance(&proj.points, slice) > 1e-9 * proj.scale() {
        return Err(Error::invalid("slice coordinate lies outside the projection of the body"));
    }
    let fixed: Vec<(usize, f64)> = second.iter().copied().zip(slice.iter().copied()).collect();
    let s1 = slice_volume(body, &fixed)?;
    let p2 = hull_volume(&proj)?.volume;
    let vol = hull_volume(body)?.volume;
    Ok(s1 * p2 / vol)
}

/// `{s^1} x .. x U_i x .. x {s^k}`: block `block` ranges over `co(cloud)`,
/// the other blocks are fixed to `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabSet {
    pub block: usize,
    pub base: Vec<f64>,
    pub cloud: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiSlice {
    pub ratio: f64,
    pub hull_volume: f64,
    pub factor_volumes: Vec<f64>,
    /// `H(S_i^b) k^{n_i} / H(S_i)` at the barycentre slices; all `>= 1`.
    pub dilation_margins: Vec<f64>,
}

/// `prod H(S_i) / |co(S_1, .., S_k)|` for slab sets over blocks of sizes `dims`.
pub fn multi_slice_residual(dims: &[usize], sets: &[SlabSet]) -> Result<MultiSlice> {
    let k = dims.len();
    if sets.len() != k {
        return Err(Error::invalid("need one slab set per block"));
    }
    let n: usize = dims.iter().sum();
    let offs: Vec<usize> = dims.iter().scan(0, |acc, d| {
        let o = *acc;
        *acc += d;
        Some(o)
    }).collect();
    let range = |i: usize| offs[i]..offs[i] + dims[i];
    let mut all = Vec::new();
    let mut factor_volumes = Vec::with_capacity(k);
    for (i, s) in sets.iter().enumerate() {
        if s.block != i || s.base.len() != n || s.cloud.iter().any(|c| c.len() != dims[i]) {
            return Err(Error::invalid(format!("slab set {i} does not match the block layout")));
        }
        let own: Vec<f64> = s.base[range(i)].to_vec();
        let u = PointCloudBody::new(s.cloud.clone())?;
        if hull_distance(&u.points, &own) > 1e-9 * u.scale() {
            return Err(Error::invalid(format!("slab set {i}: base point is outside its own block set")));
        }
        factor_volumes.push(hull_volume(&u)?.volume);
        for c in &s.cloud {
            let mut x = s.base.clone();
            x[range(i)].copy_from_slice(c);
            all.push(x);
        }
    }
    let co = PointCloudBody::new(all)?;
    let vol = hull_volume(&co)?.volume;
    let ratio = factor_volumes.iter().product::<f64>() / vol;
    let bary: Vec<f64> = (0..n).map(|c| sets.iter().map(|s| s.base[c]).sum::<f64>() / k as f64).collect();
    let mut dilation_margins = Vec::with_capacity(k);
    if k > 1 {
        for i in 0..k {
            let fixed: Vec<(usize, f64)> = (0..n).filter(|c| !range(i).contains(c)).map(|c| (c, bary[c])).collect();
            let sb = slice_volume(&co, &fixed)?;
            dilation_margins.push(sb * (k as f64).powi(dims[i] as i32) / factor_volumes[i]);
        }
    } else {
        dilation_margins.push(1.0);
    }
    Ok(MultiSlice {
        ratio,
        hull_volume: vol,
        factor_volumes,
        dilation_margins,
    })
}
