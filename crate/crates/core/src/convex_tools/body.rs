use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite point set standing for its convex hull.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloudBody {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl PointCloudBody {
    /// Fails with `DegenerateBody` unless the affine hull is full-dimensional.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(|p| p.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::DegenerateBody("empty point cloud".into()));
        }
        if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("points must be finite and share one dimension"));
        }
        let body = Self { dim, points };
        if body.affine_rank() < dim {
            return Err(Error::DegenerateBody(format!(
                "affine hull has dimension {} < {dim}",
                body.affine_rank()
            )));
        }
        Ok(body)
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.points.len() as f64;
        (0..self.dim)
            .map(|k| self.points.iter().map(|p| p[k]).sum::<f64>() / n)
            .collect()
    }

    pub fn scale(&self) -> f64 {
        let c = self.centroid();
        self.points
            .iter()
            .map(|p| p.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn affine_rank(&self) -> usize {
        let c = self.centroid();
        let m = DMatrix::from_fn(self.points.len(), self.dim, |i, k| self.points[i][k] - c[k]);
        let tol = 1e-10 * self.scale().max(f64::MIN_POSITIVE);
        m.rank(tol)
    }

    /// Image under `x -> A x + b`.
    pub fn mapped(&self, map: &AffineMap) -> Result<Self> {
        Self::new(self.points.iter().map(|p| map.apply(p)).collect())
    }
}

/// `x -> matrix x + offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x) + &self.offset).as_slice().to_vec()
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let inv = self
            .matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateBody("singular affine map".into()))?;
        let offset = -(&inv * &self.offset);
        Ok(AffineMap { matrix: inv, offset })
    }

    pub fn det(&self) -> f64 {
        self.matrix.determinant()
    }
}
