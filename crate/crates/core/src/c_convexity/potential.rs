use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Covector, ProductPoint, ProductSpec, SpherePoint};

/// A supporting piece of a c-convex function at a point: the target whose
/// cost support touches there, and the matching covector `-D_x c(x, target)`.
/// The covector is `None` when the target is antipodal in some factor.
#[derive(Clone, Debug)]
pub struct Support {
    pub target: ProductPoint,
    pub covector: Option<Covector>,
    /// How far this support lies below `phi(x)`; zero when it touches.
    pub gap: f64,
}

/// A c-convex function on a product of spheres.
pub trait CConvex: Send + Sync {
    fn spec(&self) -> &ProductSpec;

    fn value(&self, x: &ProductPoint) -> f64;

    /// Supports touching at `x`; their covectors generate `D phi(x)`.
    fn supports(&self, x: &ProductPoint) -> Vec<Support>;

    /// Supports within `slack` of the max; equal to [`supports`](Self::supports)
    /// for smooth potentials.
    fn supports_within(&self, x: &ProductPoint, slack: f64) -> Vec<Support> {
        let _ = slack;
        self.supports(x)
    }

    /// Generic cost scale used for relative tolerances.
    fn cost_scale(&self) -> f64 {
        self.spec().factors.iter().map(|f| f.profile.f(f.sphere.diameter())).sum()
    }
}

/// `phi(x) = max_j [-c(x, ybar_j) - psi_j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretePotential {
    pub spec: ProductSpec,
    pub atoms: Vec<ProductPoint>,
    pub weights: Vec<f64>,
    /// Relative tie tolerance for active sets.
    #[serde(default = "default_tie")]
    pub tie: f64,
}

fn default_tie() -> f64 {
    1e-9
}

impl DiscretePotential {
    pub fn new(spec: ProductSpec, atoms: Vec<ProductPoint>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("a discrete potential needs at least one atom"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::invalid(format!("{} atoms but {} weights", atoms.len(), weights.len())));
        }
        for a in &atoms {
            spec.check_point(a)?;
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        Ok(Self {
            spec,
            atoms,
            weights,
            tie: default_tie(),
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn tie_tolerance(&self) -> f64 {
        self.tie * self.cost_scale()
    }

    /// Value and indices within the tie tolerance of the max, ascending.
    pub fn evaluate(&self, x: &ProductPoint) -> (f64, Vec<usize>) {
        let scores: Vec<f64> = self
            .atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| -self.spec.cost(x, a) - w)
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = self.tie_tolerance();
        let active = scores
            .iter()
            .enumerate()
            .filter(|(_, s)| **s >= best - tol)
            .map(|(j, _)| j)
            .collect();
        (best, active)
    }

    /// Lowest active index (the deterministic map selection) and whether the
    /// point sits on a tie.
    pub fn argmax(&self, x: &ProductPoint) -> (usize, bool) {
        let (_, act) = self.evaluate(x);
        (act[0], act.len() > 1)
    }

    /// Same potential with weights shifted to sum to zero.
    pub fn gauge_fixed(&self) -> Self {
        let mean = self.weights.iter().sum::<f64>() / self.len() as f64;
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w -= mean);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        let checked = Self::new(p.spec.clone(), p.atoms.clone(), p.weights.clone())?;
        Ok(Self { tie: p.tie, ..checked })
    }
}

impl CConvex for DiscretePotential {
    fn spec(&self) -> &ProductSpec {
        &self.spec
    }

    fn value(&self, x: &ProductPoint) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| -self.spec.cost(x, a) - w)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn supports(&self, x: &ProductPoint) -> Vec<Support> {
        self.supports_within(x, self.tie_tolerance())
    }

    fn supports_within(&self, x: &ProductPoint, slack: f64) -> Vec<Support> {
        let scores: Vec<f64> = self
            .atoms
            .iter()
            .zip(&self.weights)
            .map(|(a, w)| -self.spec.cost(x, a) - w)
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slack = slack.max(self.tie_tolerance());
        (0..self.len())
            .filter(|&j| scores[j] >= best - slack)
            .map(|j| Support {
                target: self.atoms[j].clone(),
                covector: self.spec.cost_grad_x(x, &self.atoms[j]).ok(),
                gap: best - scores[j],
            })
            .collect()
    }
}

/// Per-factor piece of a [`TensorPotential`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorPotential {
    /// `-c^i(x^i, atom) - weight`: the factor maps entirely to `atom`.
    Support { atom: SpherePoint, weight: f64 },
    /// `-scale * c^i(x^i, anchor)` with `0 <= scale < 1`: the factor map
    /// moves each point the fraction `scale` of the way toward `anchor`.
    Scaled { anchor: SpherePoint, scale: f64 },
}

/// Sum of one-factor c-convex functions, `phi(x) = sum_i phi^i(x^i)`.
///
/// Smooth and c-convex for quadratic costs; the map `x -> c_exp(x, D phi(x))`
/// is a diffeomorphism on factors of kind [`FactorPotential::Scaled`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorPotential {
    pub spec: ProductSpec,
    pub factors: Vec<FactorPotential>,
}

impl TensorPotential {
    pub fn new(spec: ProductSpec, factors: Vec<FactorPotential>) -> Result<Self> {
        if factors.len() != spec.k() {
            return Err(Error::invalid("one factor potential per sphere factor"));
        }
        for (i, fp) in factors.iter().enumerate() {
            let s = &spec.factors[i].sphere;
            match fp {
                FactorPotential::Support { atom, weight } => {
                    s.check_point(atom)?;
                    if !weight.is_finite() {
                        return Err(Error::invalid("support weight must be finite"));
                    }
                }
                FactorPotential::Scaled { anchor, scale } => {
                    s.check_point(anchor)?;
                    if !(0.0..1.0).contains(scale) {
                        return Err(Error::invalid(format!("scale must lie in [0, 1), got {scale}")));
                    }
                }
            }
        }
        Ok(Self { spec, factors })
    }

    fn factor_value(&self, i: usize, a: &SpherePoint) -> f64 {
        match &self.factors[i] {
            FactorPotential::Support { atom, weight } => -self.spec.factor_cost(i, a, atom) - weight,
            FactorPotential::Scaled { anchor, scale } => -scale * self.spec.factor_cost(i, a, anchor),
        }
    }

    /// `D phi(x)`, or `None` if a factor sits at the antipode of its anchor.
    pub fn gradient(&self, x: &ProductPoint) -> Option<Covector> {
        let mut blocks = Vec::with_capacity(self.spec.k());
        for (i, fp) in self.factors.iter().enumerate() {
            let single = ProductSpec {
                factors: vec![self.spec.factors[i]],
            };
            let xi = ProductPoint::new(vec![x.blocks[i].clone()]);
            let (target, s) = match fp {
                FactorPotential::Support { atom, .. } => (atom, 1.0),
                FactorPotential::Scaled { anchor, scale } => (anchor, *scale),
            };
            if s == 0.0 {
                blocks.push(vec![0.0; x.blocks[i].0.len()]);
                continue;
            }
            let g = single.cost_grad_x(&xi, &ProductPoint::new(vec![target.clone()])).ok()?;
            blocks.push(g.blocks[0].iter().map(|v| v * s).collect());
        }
        Some(Covector { blocks })
    }

    /// The optimal map `x -> c_exp(x, D phi(x))`.
    pub fn map(&self, x: &ProductPoint) -> Option<ProductPoint> {
        let mut out = x.clone();
        for (i, fp) in self.factors.iter().enumerate() {
            if let FactorPotential::Support { atom, .. } = fp {
                out.blocks[i] = atom.clone();
            }
        }
        let g = self.gradient(x)?;
        let img = self.spec.c_exp(x, &g).ok()?;
        for (i, fp) in self.factors.iter().enumerate() {
            if let FactorPotential::Scaled { .. } = fp {
                out.blocks[i] = img.blocks[i].clone();
            }
        }
        Some(out)
    }

    /// `|det dT(x)|` by central differences in orthonormal frames.
    pub fn jacobian(&self, x: &ProductPoint, rel_step: f64) -> Option<f64> {
        if self.factors.iter().any(|f| matches!(f, FactorPotential::Support { .. })) {
            return Some(0.0);
        }
        let spec = &self.spec;
        let n = spec.dim();
        let tx = self.map(x)?;
        let frames = spec.frames(x);
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (i, f) in spec.factors.iter().enumerate() {
            let h = rel_step * f.sphere.radius;
            for e in &frames[i] {
                let mut v = Covector::zeros(spec);
                v.blocks[i] = e.iter().map(|c| c * h).collect();
                let plus = self.map(&spec.exp(x, &v))?;
                let minus = self.map(&spec.exp(x, &v.scaled(-1.0)))?;
                let lp = log_all(spec, &tx, &plus)?;
                let lm = log_all(spec, &tx, &minus)?;
                let d = lp.lincomb(1.0 / (2.0 * h), &lm, -1.0 / (2.0 * h));
                cols.push(spec.to_frame(&tx, &d));
            }
        }
        let m = nalgebra::DMatrix::from_fn(n, n, |r, c| cols[c][r]);
        Some(m.determinant().abs())
    }

    /// Closed-form Jacobian for quadratic costs:
    /// `prod_i (1 - t_i) (sin((1 - t_i) D_i / r_i) / sin(D_i / r_i))^(n_i - 1)`.
    pub fn jacobian_closed_form(&self, x: &ProductPoint) -> Option<f64> {
        if !self.spec.is_quadratic() {
            return None;
        }
        let mut j = 1.0;
        for (i, fp) in self.factors.iter().enumerate() {
            let s = &self.spec.factors[i].sphere;
            match fp {
                FactorPotential::Support { .. } => return Some(0.0),
                FactorPotential::Scaled { anchor, scale } => {
                    let d = s.distance(&x.blocks[i], anchor) / s.radius;
                    let t = *scale;
                    let tang = if d < 1e-12 { 1.0 - t } else { ((1.0 - t) * d).sin() / d.sin() };
                    j *= (1.0 - t) * tang.powi(s.dim as i32 - 1);
                }
            }
        }
        Some(j)
    }
}

fn log_all(spec: &ProductSpec, base: &ProductPoint, y: &ProductPoint) -> Option<Covector> {
    let mut blocks = Vec::with_capacity(spec.k());
    for (i, f) in spec.factors.iter().enumerate() {
        blocks.push(f.sphere.log(&base.blocks[i], &y.blocks[i]).ok()?);
    }
    Some(Covector { blocks })
}

impl CConvex for TensorPotential {
    fn spec(&self) -> &ProductSpec {
        &self.spec
    }

    fn value(&self, x: &ProductPoint) -> f64 {
        (0..self.spec.k()).map(|i| self.factor_value(i, &x.blocks[i])).sum()
    }

    fn supports(&self, x: &ProductPoint) -> Vec<Support> {
        match self.map(x) {
            Some(target) => {
                let covector = self.spec.cost_grad_x(x, &target).ok();
                vec![Support { target, covector, gap: 0.0 }]
            }
            None => Vec::new(),
        }
    }
}
