use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::potential::{CConvex, DiscretePotential};
use crate::error::{Error, Result};
use crate::geometry::{Covector, ProductPoint, ProductSpec};

/// Sampled c-subdifferential at a point: the touching targets plus
/// c-exponential images of random points of the hull of their covectors.
#[derive(Clone, Debug)]
pub struct Subdifferential {
    pub base: ProductPoint,
    pub targets: Vec<ProductPoint>,
    pub hull: Vec<ProductPoint>,
}

impl Subdifferential {
    pub fn all(&self) -> impl Iterator<Item = &ProductPoint> {
        self.targets.iter().chain(&self.hull)
    }
}

/// Default number of hull samples.
pub const HULL_SAMPLES: usize = 64;

/// Random convex combination of covectors with flat Dirichlet weights.
pub fn hull_sample(gens: &[Covector], rng: &mut ChaCha8Rng) -> Covector {
    let w: Vec<f64> = (0..gens.len()).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    let mut acc = gens[0].scaled(w[0] / total);
    for (g, wk) in gens.iter().zip(&w).skip(1) {
        acc = acc.lincomb(1.0, g, wk / total);
    }
    acc
}

/// `dphi^c(x)` as targets plus `hull_samples` images of the hull of the
/// supporting covectors (the first hull sample is always the barycentre).
pub fn c_subdifferential<P: CConvex + ?Sized>(
    phi: &P,
    x: &ProductPoint,
    hull_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Subdifferential> {
    let spec = phi.spec();
    let sup = phi.supports(x);
    let targets: Vec<ProductPoint> = sup.iter().map(|s| s.target.clone()).collect();
    let mut hull = Vec::new();
    if sup.len() > 1 && hull_samples > 0 {
        let mut gens = Vec::with_capacity(sup.len());
        for (j, s) in sup.iter().enumerate() {
            match &s.covector {
                Some(c) => gens.push(c.clone()),
                None => {
                    let d = spec.cut_distance(x, &s.target);
                    return Err(Error::CutLocus {
                        factor: j,
                        distance: spec.min_diameter() - d,
                        guard: crate::geometry::CUT_GUARD,
                    });
                }
            }
        }
        let bary = gens[1..]
            .iter()
            .fold(gens[0].clone(), |a, g| a.lincomb(1.0, g, 1.0))
            .scaled(1.0 / gens.len() as f64);
        hull.push(spec.c_exp(x, &bary)?);
        for _ in 1..hull_samples {
            hull.push(spec.c_exp(x, &hull_sample(&gens, rng))?);
        }
    }
    Ok(Subdifferential {
        base: x.clone(),
        targets,
        hull,
    })
}

/// `phi(y) - phi(x) + c(y, xbar) - c(x, xbar)`; nonnegative for all `y` iff
/// `xbar` lies in the c-subdifferential at `x`.
pub fn subdifferential_defect<P: CConvex + ?Sized>(phi: &P, x: &ProductPoint, xbar: &ProductPoint, y: &ProductPoint) -> f64 {
    let spec = phi.spec();
    phi.value(y) - phi.value(x) + spec.cost(y, xbar) - spec.cost(x, xbar)
}

/// Region with a membership predicate and a boundary sampler.
pub trait Region: Send + Sync {
    fn contains(&self, spec: &ProductSpec, x: &ProductPoint) -> bool;
    fn boundary_sample(&self, spec: &ProductSpec, rng: &mut ChaCha8Rng) -> ProductPoint;
    fn interior_sample(&self, spec: &ProductSpec, rng: &mut ChaCha8Rng) -> ProductPoint;
    fn volume(&self, spec: &ProductSpec) -> f64;
}

/// Ball of the product metric; `radius` must stay below the smallest
/// injectivity radius `min_i pi r_i`.
#[derive(Clone, Debug)]
pub struct GeodesicBall {
    pub centre: ProductPoint,
    pub radius: f64,
}

impl GeodesicBall {
    /// Uniform unit vector of the full tangent space at `c`.
    pub fn direction(spec: &ProductSpec, c: &ProductPoint, rng: &mut ChaCha8Rng) -> Covector {
        loop {
            let blocks = spec
                .factors
                .iter()
                .zip(&c.blocks)
                .map(|(f, b)| {
                    let g: Vec<f64> = (0..f.sphere.ambient()).map(|_| rng.sample(StandardNormal)).collect();
                    f.sphere.project_tangent(b, &g)
                })
                .collect();
            let v = Covector { blocks };
            let n = v.norm();
            if n > 1e-12 {
                return v.scaled(1.0 / n);
            }
        }
    }
}

impl Region for GeodesicBall {
    fn contains(&self, spec: &ProductSpec, x: &ProductPoint) -> bool {
        spec.distance(&self.centre, x) <= self.radius
    }

    fn boundary_sample(&self, spec: &ProductSpec, rng: &mut ChaCha8Rng) -> ProductPoint {
        let v = Self::direction(spec, &self.centre, rng);
        spec.exp(&self.centre, &v.scaled(self.radius))
    }

    /// Uniform in the ball by rejection from the product of factor caps.
    fn interior_sample(&self, spec: &ProductSpec, rng: &mut ChaCha8Rng) -> ProductPoint {
        loop {
            let blocks = spec
                .factors
                .iter()
                .zip(&self.centre.blocks)
                .map(|(f, c)| f.sphere.sample_cap(c, self.radius, rng))
                .collect();
            let x = ProductPoint::new(blocks);
            if self.contains(spec, &x) {
                return x;
            }
        }
    }

    fn volume(&self, spec: &ProductSpec) -> f64 {
        if spec.k() == 1 {
            return spec.factors[0].sphere.cap_volume(self.radius);
        }
        // Volume by Monte Carlo over the cap product, seeded from the ball.
        let caps: f64 = spec.factors.iter().map(|f| f.sphere.cap_volume(self.radius)).product();
        let mut rng = crate::exec::shard_rng(0x5eed, 0);
        let n = 20_000;
        let mut hit = 0usize;
        for _ in 0..n {
            let blocks = spec
                .factors
                .iter()
                .zip(&self.centre.blocks)
                .map(|(f, c)| f.sphere.sample_cap(c, self.radius, &mut rng))
                .collect();
            if self.contains(spec, &ProductPoint::new(blocks)) {
                hit += 1;
            }
        }
        caps * hit as f64 / n as f64
    }
}

/// Necessary-condition test for `xbar` in the localized image
/// `[dphi^c(U)]_{x0}`: the support inequality on `boundary_samples` points of
/// the boundary of `U`, with slack `1e-10`.
pub fn localized_image_membership<P: CConvex + ?Sized, U: Region + ?Sized>(
    phi: &P,
    region: &U,
    x0: &ProductPoint,
    xbar: &ProductPoint,
    boundary_samples: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    let spec = phi.spec();
    (0..boundary_samples).all(|_| {
        let y = region.boundary_sample(spec, rng);
        subdifferential_defect(phi, x0, xbar, &y) >= -1e-10
    })
}

/// Finds a point of `U` where the support of `xbar` through `x0` touches
/// `phi`, by minimizing `phi + c(., xbar)` over interior samples followed by
/// local refinement. Returns the point and the smallest support defect of
/// `xbar` there over `samples` uniform probes of the whole manifold.
pub fn touching_point<P: CConvex + ?Sized, U: Region + ?Sized>(
    phi: &P,
    region: &U,
    x0: &ProductPoint,
    xbar: &ProductPoint,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> (ProductPoint, f64) {
    let spec = phi.spec();
    let score = |y: &ProductPoint| phi.value(y) + spec.cost(y, xbar);
    let mut best = x0.clone();
    let mut best_v = score(x0);
    for _ in 0..samples {
        let y = region.interior_sample(spec, rng);
        let v = score(&y);
        if v < best_v {
            best_v = v;
            best = y;
        }
    }
    let mut step = 0.1 * spec.min_diameter();
    while step > 1e-10 {
        let mut improved = false;
        for _ in 0..8 {
            let v = GeodesicBall::direction(spec, &best, rng);
            let y = spec.exp(&best, &v.scaled(step * rng.gen::<f64>()));
            if region.contains(spec, &y) {
                let s = score(&y);
                if s < best_v {
                    best_v = s;
                    best = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    // The touching point must carry xbar in its full c-subdifferential.
    let defect = (0..samples)
        .map(|_| subdifferential_defect(phi, &best, xbar, &spec.sample_uniform(rng)))
        .fold(f64::INFINITY, f64::min);
    (best, defect)
}

/// If atom `j` is active at `x` and antipodal to `x` in `factor`, every point
/// of the slice through the atom along `factor` should satisfy the support
/// inequality at `x`. Returns the most negative defect over
/// `slice_samples x probe_samples` draws.
pub fn slice_lemma_check(
    phi: &DiscretePotential,
    x: &ProductPoint,
    j: usize,
    factor: usize,
    slice_samples: usize,
    probe_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let spec = &phi.spec;
    let (_, act) = phi.evaluate(x);
    if !act.contains(&j) {
        return Err(Error::precondition("slice_lemma", format!("atom {j} is not active at x")));
    }
    let f = &spec.factors[factor].sphere;
    if f.distance(&x.blocks[factor], &phi.atoms[j].blocks[factor]) < f.diameter() - 1e-9 * f.radius {
        return Err(Error::precondition("slice_lemma", "atom is not antipodal to x in the chosen factor"));
    }
    let probes: Vec<ProductPoint> = (0..probe_samples).map(|_| spec.sample_uniform(rng)).collect();
    let mut worst = f64::INFINITY;
    for _ in 0..slice_samples {
        let z = phi.atoms[j].with_block(factor, f.sample_uniform(rng));
        for y in probes.iter().chain(phi.atoms.iter()) {
            worst = worst.min(subdifferential_defect(phi, x, &z, y));
        }
    }
    Ok(worst)
}
