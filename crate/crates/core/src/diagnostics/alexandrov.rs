use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::c_convexity::{section_sample_local, CConvex, FactorPotential, SectionSample, SectionSpec, TensorPotential};
use crate::error::{Error, Result};
use crate::exec::{shard_rng, MonteCarlo};
use crate::geometry::{unit_ball_volume, Covector, ProductPoint, ProductSpec};

/// `(4n)^n |B_1|^2`.
pub fn alexandrov_constant(n: usize) -> f64 {
    (4.0 * n as f64).powi(n as i32) * unit_ball_volume(n).powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlexandrovConfig {
    pub mc: MonteCarlo,
    /// Required `cut_distance(x, xbar0)` on every hit, relative to `min_i pi r_i`.
    pub margin: f64,
    /// `(x, p)` probes for the c-exponential derivative when the cost is not quadratic.
    pub derivative_probes: usize,
}

impl Default for AlexandrovConfig {
    fn default() -> Self {
        Self {
            mc: MonteCarlo::new(20_000, 0),
            margin: 1e-2,
            derivative_probes: 64,
        }
    }
}

/// Both sides of the upper Alexandrov estimate for one section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlexandrovRecord {
    pub section: SectionSpec,
    pub height: f64,
    pub volume: f64,
    pub volume_std_err: f64,
    pub hits: usize,
    /// `max / min` of `|det(-D_x D_xbar c(x, xbar0))|` over the stored hits.
    pub det_ratio: f64,
    pub exp_derivative_sup: f64,
    pub lambda: f64,
    pub constant: f64,
    /// `lambda |Z_h|^2`.
    pub lhs: f64,
    /// `C(n) ratio^2 sup h^n`.
    pub rhs: f64,
    /// Relative standard error of `lhs`.
    pub sigma: f64,
    pub pass: bool,
}

fn frame_log(spec: &ProductSpec, base: &ProductPoint, y: &ProductPoint) -> Option<Covector> {
    let mut blocks = Vec::with_capacity(spec.k());
    for (i, f) in spec.factors.iter().enumerate() {
        blocks.push(f.sphere.log(&base.blocks[i], &y.blocks[i]).ok()?);
    }
    Some(Covector { blocks })
}

/// Largest operator norm of `p -> c_exp(x, p)` over random points of the
/// cotangent domain at the given bases, by central differences in frames.
pub fn exp_derivative_sup(spec: &ProductSpec, bases: &[ProductPoint], probes: usize, seed: u64) -> f64 {
    if spec.is_quadratic() {
        // Nonnegative curvature makes the exponential map a contraction.
        return 1.0;
    }
    let mut rng = shard_rng(seed, 0xD1);
    let n = spec.dim();
    let mut sup: f64 = 0.0;
    if bases.is_empty() {
        return sup;
    }
    for k in 0..probes {
        let x = &bases[k % bases.len()];
        let p = spec.sample_domain_covector(x, 0.9, &mut rng);
        let Ok(y) = spec.c_exp(x, &p) else { continue };
        let mut cols = Vec::with_capacity(n);
        let frames = spec.frames(x);
        let h = 1e-5;
        let mut ok = true;
        for (i, fr) in frames.iter().enumerate() {
            for e in fr {
                let mut d = Covector::zeros(spec);
                d.blocks[i] = e.iter().map(|c| c * h * spec.factors[i].domain_radius()).collect();
                let (Ok(a), Ok(b)) = (spec.c_exp(x, &p.lincomb(1.0, &d, 1.0)), spec.c_exp(x, &p.lincomb(1.0, &d, -1.0))) else {
                    ok = false;
                    break;
                };
                let (Some(la), Some(lb)) = (frame_log(spec, &y, &a), frame_log(spec, &y, &b)) else {
                    ok = false;
                    break;
                };
                let scale = 1.0 / (2.0 * h * spec.factors[i].domain_radius());
                cols.push(spec.to_frame(&y, &la.lincomb(scale, &lb, -scale)));
            }
        }
        if !ok {
            continue;
        }
        let m = DMatrix::from_fn(n, n, |r, c| cols[c][r]);
        if let Some(s) = m.singular_values().iter().copied().reduce(f64::max) {
            sup = sup.max(s);
        }
    }
    sup
}

fn check_with<P, L>(phi: &P, section: &SectionSpec, cfg: &AlexandrovConfig, lambda_of: L) -> Result<AlexandrovRecord>
where
    P: CConvex + ?Sized,
    L: FnOnce(&SectionSample) -> Result<f64>,
{
    let spec = phi.spec();
    let n = spec.dim();
    let constant = alexandrov_constant(n);
    let h = section.height;
    if !(h >= 0.0) {
        return Err(Error::invalid(format!("section height must be nonnegative, got {h}")));
    }
    let sample = section_sample_local(phi, section, &cfg.mc);
    let guard = cfg.margin * spec.min_diameter();
    if let Some(bad) = sample.hits.iter().find(|x| spec.cut_distance(x, &section.slope) <= guard) {
        return Err(Error::SectionEscapesChart(format!(
            "hit at cut distance {:e} from the slope target (margin {guard:e})",
            spec.cut_distance(bad, &section.slope)
        )));
    }
    let lambda = lambda_of(&sample)?;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for x in sample.hits.iter().chain(std::iter::once(&section.anchor)) {
        let d = spec.mixed_hessian_det(x, &section.slope)?.abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let det_ratio = hi / lo;
    let mut bases = sample.hits.clone();
    bases.truncate(cfg.derivative_probes.max(1));
    if bases.is_empty() {
        bases.push(section.anchor.clone());
    }
    let sup = exp_derivative_sup(spec, &bases, cfg.derivative_probes, cfg.mc.seed);
    let lhs = lambda * sample.volume * sample.volume;
    let rhs = constant * det_ratio * det_ratio * sup * h.powi(n as i32);
    let sigma = if sample.volume > 0.0 { 2.0 * sample.relative_error() } else { 0.0 };
    Ok(AlexandrovRecord {
        section: section.clone(),
        height: h,
        volume: sample.volume,
        volume_std_err: sample.std_err,
        hits: sample.hit_count,
        det_ratio,
        exp_derivative_sup: sup,
        lambda,
        constant,
        lhs,
        rhs,
        sigma,
        pass: lhs <= rhs * (1.0 + 3.0 * sigma),
    })
}

/// Upper Alexandrov estimate with a caller-supplied lower Monge-Ampere bound
/// `lambda <= |dphi^c|`.
pub fn alexandrov_upper_check<P: CConvex + ?Sized>(
    phi: &P,
    section: &SectionSpec,
    lambda: f64,
    cfg: &AlexandrovConfig,
) -> Result<AlexandrovRecord> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    check_with(phi, section, cfg, |_| Ok(lambda))
}

/// Same check for a smooth tensor potential, where `lambda` is the smallest
/// Jacobian of its map over the sampled section.
pub fn alexandrov_upper_check_tensor(phi: &TensorPotential, section: &SectionSpec, cfg: &AlexandrovConfig) -> Result<AlexandrovRecord> {
    check_with(phi, section, cfg, |sample| {
        let mut lam = f64::INFINITY;
        for x in sample.hits.iter().chain(std::iter::once(&section.anchor)) {
            let j = phi
                .jacobian_closed_form(x)
                .or_else(|| phi.jacobian(x, 1e-5))
                .ok_or_else(|| Error::SectionEscapesChart("map is singular on the section".into()))?;
            lam = lam.min(j);
        }
        if !(lam > 0.0) {
            return Err(Error::precondition("alexandrov_upper_check", "map Jacobian vanishes on the section"));
        }
        Ok(lam)
    })
}

/// Random smooth tensor potential with interpolation scales drawn from
/// `scales`, and the section through a random anchor with slope at its image.
pub fn random_tensor_section<R: Rng + ?Sized>(
    spec: &ProductSpec,
    scales: (f64, f64),
    height: f64,
    rng: &mut R,
) -> Result<(TensorPotential, SectionSpec)> {
    let (lo, hi) = scales;
    if !(0.0 <= lo && lo <= hi && hi < 1.0) {
        return Err(Error::invalid(format!("scale range ({lo}, {hi}) must satisfy 0 <= lo <= hi < 1")));
    }
    for _ in 0..64 {
        let z = spec.sample_uniform(rng);
        let factors = z
            .blocks
            .iter()
            .map(|b| FactorPotential::Scaled {
                anchor: b.clone(),
                scale: if hi > lo { rng.gen_range(lo..hi) } else { lo },
            })
            .collect();
        let phi = TensorPotential::new(spec.clone(), factors)?;
        let anchor = spec.sample_uniform(rng);
        if let Some(slope) = phi.map(&anchor) {
            return Ok((phi, SectionSpec { anchor, slope, height }));
        }
    }
    Err(Error::SectionEscapesChart("no admissible random tensor section found".into()))
}
