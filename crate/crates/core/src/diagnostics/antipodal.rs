use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::c_convexity::{c_subdifferential, section_sample_local, CConvex, FactorPotential, SectionSpec, TensorPotential};
use crate::error::{Error, Result};
use crate::exec::{shard_rng, MonteCarlo};
use crate::geometry::{Factor, ProductPoint, ProductSpec, SpherePoint, SphereSpec};

/// Point at distance `2 pi eps r` from `-x0` on a fixed great circle through
/// `x0`; `eps = 1/2` lands on `x0` itself.
pub fn antipodal_target(sphere: &SphereSpec, x0: &SpherePoint, eps: f64) -> SpherePoint {
    let start = x0.antipode();
    let u = &sphere.frame(&start)[0];
    let v: Vec<f64> = u.iter().map(|c| c * 2.0 * PI * eps * sphere.radius).collect();
    sphere.exp(&start, &v)
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn check_eps(diagnostic: &str, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::precondition(diagnostic, format!("epsilon {eps} must lie in (0, 1/2)")));
    }
    Ok(())
}

fn check_regime(diagnostic: &str, delta: f64, h: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::precondition(diagnostic, format!("delta {delta} must lie in [0, 1]")));
    }
    if !(h > 0.0) {
        return Err(Error::precondition(diagnostic, format!("height {h} must be positive")));
    }
    if h > delta * delta {
        return Err(Error::precondition(diagnostic, format!("height {h} exceeds delta^2 = {}", delta * delta)));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub eps: Vec<f64>,
    pub heights: Vec<f64>,
    /// Epsilon held fixed for the height sweep.
    pub sweep_eps: f64,
    /// Height held fixed for the epsilon sweeps.
    pub sweep_height: f64,
    /// `dist(x0, xbar) / r` for the regular-factor variant.
    pub regular_angle: f64,
    pub mc: MonteCarlo,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.05, 0.1, 0.2],
            heights: vec![1e-4, 1e-3, 1e-2],
            sweep_eps: 0.1,
            sweep_height: 1e-3,
            regular_angle: PI / 2.0,
            mc: MonteCarlo::new(200_000, 0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Height,
    Epsilon,
    Regular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub sweep: Sweep,
    pub eps: f64,
    pub height: f64,
    pub volume: f64,
    pub std_err: f64,
    /// Exact width on circles.
    pub closed_form: Option<f64>,
    pub log_height: f64,
    pub log_volume: f64,
    pub diameter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRecord {
    pub factor: Factor,
    pub rows: Vec<ScalingRow>,
    /// Slope of `log |Z|` in `log h`; the factor dimension is expected.
    pub slope_height: f64,
    /// Slope of `log |Z|` in `log eps` for the antipodal target.
    pub slope_eps: f64,
    /// `max / min` volume of the regular variant across the epsilon grid.
    pub regular_spread: f64,
    pub closed_form_max_rel_err: Option<f64>,
}

/// Width of the circle section `{f'(pi r) |s| - f'(D) s <= h}` with
/// `D = pi r - 2 pi eps r`. Exact for the quadratic profile.
pub fn circle_section_width(factor: &Factor, eps: f64, h: f64) -> f64 {
    let r = factor.sphere.radius;
    let top = factor.profile.f_prime(PI * r);
    let near = factor.profile.f_prime(PI * r - 2.0 * PI * eps * r);
    h / (top - near) + h / (top + near)
}

/// Section of one factor cut by `-c(., -x0)` at `x0` with slope target
/// `xbar`, sampled with local caps.
fn factor_section(factor: &Factor, x0: &SpherePoint, xbar: &SpherePoint, h: f64, mc: &MonteCarlo) -> Result<crate::c_convexity::SectionSample> {
    let spec = ProductSpec::new(vec![*factor])?;
    let phi = TensorPotential::new(
        spec,
        vec![FactorPotential::Support {
            atom: x0.antipode(),
            weight: 0.0,
        }],
    )?;
    let s = SectionSpec {
        anchor: ProductPoint::new(vec![x0.clone()]),
        slope: ProductPoint::new(vec![xbar.clone()]),
        height: h,
    };
    Ok(section_sample_local(&phi, &s, mc))
}

/// Volume of factor sections at the antipodal configuration over height and
/// epsilon grids, and of the regular-factor variant whose slope target stays
/// a fixed distance from `-x0`.
pub fn antipodal_section_scaling(factor: &Factor, cfg: &ScalingConfig) -> Result<ScalingRecord> {
    factor.sphere.validate()?;
    for &e in cfg.eps.iter().chain(std::iter::once(&cfg.sweep_eps)) {
        check_eps("antipodal_section_scaling", e)?;
    }
    if cfg.eps.len() < 2 || cfg.heights.len() < 2 {
        return Err(Error::invalid("scaling sweeps need at least two grid points"));
    }
    if cfg.heights.iter().chain(std::iter::once(&cfg.sweep_height)).any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("section heights must be positive"));
    }
    let sphere = &factor.sphere;
    let mut north = vec![0.0; sphere.ambient()];
    north[sphere.dim] = sphere.radius;
    let x0 = sphere.point(north)?;
    let mut jobs = Vec::new();
    for &h in &cfg.heights {
        jobs.push((Sweep::Height, cfg.sweep_eps, h));
    }
    for &e in &cfg.eps {
        jobs.push((Sweep::Epsilon, e, cfg.sweep_height));
    }
    for &e in &cfg.eps {
        jobs.push((Sweep::Regular, e, cfg.sweep_height));
    }
    let u = &sphere.frame(&x0)[0];
    let regular_target = sphere.exp(&x0, &u.iter().map(|c| c * cfg.regular_angle * sphere.radius).collect::<Vec<_>>());
    let mut rows = Vec::with_capacity(jobs.len());
    for (k, &(sweep, eps, h)) in jobs.iter().enumerate() {
        let xbar = match sweep {
            Sweep::Regular => regular_target.clone(),
            _ => antipodal_target(sphere, &x0, eps),
        };
        let s = factor_section(factor, &x0, &xbar, h, &cfg.mc.reseed(k as u64))?;
        let closed_form = (sphere.dim == 1 && sweep != Sweep::Regular).then(|| circle_section_width(factor, eps, h));
        rows.push(ScalingRow {
            sweep,
            eps,
            height: h,
            volume: s.volume,
            std_err: s.std_err,
            closed_form,
            log_height: h.ln(),
            log_volume: s.volume.ln(),
            diameter: s.diameter,
        });
    }
    let pick = |sw: Sweep| rows.iter().filter(move |r| r.sweep == sw);
    let (lh, lv): (Vec<f64>, Vec<f64>) = pick(Sweep::Height).map(|r| (r.log_height, r.log_volume)).unzip();
    let slope_height = fit_slope(&lh, &lv);
    let (le, lv): (Vec<f64>, Vec<f64>) = pick(Sweep::Epsilon).map(|r| (r.eps.ln(), r.log_volume)).unzip();
    let slope_eps = fit_slope(&le, &lv);
    let reg: Vec<f64> = pick(Sweep::Regular).map(|r| r.volume).collect();
    let regular_spread = reg.iter().copied().fold(0.0, f64::max) / reg.iter().copied().fold(f64::INFINITY, f64::min);
    let closed_form_max_rel_err = rows
        .iter()
        .filter_map(|r| r.closed_form.map(|c| (r.volume - c).abs() / c))
        .reduce(f64::max);
    Ok(ScalingRecord {
        factor: *factor,
        rows,
        slope_height,
        slope_eps,
        regular_spread,
        closed_form_max_rel_err,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RightAlexandrovConfig {
    pub mc: MonteCarlo,
    /// Required `cut_distance(x, xbar)` on hits, relative to `min_i pi r_i`.
    pub margin: f64,
}

impl Default for RightAlexandrovConfig {
    fn default() -> Self {
        Self {
            mc: MonteCarlo::new(1_000_000, 0),
            margin: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RightAlexandrovRecord {
    pub eps: f64,
    pub delta: f64,
    pub height: f64,
    pub antipodal_factors: usize,
    pub dim: usize,
    pub volume: f64,
    pub volume_std_err: f64,
    pub image_volume: f64,
    pub image_std_err: f64,
    /// `h^dim / (eps^a0 |Z| |dphi^c(Z)|)`.
    pub ratio: f64,
    pub diameter: f64,
    pub hits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RightAlexandrovSweep {
    pub records: Vec<RightAlexandrovRecord>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max_ratio / min_ratio`.
    pub spread: f64,
}

/// North pole of every factor.
pub fn north_pole(spec: &ProductSpec) -> ProductPoint {
    ProductPoint::new(
        spec.factors
            .iter()
            .map(|f| {
                let mut v = vec![0.0; f.sphere.ambient()];
                v[f.sphere.dim] = f.sphere.radius;
                SpherePoint(v)
            })
            .collect(),
    )
}

/// Tensor potential whose first `antipodal` factors are supports at the
/// antipode of the north pole and whose remaining factors interpolate towards
/// the identity with `regular_scale`. Returns it with the north pole.
pub fn antipodal_potential(spec: &ProductSpec, antipodal: usize, regular_scale: f64) -> Result<(TensorPotential, ProductPoint)> {
    if antipodal == 0 || antipodal > spec.k() {
        return Err(Error::invalid(format!("antipodal factor count {antipodal} must lie in 1..={}", spec.k())));
    }
    let x0 = north_pole(spec);
    let factors = (0..spec.k())
        .map(|i| {
            if i < antipodal {
                FactorPotential::Support {
                    atom: x0.blocks[i].antipode(),
                    weight: 0.0,
                }
            } else {
                FactorPotential::Scaled {
                    anchor: x0.blocks[i].clone(),
                    scale: regular_scale,
                }
            }
        })
        .collect();
    Ok((TensorPotential::new(spec.clone(), factors)?, x0))
}

/// Splits the factors of `phi` into those whose support atom is antipodal to
/// `x0` and regular [`FactorPotential::Scaled`] factors.
fn classify(phi: &TensorPotential, x0: &ProductPoint) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut antipodal = Vec::new();
    let mut regular = Vec::new();
    for (i, fp) in phi.factors.iter().enumerate() {
        let s = &phi.spec.factors[i].sphere;
        match fp {
            FactorPotential::Support { atom, .. } => {
                if s.distance(&x0.blocks[i], atom) < s.diameter() - 1e-9 * s.radius {
                    return Err(Error::precondition(
                        "right_alexandrov_check",
                        format!("support atom of factor {i} is not antipodal to x0"),
                    ));
                }
                antipodal.push(i);
            }
            FactorPotential::Scaled { .. } => regular.push(i),
        }
    }
    if antipodal.is_empty() {
        return Err(Error::precondition("right_alexandrov_check", "no factor is antipodal at x0"));
    }
    Ok((antipodal, regular))
}

/// `xbar_{eps,delta}`: antipodal factors move along the closed geodesic from
/// `-x0`, regular factors move the arc `delta r` from the image of `x0`.
pub fn perturbed_target(phi: &TensorPotential, x0: &ProductPoint, eps: f64, delta: f64) -> Result<ProductPoint> {
    let (antipodal, _) = classify(phi, x0)?;
    let mut blocks = Vec::with_capacity(phi.spec.k());
    for (i, f) in phi.spec.factors.iter().enumerate() {
        let s = &f.sphere;
        if antipodal.contains(&i) {
            blocks.push(antipodal_target(s, &x0.blocks[i], eps));
        } else {
            let base = regular_image(phi, i, &x0.blocks[i]).unwrap_or_else(|| x0.blocks[i].clone());
            let u = &s.frame(&base)[0];
            blocks.push(s.exp(&base, &u.iter().map(|c| c * delta * s.radius).collect::<Vec<_>>()));
        }
    }
    Ok(ProductPoint::new(blocks))
}

/// Image of one regular factor under its interpolating map.
fn regular_image(phi: &TensorPotential, i: usize, x: &SpherePoint) -> Option<SpherePoint> {
    let FactorPotential::Scaled { anchor, scale } = &phi.factors[i] else { return None };
    let f = phi.spec.factors[i];
    let single = TensorPotential::new(
        ProductSpec { factors: vec![f] },
        vec![FactorPotential::Scaled { anchor: anchor.clone(), scale: *scale }],
    )
    .ok()?;
    single.map(&ProductPoint::new(vec![x.clone()])).map(|p| p.blocks[0].clone())
}

/// Estimates `h^dim / (eps^a0 |Z_{eps,delta,h}| |dphi^c(Z_{eps,delta,h})|)`.
///
/// The image is computed from the tensor structure: antipodal factors are
/// mapped onto their whole sphere only on the slice through `x0`, so the
/// image is the product of those spheres with the regular map's image of the
/// slice section.
pub fn right_alexandrov_check(
    phi: &TensorPotential,
    x0: &ProductPoint,
    eps: f64,
    delta: f64,
    h: f64,
    cfg: &RightAlexandrovConfig,
) -> Result<RightAlexandrovRecord> {
    const NAME: &str = "right_alexandrov_check";
    check_eps(NAME, eps)?;
    check_regime(NAME, delta, h)?;
    let spec = &phi.spec;
    spec.check_point(x0)?;
    let (antipodal, regular) = classify(phi, x0)?;
    let xbar = perturbed_target(phi, x0, eps, delta)?;
    let section = SectionSpec {
        anchor: x0.clone(),
        slope: xbar.clone(),
        height: h,
    };
    let sample = section_sample_local(phi, &section, &cfg.mc);
    let guard = cfg.margin * spec.min_diameter();
    if let Some(bad) = sample.hits.iter().find(|x| spec.cut_distance(x, &xbar) <= guard) {
        return Err(Error::SectionEscapesChart(format!(
            "{NAME}: hit at cut distance {:e} from xbar_(eps,delta)",
            spec.cut_distance(bad, &xbar)
        )));
    }
    let spheres: f64 = antipodal.iter().map(|&i| spec.factors[i].sphere.volume()).product();
    let (image_volume, image_std_err) = if regular.is_empty() {
        (spheres, 0.0)
    } else {
        let sub = ProductSpec::new(regular.iter().map(|&i| spec.factors[i]).collect())?;
        let pick = |p: &ProductPoint| ProductPoint::new(regular.iter().map(|&i| p.blocks[i].clone()).collect());
        let sub_phi = TensorPotential::new(sub, regular.iter().map(|&i| phi.factors[i].clone()).collect())?;
        let slice = SectionSpec {
            anchor: pick(x0),
            slope: pick(&xbar),
            height: h,
        };
        let s = section_sample_local(&sub_phi, &slice, &cfg.mc.reseed(1));
        let jac: Vec<f64> = s
            .hits
            .iter()
            .filter_map(|x| sub_phi.jacobian_closed_form(x).or_else(|| sub_phi.jacobian(x, 1e-5)))
            .collect();
        let mean = if jac.is_empty() { 0.0 } else { jac.iter().sum::<f64>() / jac.len() as f64 };
        (spheres * s.volume * mean, spheres * s.std_err * mean)
    };
    let dim = spec.dim();
    let ratio = h.powi(dim as i32) / (eps.powi(antipodal.len() as i32) * sample.volume * image_volume);
    Ok(RightAlexandrovRecord {
        eps,
        delta,
        height: h,
        antipodal_factors: antipodal.len(),
        dim,
        volume: sample.volume,
        volume_std_err: sample.std_err,
        image_volume,
        image_std_err,
        ratio,
        diameter: sample.diameter,
        hits: sample.hit_count,
    })
}

/// Runs [`right_alexandrov_check`] over the full grid; every grid point must
/// satisfy `h <= delta^2`.
pub fn right_alexandrov_sweep(
    phi: &TensorPotential,
    x0: &ProductPoint,
    eps: &[f64],
    deltas: &[f64],
    heights: &[f64],
    cfg: &RightAlexandrovConfig,
) -> Result<RightAlexandrovSweep> {
    for &d in deltas {
        for &h in heights {
            check_regime("right_alexandrov_check", d, h)?;
        }
    }
    let mut records = Vec::new();
    let mut k = 0u64;
    for &e in eps {
        for &d in deltas {
            for &h in heights {
                let run = RightAlexandrovConfig { mc: cfg.mc.reseed(k), ..*cfg };
                records.push(right_alexandrov_check(phi, x0, e, d, h, &run)?);
                k += 1;
            }
        }
    }
    if records.is_empty() {
        return Err(Error::invalid("right-Alexandrov grid is empty"));
    }
    let min_ratio = records.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(RightAlexandrovSweep {
        records,
        min_ratio,
        max_ratio,
        spread: max_ratio / min_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationConfig {
    pub mc: MonteCarlo,
    /// Required margin relative to the smallest regular `pi r_i`.
    pub margin: f64,
    pub hull_samples: usize,
    /// Section points used as both sources and cut-locus bases.
    pub points: usize,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            mc: MonteCarlo::new(100_000, 0),
            margin: 1e-2,
            hull_samples: 4,
            points: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationRecord {
    pub delta: f64,
    pub height: f64,
    pub regular: Vec<usize>,
    /// Smallest regular-factor cut distance; `None` without regular factors.
    pub min_margin: Option<f64>,
    pub threshold: f64,
    pub points: usize,
    pub images: usize,
    pub pass: bool,
}

/// Checks that the regular components of `dphi^c(Z)` avoid the cut locus of
/// the regular components of every `z in Z`.
pub fn regular_component_separation<P: CConvex + ?Sized>(
    phi: &P,
    section: &SectionSpec,
    regular: &[usize],
    delta: f64,
    cfg: &SeparationConfig,
) -> Result<SeparationRecord> {
    const NAME: &str = "regular_component_separation";
    check_regime(NAME, delta, section.height)?;
    let spec = phi.spec();
    if let Some(&i) = regular.iter().find(|&&i| i >= spec.k()) {
        return Err(Error::invalid(format!("regular factor {i} out of range")));
    }
    let threshold = cfg.margin
        * regular
            .iter()
            .map(|&i| spec.factors[i].sphere.diameter())
            .fold(f64::INFINITY, f64::min);
    let sample = section_sample_local(phi, section, &cfg.mc);
    let stride = sample.hits.len().div_ceil(cfg.points.max(1)).max(1);
    let mut pts: Vec<&ProductPoint> = sample.hits.iter().step_by(stride).collect();
    pts.push(&section.anchor);
    let mut rng = shard_rng(cfg.mc.seed, 0x5E9);
    let mut images = Vec::new();
    let mut blocked = false;
    for x in &pts {
        match c_subdifferential(phi, x, cfg.hull_samples, &mut rng) {
            Ok(sd) => images.extend(sd.all().cloned()),
            Err(_) => blocked = true,
        }
    }
    let min_margin = if regular.is_empty() {
        None
    } else if blocked {
        Some(0.0)
    } else {
        let mut m = f64::INFINITY;
        for z in &pts {
            for y in &images {
                for &i in regular {
                    let s = &spec.factors[i].sphere;
                    m = m.min(s.diameter() - s.distance(&z.blocks[i], &y.blocks[i]));
                }
            }
        }
        Some(m)
    };
    Ok(SeparationRecord {
        delta,
        height: section.height,
        regular: regular.to_vec(),
        min_margin,
        threshold,
        points: pts.len(),
        images: images.len(),
        pass: min_margin.map_or(true, |m| m > threshold),
    })
}
