use rand::Rng;
use serde::{Deserialize, Serialize};

use super::potential::CConvex;
use super::subdiff::GeodesicBall;
use crate::exec::{map_indexed, shard_count, shard_range, shard_rng, MonteCarlo};
use crate::geometry::{ProductPoint, ProductSpec};

/// Hits kept per sample for diameter and precondition checks.
pub const MAX_STORED_HITS: usize = 4_096;

/// `Z_h = {x : phi(x) - phi(x0) <= -c(x, xbar0) + c(x0, xbar0) + h}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub anchor: ProductPoint,
    pub slope: ProductPoint,
    pub height: f64,
}

impl SectionSpec {
    /// `phi(x) - phi(x0) + c(x, xbar0) - c(x0, xbar0)`; the section is `excess <= h`.
    pub fn excess<P: CConvex + ?Sized>(&self, phi: &P, phi0: f64, x: &ProductPoint) -> f64 {
        let spec = phi.spec();
        phi.value(x) - phi0 + spec.cost(x, &self.slope) - spec.cost(&self.anchor, &self.slope)
    }

    pub fn contains<P: CConvex + ?Sized>(&self, phi: &P, x: &ProductPoint) -> bool {
        self.excess(phi, phi.value(&self.anchor), x) <= self.threshold(phi)
    }

    /// Height plus a rounding allowance, so that `h = 0` keeps exact contacts.
    pub fn threshold<P: CConvex + ?Sized>(&self, phi: &P) -> f64 {
        self.height + 1e-12 * phi.cost_scale()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionMethod {
    Uniform,
    LocalCaps,
}

/// Monte Carlo representation of a section.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionSample {
    pub volume: f64,
    pub std_err: f64,
    pub samples: usize,
    pub hit_count: usize,
    /// Up to [`MAX_STORED_HITS`] hit points, in sample order.
    pub hits: Vec<ProductPoint>,
    /// Largest pairwise product distance among stored hits.
    pub diameter: f64,
    pub method: SectionMethod,
    /// Per-factor cap radii of the proposal (full diameters for uniform).
    pub proposal_radii: Vec<f64>,
}

impl SectionSample {
    pub fn relative_error(&self) -> f64 {
        if self.volume > 0.0 {
            self.std_err / self.volume
        } else {
            f64::INFINITY
        }
    }
}

fn diameter(spec: &ProductSpec, pts: &[ProductPoint]) -> f64 {
    let stride = pts.len().div_ceil(1_000).max(1);
    let sub: Vec<&ProductPoint> = pts.iter().step_by(stride).collect();
    let mut d: f64 = 0.0;
    for (i, a) in sub.iter().enumerate() {
        for b in &sub[i + 1..] {
            d = d.max(spec.distance(a, b));
        }
    }
    d
}

/// Shared sampling loop: `draw` proposes points, volume is the hit fraction
/// times `proposal_volume`.
fn run<P, D>(phi: &P, s: &SectionSpec, mc: &MonteCarlo, proposal_volume: f64, draw: D) -> (usize, Vec<ProductPoint>)
where
    P: CConvex + ?Sized,
    D: Fn(&mut rand_chacha::ChaCha8Rng) -> ProductPoint + Sync + Send,
{
    let _ = proposal_volume;
    let phi0 = phi.value(&s.anchor);
    let top = s.threshold(phi);
    let parts = map_indexed(mc.exec, shard_count(mc.samples), |k| {
        let (lo, hi) = shard_range(mc.samples, k);
        let mut rng = shard_rng(mc.seed, k as u64);
        let mut hits = Vec::new();
        let mut count = 0;
        for _ in lo..hi {
            let x = draw(&mut rng);
            if s.excess(phi, phi0, &x) <= top {
                count += 1;
                if hits.len() < MAX_STORED_HITS {
                    hits.push(x);
                }
            }
        }
        (count, hits)
    });
    let mut total = 0;
    let mut hits = Vec::new();
    for (c, h) in parts {
        total += c;
        let room = MAX_STORED_HITS.saturating_sub(hits.len());
        hits.extend(h.into_iter().take(room));
    }
    (total, hits)
}

fn finish(spec: &ProductSpec, n: usize, count: usize, hits: Vec<ProductPoint>, vol: f64, method: SectionMethod, radii: Vec<f64>) -> SectionSample {
    let p = count as f64 / n.max(1) as f64;
    SectionSample {
        volume: p * vol,
        std_err: vol * (p * (1.0 - p) / n.max(1) as f64).sqrt(),
        samples: n,
        hit_count: count,
        diameter: diameter(spec, &hits),
        hits,
        method,
        proposal_radii: radii,
    }
}

/// Section volume by uniform sampling of the whole manifold.
pub fn section_sample<P: CConvex + ?Sized>(phi: &P, s: &SectionSpec, mc: &MonteCarlo) -> SectionSample {
    let spec = phi.spec();
    let vol = spec.volume();
    let (count, hits) = run(phi, s, mc, vol, |rng| spec.sample_uniform(rng));
    let radii = spec.factors.iter().map(|f| f.sphere.diameter()).collect();
    finish(spec, mc.samples, count, hits, vol, SectionMethod::Uniform, radii)
}

/// Exit parameter of the ray `s -> exp(x0, s v)` from the section, by a
/// geometric scan followed by bisection.
fn ray_exit<P: CConvex + ?Sized>(phi: &P, s: &SectionSpec, phi0: f64, v: &crate::geometry::Covector, s_max: f64) -> f64 {
    let spec = phi.spec();
    let top = s.threshold(phi);
    let inside = |t: f64| s.excess(phi, phi0, &spec.exp(&s.anchor, &v.scaled(t))) <= top;
    let mut lo = 0.0;
    let mut hi = None;
    for k in (0..=48).rev() {
        let t = s_max * 0.5_f64.powi(k);
        if inside(t) {
            lo = t;
        } else {
            hi = Some(t);
            break;
        }
    }
    let Some(mut hi) = hi else { return s_max };
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Per-factor extents of the section about its anchor from ray exits along
/// frame axes and random joint directions.
pub fn section_extents<P: CConvex + ?Sized>(phi: &P, s: &SectionSpec, directions: usize, seed: u64) -> Vec<f64> {
    let spec = phi.spec();
    let phi0 = phi.value(&s.anchor);
    let mut rng = shard_rng(seed, 0xE7);
    let mut dirs = Vec::new();
    let frames = spec.frames(&s.anchor);
    for (i, fr) in frames.iter().enumerate() {
        for e in fr {
            for sign in [1.0, -1.0] {
                let mut v = crate::geometry::Covector::zeros(spec);
                v.blocks[i] = e.iter().map(|c| c * sign).collect();
                dirs.push(v);
            }
        }
    }
    for _ in 0..directions {
        dirs.push(GeodesicBall::direction(spec, &s.anchor, &mut rng));
    }
    let mut ext = vec![0.0_f64; spec.k()];
    for v in &dirs {
        let norms = v.block_norms();
        let s_max = spec
            .factors
            .iter()
            .zip(&norms)
            .filter(|(_, n)| **n > 1e-12)
            .map(|(f, n)| f.sphere.diameter() / n)
            .fold(f64::INFINITY, f64::min);
        let t = ray_exit(phi, s, phi0, v, s_max);
        for (e, n) in ext.iter_mut().zip(&norms) {
            *e = e.max(t * n);
        }
    }
    ext
}

/// Section volume by sampling a product of geodesic caps about the anchor.
///
/// Cap radii start at 1.1 times the ray extents and are doubled for any factor
/// whose outer 5% shell receives hits, until no shell hits remain or the cap
/// covers the factor.
pub fn section_sample_local<P: CConvex + ?Sized>(phi: &P, s: &SectionSpec, mc: &MonteCarlo) -> SectionSample {
    let spec = phi.spec();
    if s.height <= 0.0 {
        let radii = vec![0.0; spec.k()];
        return finish(spec, mc.samples, 0, Vec::new(), 0.0, SectionMethod::LocalCaps, radii);
    }
    let ext = section_extents(phi, s, 64, mc.seed);
    let mut radii: Vec<f64> = ext
        .iter()
        .zip(&spec.factors)
        .map(|(e, f)| (1.1 * e).max(1e-9 * f.sphere.radius).min(f.sphere.diameter()))
        .collect();
    for attempt in 0..8 {
        let vol: f64 = spec.factors.iter().zip(&radii).map(|(f, r)| f.sphere.cap_volume(*r)).product();
        let mc_a = mc.reseed(attempt);
        let (count, hits) = run(phi, s, &mc_a, vol, |rng| {
            ProductPoint::new(
                spec.factors
                    .iter()
                    .zip(&s.anchor.blocks)
                    .zip(&radii)
                    .map(|((f, c), r)| f.sphere.sample_cap(c, *r, rng))
                    .collect(),
            )
        });
        let mut grow = false;
        for (i, f) in spec.factors.iter().enumerate() {
            if radii[i] >= f.sphere.diameter() {
                continue;
            }
            let shell = hits
                .iter()
                .any(|h| f.sphere.distance(&h.blocks[i], &s.anchor.blocks[i]) > 0.95 * radii[i]);
            if shell {
                radii[i] = (2.0 * radii[i]).min(f.sphere.diameter());
                grow = true;
            }
        }
        if !grow || attempt == 7 {
            return finish(spec, mc_a.samples, count, hits, vol, SectionMethod::LocalCaps, radii);
        }
    }
    unreachable!()
}

/// Uniform random interior anchor helper for tests and diagnostics.
pub fn random_section<R: Rng>(spec: &ProductSpec, rng: &mut R, height: f64) -> SectionSpec {
    let anchor = spec.sample_uniform(rng);
    SectionSpec {
        slope: anchor.clone(),
        anchor,
        height,
    }
}
