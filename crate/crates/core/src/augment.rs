//! Training-sample expansion: rotation, two-way rescaling and four noise
//! models applied to a [`ProjectionTensor`].

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::seed;
use crate::tensor::{ProjectionTensor, CHANNELS};

/// Poisson noise quantizes the intensity range into this many levels.
const POISSON_LEVELS: f64 = 255.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Augmented samples generated per input tensor.
    pub count: usize,
    pub scale_up: f64,
    pub scale_down: f64,
    /// Gaussian mean drawn from `±gaussian_mean_range * range`.
    pub gaussian_mean_range: f64,
    /// Gaussian std as a fraction of the intensity range.
    pub gaussian_sigma: f64,
    /// Fraction of pixels per channel hit by salt-and-pepper noise.
    pub sp_fraction: f64,
    /// Std of the multiplicative speckle factor.
    pub speckle_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            count: 50,
            scale_up: 1.25,
            scale_down: 0.8,
            gaussian_mean_range: 0.05,
            gaussian_sigma: 0.02,
            sp_fraction: 0.02,
            speckle_sigma: 0.1,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count", "must be at least 1"));
        }
        if !(self.scale_up > 1.0) || !self.scale_up.is_finite() {
            return Err(Error::invalid("scale_up", "must exceed 1"));
        }
        if !(self.scale_down > 0.0 && self.scale_down < 1.0) {
            return Err(Error::invalid("scale_down", "must lie in (0, 1)"));
        }
        for (name, v) in [
            ("gaussian_mean_range", self.gaussian_mean_range),
            ("gaussian_sigma", self.gaussian_sigma),
            ("sp_fraction", self.sp_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, format!("{v} outside [0, 1]")));
            }
        }
        if !(self.speckle_sigma >= 0.0) || !self.speckle_sigma.is_finite() {
            return Err(Error::invalid("speckle_sigma", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Poisson,
    SaltPepper,
    Speckle,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [
        NoiseKind::Gaussian,
        NoiseKind::Poisson,
        NoiseKind::SaltPepper,
        NoiseKind::Speckle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Poisson => "poisson",
            NoiseKind::SaltPepper => "salt_pepper",
            NoiseKind::Speckle => "speckle",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("noise kind", format!("unknown kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleChoice {
    Keep,
    Up,
    Down,
}

/// The random choices behind one augmented sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecipe {
    pub angle_deg: f64,
    pub scale: ScaleChoice,
    pub noise: NoiseKind,
    /// Mean of the additive Gaussian, when that noise was used.
    pub gaussian_mean: Option<f64>,
}

/// Exact (cos, sin) for multiples of 90 degrees so those rotations map the
/// pixel grid onto itself.
fn cos_sin(deg: f64) -> (f64, f64) {
    let r = deg.rem_euclid(360.0);
    if r % 90.0 == 0.0 {
        match (r / 90.0) as u32 {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let rad = r.to_radians();
        (rad.cos(), rad.sin())
    }
}

#[inline]
fn lerp<T: Real>(a: T, b: T, w: T) -> T {
    if w == T::zero() {
        a
    } else {
        a + (b - a) * w
    }
}

/// Bilinear sample at (x, y) with border replication.
fn sample_clamped<T: Real>(ch: &[T], side: usize, x: T, y: T) -> T {
    let last = T::from_usize_lossy(side - 1);
    let x = x.max(T::zero()).min(last);
    let y = y.max(T::zero()).min(last);
    let x0 = x.floor().as_f64() as usize;
    let y0 = y.floor().as_f64() as usize;
    let x1 = (x0 + 1).min(side - 1);
    let y1 = (y0 + 1).min(side - 1);
    let wx = x - T::from_usize_lossy(x0);
    let wy = y - T::from_usize_lossy(y0);
    let top = lerp(ch[x0 + side * y0], ch[x1 + side * y0], wx);
    let bottom = lerp(ch[x0 + side * y1], ch[x1 + side * y1], wx);
    lerp(top, bottom, wy)
}

/// Resamples every channel through `source(u, v) -> (x, y)`.
fn warp<T: Real>(t: &ProjectionTensor<T>, source: impl Fn(T, T) -> (T, T)) -> ProjectionTensor<T> {
    let side = t.side();
    let mut data = Vec::with_capacity(t.data().len());
    for c in 0..CHANNELS {
        let ch = t.channel(c);
        for v in 0..side {
            for u in 0..side {
                let (x, y) = source(T::from_usize_lossy(u), T::from_usize_lossy(v));
                data.push(sample_clamped(ch, side, x, y));
            }
        }
    }
    ProjectionTensor::from_raw(side, data)
}

/// Rotates every channel about the image center by `angle_deg`.
///
/// Output pixel `p` samples the input at `c + R(angle) (p - c)`; a quarter turn
/// therefore equals a transpose followed by a vertical flip.
pub fn rotate<T: Real>(t: &ProjectionTensor<T>, angle_deg: f64) -> ProjectionTensor<T> {
    let (c, s) = cos_sin(angle_deg);
    let (c, s) = (T::lit(c), T::lit(s));
    let center = T::from_usize_lossy(t.side() - 1) / T::lit(2.0);
    warp(t, |u, v| {
        let (du, dv) = (u - center, v - center);
        (center + c * du - s * dv, center + s * du + c * dv)
    })
}

/// Center-anchored zoom by `factor`, cropped or border-padded back to size.
pub fn rescale<T: Real>(t: &ProjectionTensor<T>, factor: f64) -> Result<ProjectionTensor<T>> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::invalid("factor", format!("{factor} must be positive")));
    }
    let f = T::lit(factor);
    let center = T::from_usize_lossy(t.side() - 1) / T::lit(2.0);
    Ok(warp(t, |u, v| (center + (u - center) / f, center + (v - center) / f)))
}

pub fn add_noise<T: Real, R: Rng + ?Sized>(
    t: &ProjectionTensor<T>,
    kind: NoiseKind,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> ProjectionTensor<T> {
    add_noise_traced(t, kind, cfg, rng).0
}

/// As [`add_noise`], also returning the Gaussian mean when one was drawn.
pub fn add_noise_traced<T: Real, R: Rng + ?Sized>(
    t: &ProjectionTensor<T>,
    kind: NoiseKind,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> (ProjectionTensor<T>, Option<f64>) {
    let lo = t.data().iter().copied().fold(T::infinity(), T::min).as_f64();
    let hi = t.data().iter().copied().fold(T::neg_infinity(), T::max).as_f64();
    let range = hi - lo;
    match kind {
        NoiseKind::Gaussian => {
            let mean = (2.0 * rng.random::<f64>() - 1.0) * cfg.gaussian_mean_range * range;
            let sigma = cfg.gaussian_sigma * range;
            let out = t.map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                v + T::lit(mean + sigma * z)
            });
            (out, Some(mean))
        }
        NoiseKind::Poisson => {
            if !(range > 0.0) {
                return (t.clone(), None);
            }
            let out = t.map(|v| {
                let lambda = ((v.as_f64() - lo).max(0.0) / range) * POISSON_LEVELS;
                let draw = if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive finite rate").sample(rng)
                } else {
                    0.0
                };
                T::lit(lo + draw * range / POISSON_LEVELS)
            });
            (out, None)
        }
        NoiseKind::SaltPepper => {
            let mut out = t.clone();
            let n = t.side() * t.side();
            let hits = ((cfg.sp_fraction * n as f64).round() as usize).min(n);
            for c in 0..CHANNELS {
                let ch = out.channel_mut(c);
                let cmin = ch.iter().copied().fold(T::infinity(), T::min);
                let cmax = ch.iter().copied().fold(T::neg_infinity(), T::max);
                for i in index::sample(rng, n, hits).into_iter() {
                    ch[i] = if rng.random::<bool>() { cmax } else { cmin };
                }
            }
            (out, None)
        }
        NoiseKind::Speckle => {
            if cfg.speckle_sigma == 0.0 {
                return (t.clone(), None);
            }
            let out = t.map(|v| {
                let z: f64 = rng.sample(StandardNormal);
                v * T::lit(1.0 + cfg.speckle_sigma * z)
            });
            (out, None)
        }
    }
}

/// Produces augmented sample `index` of `t`, using a generator derived from
/// `(cfg.seed, index)`.
pub fn augment_one<T: Real>(
    t: &ProjectionTensor<T>,
    cfg: &AugmentConfig,
    index: usize,
) -> (ProjectionTensor<T>, SampleRecipe) {
    let mut rng = seed::rng_for(cfg.seed, index as u64);
    let angle_deg = rng.random::<f64>() * 360.0;
    let scale = [ScaleChoice::Keep, ScaleChoice::Up, ScaleChoice::Down][rng.random_range(0..3)];
    let noise = NoiseKind::ALL[rng.random_range(0..NoiseKind::ALL.len())];

    let rotated = rotate(t, angle_deg);
    let scaled = match scale {
        ScaleChoice::Keep => rotated,
        ScaleChoice::Up => rescale(&rotated, cfg.scale_up).expect("validated factor"),
        ScaleChoice::Down => rescale(&rotated, cfg.scale_down).expect("validated factor"),
    };
    let (out, gaussian_mean) = add_noise_traced(&scaled, noise, cfg, &mut rng);
    (
        out,
        SampleRecipe {
            angle_deg,
            scale,
            noise,
            gaussian_mean,
        },
    )
}

pub fn augment_set<T: Real>(t: &ProjectionTensor<T>, cfg: &AugmentConfig) -> Result<Vec<ProjectionTensor<T>>> {
    Ok(augment_set_traced(t, cfg)?.into_iter().map(|(t, _)| t).collect())
}

pub fn augment_set_traced<T: Real>(
    t: &ProjectionTensor<T>,
    cfg: &AugmentConfig,
) -> Result<Vec<(ProjectionTensor<T>, SampleRecipe)>> {
    cfg.validate()?;
    Ok((0..cfg.count).map(|i| augment_one(t, cfg, i)).collect())
}
