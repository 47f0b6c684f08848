//! Synthetic nodule phantoms with known attribute and malignancy ground truth.
//!
//! Each phantom is an ellipsoid in a noisy parenchyma background. The six
//! attribute scores drive its geometry and texture, and a linear latent score
//! over the centered attributes plays the role of the true malignancy.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{save_manifest, NoduleRecord};
use crate::error::{Error, Result};
use crate::seed;
use crate::volume::{save_volume, Volume};

pub const RATERS: usize = 3;
/// Latent weights in attribute order (calcification, spiculation, lobulation,
/// margin, sphericity, texture).
const LATENT_WEIGHTS: [f64; 6] = [-0.4, 0.6, 0.5, -0.3, -0.3, 0.2];
const BACKGROUND_HU: f64 = -850.0;
const BACKGROUND_SD: f64 = 25.0;
const NODULE_HU: f64 = 30.0;
const CALCIFICATION_HU: f64 = 500.0;
const SPIKES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    /// Volume side in voxels.
    pub side: usize,
    pub seed: u64,
    /// Voxel spacing in mm.
    pub spacing: [f64; 3],
    /// Standard deviation of the latent score noise.
    pub latent_noise: f64,
    /// Standard deviation of each rater's noise around the latent score.
    pub rater_noise: f64,
    /// Overrides the uniform attribute draw.
    pub fixed_attributes: Option<[f64; 6]>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 100,
            side: 41,
            seed: 0,
            spacing: [0.75, 0.75, 1.0],
            latent_noise: 0.3,
            rater_noise: 0.4,
            fixed_attributes: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("count", "must be at least 1"));
        }
        if self.side < 9 {
            return Err(Error::invalid("side", "must be at least 9 voxels"));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("spacing", "must be positive"));
        }
        if !(self.latent_noise >= 0.0 && self.rater_noise >= 0.0) {
            return Err(Error::invalid("noise", "standard deviations must be non-negative"));
        }
        if let Some(a) = self.fixed_attributes {
            if a.iter().any(|v| !(1.0..=5.0).contains(v)) {
                return Err(Error::invalid("fixed_attributes", "scores must lie in [1, 5]"));
            }
        }
        Ok(())
    }
}

/// `3 + Σ w_k (a_k − 3)/2 + noise`, clamped to [1, 5].
pub fn latent_malignancy(attributes: &[f64; 6], noise: f64) -> f64 {
    let m = 3.0
        + LATENT_WEIGHTS
            .iter()
            .zip(attributes)
            .map(|(w, a)| w * (a - 3.0) / 2.0)
            .sum::<f64>()
        + noise;
    m.clamp(1.0, 5.0)
}

/// Everything random about one phantom except its voxel noise.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub attributes: [f64; 6],
    pub latent: f64,
    pub ratings: Vec<u8>,
    /// Nodule center in voxel indices.
    pub center: [usize; 3],
    radius_mm: f64,
    orientation: f64,
    lobe_phase: [f64; 2],
    spikes: Vec<[f64; 3]>,
    specks: Vec<[f64; 3]>,
    noise_seed: u64,
}

fn unit_vector(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return v.map(|c| c / n);
        }
    }
}

impl Phantom {
    pub fn draw(cfg: &SynthConfig, index: usize) -> Self {
        let mut rng = seed::rng_for(seed::derive(cfg.seed, seed::TAG_SYNTH), index as u64);
        let attributes = cfg
            .fixed_attributes
            .unwrap_or_else(|| std::array::from_fn(|_| (rng.random_range(1.0..=5.0f64) * 100.0).round() / 100.0));
        let radius_mm = rng.random_range(8.0..10.5);
        let orientation = rng.random_range(0.0..PI);
        let lobe_phase = [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)];
        let spikes = (0..SPIKES).map(|_| unit_vector(&mut rng)).collect();
        let n_specks = (6.0 * (attributes[0] - 1.0)).round() as usize;
        let specks = (0..n_specks)
            .map(|_| {
                let u = unit_vector(&mut rng);
                let r = 0.6 * rng.random::<f64>().cbrt();
                u.map(|c| c * r)
            })
            .collect();
        let half = cfg.side / 2;
        let center = std::array::from_fn(|_| (half as i64 + rng.random_range(-2..=2)) as usize);
        let z: f64 = rng.sample(StandardNormal);
        let latent = latent_malignancy(&attributes, cfg.latent_noise * z);
        let ratings = (0..RATERS)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                (latent + cfg.rater_noise * e).round().clamp(1.0, 5.0) as u8
            })
            .collect();
        let noise_seed = seed::derive(seed::derive(cfg.seed, seed::TAG_SYNTH_NOISE), index as u64);
        Self {
            attributes,
            latent,
            ratings,
            center,
            radius_mm,
            orientation,
            lobe_phase,
            spikes,
            specks,
            noise_seed,
        }
    }
}

/// Renders a phantom in HU-like units.
pub fn render_phantom(p: &Phantom, cfg: &SynthConfig) -> Result<Volume<f64>> {
    let [_, spic, lob, marg, sph, tex] = p.attributes;
    let q = 0.7 + 0.3 * (sph - 1.0) / 4.0;
    let radii = [p.radius_mm, p.radius_mm * q, p.radius_mm * (1.0 + q) / 2.0];
    let lobe_amp = 0.25 * (lob - 1.0) / 4.0;
    let spike_len = 1.0 * (spic - 1.0) / 4.0;
    let spike_width: f64 = 0.45;
    let cos_width = spike_width.cos();
    let blur = 0.04 + 0.22 * (5.0 - marg) / 4.0;
    let texture_sd = 15.0 + 85.0 * (tex - 1.0) / 4.0;
    let speck_r = 1.2 / p.radius_mm;
    let (sin_o, cos_o) = p.orientation.sin_cos();
    let mut rng = seed::rng(p.noise_seed);
    let n = cfg.side;
    let mut voxels = Vec::with_capacity(n * n * n);
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let mm: [f64; 3] = std::array::from_fn(|a| ([x, y, z][a] as f64 - p.center[a] as f64) * cfg.spacing[a]);
                // rotate in-plane, then normalize by the ellipsoid radii
                let e = [
                    (cos_o * mm[0] + sin_o * mm[1]) / radii[0],
                    (-sin_o * mm[0] + cos_o * mm[1]) / radii[1],
                    mm[2] / radii[2],
                ];
                let rho = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                let u = if rho > 1e-12 {
                    e.map(|c| c / rho)
                } else {
                    [0.0, 0.0, 1.0]
                };
                let theta = u[1].atan2(u[0]);
                let mut boundary = 1.0
                    + lobe_amp * (3.0 * theta + p.lobe_phase[0]).cos() * (1.0 - u[2] * u[2]).sqrt()
                    + 0.5 * lobe_amp * (2.0 * PI * u[2] + p.lobe_phase[1]).cos();
                if spike_len > 0.0 {
                    for d in &p.spikes {
                        let c = u[0] * d[0] + u[1] * d[1] + u[2] * d[2];
                        if c > cos_width {
                            let t = 1.0 - c.min(1.0).acos() / spike_width;
                            boundary += spike_len * t * t;
                        }
                    }
                }
                let occupancy = 1.0 / (1.0 + ((rho - boundary) / blur).exp());
                let bg: f64 = rng.sample(StandardNormal);
                let inner: f64 = rng.sample(StandardNormal);
                let mut v = (BACKGROUND_HU + BACKGROUND_SD * bg) * (1.0 - occupancy)
                    + (NODULE_HU + texture_sd * inner) * occupancy;
                for s in &p.specks {
                    let d2 = (e[0] - s[0]).powi(2) + (e[1] - s[1]).powi(2) + (e[2] - s[2]).powi(2);
                    if d2 < 4.0 * speck_r * speck_r {
                        v += CALCIFICATION_HU * (-d2 / (speck_r * speck_r)).exp();
                    }
                }
                voxels.push(v);
            }
        }
    }
    Volume::new([n; 3], cfg.spacing, voxels)
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub records: Vec<NoduleRecord>,
    pub latent: Vec<f64>,
}

/// Writes `volumes/<id>.rvol`, `manifest.csv` and `truth.csv` (id, latent)
/// under `out_dir`.
pub fn synth_generate(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<SynthOutput> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    let vol_dir = out_dir.join("volumes");
    std::fs::create_dir_all(&vol_dir).map_err(|e| Error::io(&vol_dir, e))?;
    let width = cfg.count.to_string().len().max(4);
    let mut records = Vec::with_capacity(cfg.count);
    let mut latent = Vec::with_capacity(cfg.count);
    let mut truth = String::from("id,latent\n");
    for i in 0..cfg.count {
        let p = Phantom::draw(cfg, i);
        let id = format!("n{i:0width$}");
        let rel = format!("volumes/{id}.rvol");
        save_volume(&render_phantom(&p, cfg)?, out_dir.join(&rel))?;
        writeln!(truth, "{id},{}", p.latent).expect("write to string");
        records.push(NoduleRecord {
            id,
            volume_path: rel,
            center: p.center,
            ratings: p.ratings.clone(),
            attributes: p.attributes.map(Some),
        });
        latent.push(p.latent);
    }
    let manifest = out_dir.join("manifest.csv");
    save_manifest(&records, &manifest)?;
    let truth_path = out_dir.join("truth.csv");
    std::fs::write(&truth_path, truth).map_err(|e| Error::io(&truth_path, e))?;
    Ok(SynthOutput {
        manifest,
        records,
        latent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::consensus_label;

    fn small() -> SynthConfig {
        SynthConfig {
            count: 4,
            side: 15,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn neutral_attributes_give_neutral_latent() {
        assert_eq!(latent_malignancy(&[3.0; 6], 0.0), 3.0);
        let cfg = SynthConfig {
            fixed_attributes: Some([3.0; 6]),
            latent_noise: 0.0,
            rater_noise: 0.0,
            ..small()
        };
        let p = Phantom::draw(&cfg, 0);
        assert_eq!(p.latent, 3.0);
        assert_eq!(p.ratings, vec![3, 3, 3]);
        let rec = NoduleRecord {
            id: "x".into(),
            volume_path: String::new(),
            center: p.center,
            ratings: p.ratings,
            attributes: [Some(3.0); 6],
        };
        assert!(consensus_label(&[rec]).0.is_empty());
    }

    #[test]
    fn latent_direction() {
        let mut a = [3.0; 6];
        a[1] = 5.0;
        assert!((latent_malignancy(&a, 0.0) - 3.6).abs() < 1e-12);
        a[0] = 5.0;
        assert!((latent_malignancy(&a, 0.0) - 3.2).abs() < 1e-12);
        assert_eq!(latent_malignancy(&[3.0; 6], 9.0), 5.0);
    }

    #[test]
    fn generation_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out = synth_generate(&small(), a.path()).unwrap();
        synth_generate(&small(), b.path()).unwrap();
        assert_eq!(out.records.len(), 4);
        for rel in ["manifest.csv", "truth.csv", "volumes/n0000.rvol", "volumes/n0003.rvol"] {
            assert_eq!(
                std::fs::read(a.path().join(rel)).unwrap(),
                std::fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
        let back = crate::dataset::load_manifest(&out.manifest).unwrap();
        assert_eq!(back, out.records);
    }

    #[test]
    fn nodule_brighter_than_background() {
        let cfg = small();
        let p = Phantom::draw(&cfg, 1);
        let v = render_phantom(&p, &cfg).unwrap();
        let [cx, cy, cz] = p.center;
        assert!(v.get(cx, cy, cz) > -300.0);
        assert!(v.get(0, 0, 0) < -600.0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SynthConfig { count: 0, ..small() }.validate().is_err());
        assert!(SynthConfig { side: 3, ..small() }.validate().is_err());
    }
}
