//! Procedural texture generation: a desk-scale stand-in for benchmark
//! texture suites that cannot be redistributed.
//!
//! Classes cycle through three families at increasingly fine parameters:
//! oriented sinusoid gratings, checkerboards, and band-limited noise. Each
//! sample renders its class texture at a rotation drawn from the configured
//! angle set plus a random brightness offset, all driven by one seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::jetspace::{correlate_cols, correlate_rows};
use crate::kernels::{default_support_radius, dtg_taps_1d};

use super::dataset::{Dataset, Sample, SampleSource};
use super::split_seed;

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    /// Square sample side in pixels.
    pub size: usize,
    /// Rotation angles (degrees) drawn uniformly per sample; empty means
    /// no rotation.
    pub rotations_deg: Vec<f64>,
    /// Brightness offsets drawn uniformly from `[-j, +j]`.
    pub brightness_jitter: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 6,
            samples_per_class: 20,
            size: 64,
            rotations_deg: vec![0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0],
            brightness_jitter: 20.0,
            seed: 42,
        }
    }
}

const MIN_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Kind {
    Grating { freq: f64 },
    Checker { period: f64 },
    SmoothNoise { blur_sigma: f64 },
}

impl Kind {
    fn for_class(c: usize) -> (Kind, String) {
        // Every sixth class revisits a family at a finer parameter so any
        // class count stays pairwise distinguishable.
        let generation = (c / 6) as f64;
        match c % 6 {
            0 => {
                let f = 0.15 * (1.0 + 0.5 * generation);
                (Kind::Grating { freq: f }, format!("{c:02}_grating{f:.3}"))
            }
            1 => {
                let f = 0.30 * (1.0 + 0.5 * generation);
                (Kind::Grating { freq: f }, format!("{c:02}_grating{f:.3}"))
            }
            2 => {
                let p = 8.0 / (1.0 + 0.5 * generation);
                (Kind::Checker { period: p }, format!("{c:02}_checker{p:.1}"))
            }
            3 => {
                let p = 16.0 / (1.0 + 0.5 * generation);
                (Kind::Checker { period: p }, format!("{c:02}_checker{p:.1}"))
            }
            4 => {
                let s = 1.0 * (1.0 + 0.7 * generation);
                (Kind::SmoothNoise { blur_sigma: s }, format!("{c:02}_noise{s:.1}"))
            }
            _ => {
                let s = 3.0 * (1.0 + 0.7 * generation);
                (Kind::SmoothNoise { blur_sigma: s }, format!("{c:02}_noise{s:.1}"))
            }
        }
    }
}

/// Zero-mean unit-variance random field, larger than the sample so rotated
/// sampling stays inside.
struct Field {
    data: Vec<f64>,
    side: usize,
}

impl Field {
    fn noise(size: usize, blur_sigma: f64, seed: u64) -> Field {
        let side = (size * 3) / 2 + 8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let white: Vec<f64> = (0..side * side)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let taps = dtg_taps_1d(0, blur_sigma, default_support_radius(blur_sigma))
            .expect("blur sigma is positive");
        let blurred = correlate_cols(&correlate_rows(&white, side, &taps), side, side, &taps);
        let mean = blurred.iter().sum::<f64>() / blurred.len() as f64;
        let var =
            blurred.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / blurred.len() as f64;
        let std = var.sqrt().max(1e-12);
        Field {
            data: blurred.iter().map(|v| (v - mean) / std).collect(),
            side,
        }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        let half = (self.side as f64 - 1.0) / 2.0;
        bilinear(&self.data, self.side, u + half, v + half)
    }
}

enum Structure {
    Grating { freq: f64, amp: f64 },
    Checker { period: f64, amp: f64 },
    SmoothNoise { field: Field, amp: f64 },
}

/// A class's base texture: its distinguishing structure plus a fine
/// stochastic grain canvas shared by every class (real textures are never
/// band-limited to the structure alone). Both components rotate together,
/// so a class at a fixed rotation always renders identically.
struct BaseTexture {
    structure: Structure,
    grain: Field,
    grain_amp: f64,
}

/// Grain correlation length; fine enough that jet-scale smoothing removes
/// it while pixel-level sign comparisons drown in it.
const GRAIN_SIGMA: f64 = 0.7;
const GRAIN_AMP: f64 = 32.0;

impl BaseTexture {
    fn build(kind: &Kind, size: usize, class_seed: u64, shared_seed: u64) -> BaseTexture {
        let structure = match *kind {
            Kind::Grating { freq } => Structure::Grating { freq, amp: 35.0 },
            Kind::Checker { period } => Structure::Checker { period, amp: 30.0 },
            Kind::SmoothNoise { blur_sigma } => Structure::SmoothNoise {
                field: Field::noise(size, blur_sigma, class_seed),
                amp: 35.0,
            },
        };
        BaseTexture {
            structure,
            grain: Field::noise(size, GRAIN_SIGMA, shared_seed),
            grain_amp: GRAIN_AMP,
        }
    }

    /// Texture value at sample pixel `(x, y)` under rotation `phi`.
    fn value(&self, x: usize, y: usize, size: usize, phi: f64) -> f64 {
        let cx = (size as f64 - 1.0) / 2.0;
        let cy = cx;
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let (sin, cos) = phi.sin_cos();
        let u = dx * cos + dy * sin;
        let v = -dx * sin + dy * cos;
        let structure = match self.structure {
            Structure::Grating { freq, amp } => amp * (std::f64::consts::TAU * freq * u).sin(),
            Structure::Checker { period, amp } => {
                let g = (std::f64::consts::TAU * u / period).sin()
                    * (std::f64::consts::TAU * v / period).sin();
                if g >= 0.0 {
                    amp
                } else {
                    -amp
                }
            }
            Structure::SmoothNoise { ref field, amp } => amp * field.at(u, v),
        };
        structure + self.grain_amp * self.grain.at(u, v)
    }
}

fn bilinear(data: &[f64], side: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let clamp = |v: isize| v.clamp(0, side as isize - 1) as usize;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |px: isize, py: isize| data[clamp(py) * side + clamp(px)];
    let a = at(x0, y0);
    let b = at(x0 + 1, y0);
    let c = at(x0, y0 + 1);
    let d = at(x0 + 1, y0 + 1);
    a + fx * (b - a) + fy * (c - a) + fx * fy * (a - b - c + d)
}

/// Renders the full synthetic dataset in memory; the same spec always
/// produces the identical dataset.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    if spec.classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "synthetic dataset needs at least 2 classes, got {}",
            spec.classes
        )));
    }
    if spec.samples_per_class < 1 {
        return Err(Error::InvalidParameter(
            "samples_per_class must be at least 1".into(),
        ));
    }
    if spec.size < MIN_SIZE {
        return Err(Error::InvalidParameter(format!(
            "sample size {} is degenerate (minimum {MIN_SIZE})",
            spec.size
        )));
    }
    if !spec.brightness_jitter.is_finite() || spec.brightness_jitter < 0.0 {
        return Err(Error::InvalidParameter(
            "brightness jitter must be non-negative".into(),
        ));
    }

    let mut class_names = Vec::with_capacity(spec.classes);
    let mut samples = Vec::with_capacity(spec.classes * spec.samples_per_class);
    let shared_seed = split_seed(spec.seed, &[0]);
    for c in 0..spec.classes {
        let (kind, name) = Kind::for_class(c);
        let texture = BaseTexture::build(
            &kind,
            spec.size,
            split_seed(spec.seed, &[1, c as u64]),
            shared_seed,
        );
        for s in 0..spec.samples_per_class {
            let mut rng =
                ChaCha8Rng::seed_from_u64(split_seed(spec.seed, &[2, c as u64, s as u64]));
            let phi = if spec.rotations_deg.is_empty() {
                0.0
            } else {
                spec.rotations_deg[rng.gen_range(0..spec.rotations_deg.len())].to_radians()
            };
            let offset = if spec.brightness_jitter > 0.0 {
                rng.gen_range(-spec.brightness_jitter..=spec.brightness_jitter)
            } else {
                0.0
            };
            let img = GrayImage::from_fn(spec.size, spec.size, |x, y| {
                128.0 + offset + texture.value(x, y, spec.size, phi)
            });
            samples.push(Sample {
                rel_path: format!("{name}/sample{s:03}.png"),
                label: c,
                source: SampleSource::Memory(img),
            });
        }
        class_names.push(name);
    }

    Ok(Dataset {
        name: format!("synthetic-{}x{}", spec.classes, spec.samples_per_class),
        root: None,
        class_names,
        samples,
        suite_split: None,
    })
}

/// Writes every in-memory sample of a dataset as an 8-bit PNG under `dir`,
/// following each sample's relative path.
pub fn write_dataset_images(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sample in &dataset.samples {
        let img = match &sample.source {
            SampleSource::Memory(img) => img.clone(),
            SampleSource::File(path) => GrayImage::load(path)?,
        };
        let target = dir.join(&sample.rel_path);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        img.save_png(&target)
            .map_err(|e| e.with_path(target.clone()))?;
    }
    Ok(())
}
