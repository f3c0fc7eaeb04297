//! Training images and patch sampling.

use std::path::Path;

use gmc_core::image::read_ppm;
use gmc_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Dataset;
use crate::error::{Result, TrainError};

/// Procedural RGB textures in `[0, 1]`, quantized to 8-bit levels. Each image
/// mixes three oriented gratings with a colour ramp and a blocky pattern so
/// the codec sees edges as well as smooth regions.
pub fn synthetic_textures(count: usize, size: usize, seed: u64) -> Vec<Tensor> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let waves: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
                .map(|_| {
                    let theta = rng.random_range(0.0..std::f64::consts::PI);
                    let freq = rng.random_range(0.05..0.6);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    let gain = [
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                    ];
                    (freq * theta.cos(), freq * theta.sin(), phase, gain)
                })
                .collect();
            let base = [
                rng.random_range(0.25..0.75),
                rng.random_range(0.25..0.75),
                rng.random_range(0.25..0.75),
            ];
            let ramp = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
            let block = rng.random_range(4..16usize);
            let contrast = rng.random_range(0.0..0.15);
            let inv = 1.0 / size as f64;
            Tensor::from_fn([1, 3, size, size], |_, c, y, x| {
                let (xf, yf) = (x as f64, y as f64);
                let mut v = base[c] + ramp[0] * xf * inv + ramp[1] * yf * inv;
                for (kx, ky, ph, gain) in &waves {
                    v += gain[c] * (kx * xf + ky * yf + ph).sin();
                }
                if (x / block + y / block) % 2 == 0 {
                    v += contrast;
                }
                (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
            })
        })
        .collect()
}

/// Every `.ppm` file in `dir`, in file-name order.
pub fn load_directory(dir: &Path) -> Result<Vec<Tensor>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| TrainError::EmptyDataset(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(TrainError::EmptyDataset(format!("no .ppm files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| Ok(read_ppm(p)?.to_tensor()))
        .collect()
}

pub fn load_dataset(dataset: &Dataset, seed: u64) -> Result<Vec<Tensor>> {
    match dataset {
        Dataset::Synthetic { count, size } => Ok(synthetic_textures(*count, *size, seed)),
        Dataset::Directory(dir) => load_directory(Path::new(dir)),
    }
}

/// Draws uniform random square crops from images at least `patch` pixels on a side.
#[derive(Clone, Debug)]
pub struct PatchSampler {
    images: Vec<Tensor>,
    patch: usize,
}

impl PatchSampler {
    /// Undersized images are dropped with a warning; an error results only if
    /// none remain.
    pub fn new(images: Vec<Tensor>, patch: usize) -> Result<Self> {
        let total = images.len();
        if let Some(i) = images.iter().position(|t| !t.is_finite()) {
            return Err(TrainError::Config(format!("image {i} contains non-finite values")));
        }
        let usable: Vec<Tensor> = images
            .into_iter()
            .enumerate()
            .filter_map(|(i, t)| {
                let [_, _, h, w] = t.shape();
                if h >= patch && w >= patch {
                    Some(t)
                } else {
                    log::warn!("skipping image {i}: {h}x{w} is smaller than the {patch}-pixel patch");
                    None
                }
            })
            .collect();
        if usable.is_empty() {
            return Err(TrainError::EmptyDataset(format!(
                "none of {total} images is at least {patch}x{patch}"
            )));
        }
        Ok(PatchSampler { images: usable, patch })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Crop origin `(image, top, left)` of the next patch.
    pub fn draw(&self, rng: &mut impl Rng) -> (usize, usize, usize) {
        let i = rng.random_range(0..self.images.len());
        let [_, _, h, w] = self.images[i].shape();
        (i, rng.random_range(0..=h - self.patch), rng.random_range(0..=w - self.patch))
    }

    /// A `(batch, 3, patch, patch)` tensor of fresh crops.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Tensor {
        let p = self.patch;
        let mut data = Vec::with_capacity(batch * 3 * p * p);
        for _ in 0..batch {
            let (i, top, left) = self.draw(rng);
            let img = &self.images[i];
            let [_, _, _, w] = img.shape();
            let src = img.data();
            let plane = img.shape()[2] * w;
            for c in 0..3 {
                for y in top..top + p {
                    let row = c * plane + y * w;
                    data.extend_from_slice(&src[row + left..row + left + p]);
                }
            }
        }
        Tensor::new([batch, 3, p, p], data).expect("sizes computed above")
    }
}

/// One batch of crops from `images`.
pub fn sample_patches(images: &[Tensor], patch: usize, batch: usize, rng: &mut impl Rng) -> Result<Tensor> {
    Ok(PatchSampler::new(images.to_vec(), patch)?.sample(batch, rng))
}
