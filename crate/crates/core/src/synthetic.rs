//! Procedural three-class image set for exercising the classifier without
//! real scans. Classes differ in the spatial-frequency band of an oriented
//! grating texture laid over a smooth random background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data_io::ImageSample;
use crate::modality::Modality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub size: usize,
    /// Grating frequency band (cycles per image) for CT, MRI, X-ray.
    pub bands: [(f32, f32); 3],
    pub texture_amplitude: (f32, f32),
    pub background_amplitude: f32,
    /// Radius range of the background blobs, as a fraction of the side.
    pub blob_radius: (f32, f32),
    pub noise_std: f32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            size: 32,
            bands: [(1.0, 3.0), (3.5, 6.0), (6.5, 10.0)],
            texture_amplitude: (0.08, 0.25),
            background_amplitude: 0.25,
            blob_radius: (0.15, 0.4),
            noise_std: 0.12,
        }
    }
}

impl SyntheticSpec {
    /// One image of class `modality`.
    pub fn sample<R: Rng>(&self, modality: Modality, rng: &mut R) -> ImageSample {
        let s = self.size as f32;
        let (lo, hi) = self.bands[modality.index()];
        let freq = rng.random_range(lo..hi);
        let theta = rng.random_range(0.0..std::f32::consts::PI);
        let phase = rng.random_range(0.0..std::f32::consts::TAU);
        let amp = rng.random_range(self.texture_amplitude.0..self.texture_amplitude.1);
        let blobs: Vec<(f32, f32, f32, f32)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.0..s),
                    rng.random_range(0.0..s),
                    rng.random_range(self.blob_radius.0 * s..self.blob_radius.1 * s),
                    rng.random_range(-1.0..1.0) * self.background_amplitude,
                )
            })
            .collect();
        let offset = rng.random_range(-0.1..0.1);
        let noise = Normal::new(0.0, self.noise_std.max(1e-6)).expect("finite std");
        let (sin, cos) = theta.sin_cos();
        let mut pixels = Vec::with_capacity(self.size * self.size);
        for y in 0..self.size {
            for x in 0..self.size {
                let (yf, xf) = (y as f32, x as f32);
                let background: f32 = blobs
                    .iter()
                    .map(|(by, bx, r, a)| a * (-((yf - by).powi(2) + (xf - bx).powi(2)) / (2.0 * r * r)).exp())
                    .sum();
                let u = (xf * cos + yf * sin) / s;
                let texture = amp * (std::f32::consts::TAU * freq * u + phase).cos();
                let v = 0.5 + offset + background + texture + noise.sample(rng);
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        ImageSample::new(self.size, self.size, 1, pixels)
            .expect("synthetic buffer is well formed")
            .with_label(Some(modality))
    }

    /// `per_class` images of each class, interleaved CT, MRI, X-ray, with
    /// record ids `syn-<seed>-<n>`.
    pub fn generate(&self, per_class: usize, seed: u64) -> Vec<ImageSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..per_class)
            .flat_map(|_| Modality::ALL)
            .enumerate()
            .map(|(n, m)| self.sample(m, &mut rng).with_id(format!("syn-{seed}-{n}")))
            .collect()
    }
}
