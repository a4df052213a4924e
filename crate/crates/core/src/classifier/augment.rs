//! Weak and modality-specific strong augmentation.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::ImageSample;
use crate::modality::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AugmentationKind {
    Weak,
    Strong,
}

/// Ranges transforms are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub hflip: bool,
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f64,
    /// Maximum absolute translation as a fraction of the image side.
    pub translate_frac: f64,
    /// Maximum relative contrast change (0.1 → factor in [0.9, 1.1]).
    pub contrast_jitter: f64,
    /// Maximum absolute brightness offset.
    pub brightness_jitter: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        hflip: false,
        rotation_deg: 0.0,
        translate_frac: 0.0,
        contrast_jitter: 0.0,
        brightness_jitter: 0.0,
    };

    pub fn weak() -> Self {
        AugmentParams {
            hflip: true,
            translate_frac: 0.05,
            ..Self::IDENTITY
        }
    }

    /// MRI: wider geometry plus controlled intensity changes.
    pub fn strong_mri() -> Self {
        AugmentParams {
            hflip: true,
            rotation_deg: 15.0,
            translate_frac: 0.15,
            contrast_jitter: 0.1,
            brightness_jitter: 0.05,
        }
    }

    /// CT and X-ray: flips, mild rotation and contrast jitter.
    pub fn strong_default() -> Self {
        AugmentParams {
            hflip: true,
            rotation_deg: 10.0,
            translate_frac: 0.1,
            contrast_jitter: 0.1,
            brightness_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub kind: AugmentationKind,
    pub default: AugmentParams,
    pub modality_overrides: BTreeMap<Modality, AugmentParams>,
}

impl AugmentationPolicy {
    pub fn weak() -> Self {
        Self {
            kind: AugmentationKind::Weak,
            default: AugmentParams::weak(),
            modality_overrides: BTreeMap::new(),
        }
    }

    pub fn strong() -> Self {
        Self {
            kind: AugmentationKind::Strong,
            default: AugmentParams::strong_default(),
            modality_overrides: [(Modality::Mri, AugmentParams::strong_mri())].into_iter().collect(),
        }
    }

    /// Parameter set used for a sample of the given (pseudo-)modality.
    /// Weak policies ignore overrides.
    pub fn params_for(&self, modality: Option<Modality>) -> &AugmentParams {
        match (self.kind, modality) {
            (AugmentationKind::Strong, Some(m)) => self.modality_overrides.get(&m).unwrap_or(&self.default),
            _ => &self.default,
        }
    }
}

/// A concrete draw from an [`AugmentParams`] range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub flip: bool,
    pub angle_deg: f32,
    /// Translation in fractions of width / height.
    pub shift_x: f32,
    pub shift_y: f32,
    pub contrast: f32,
    pub brightness: f32,
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        flip: false,
        angle_deg: 0.0,
        shift_x: 0.0,
        shift_y: 0.0,
        contrast: 1.0,
        brightness: 0.0,
    };

    pub fn sample<R: Rng + ?Sized>(params: &AugmentParams, rng: &mut R) -> Self {
        let mut sym = |limit: f64| {
            let limit = limit as f32;
            if limit > 0.0 {
                rng.random_range(-limit..=limit)
            } else {
                0.0
            }
        };
        let angle_deg = sym(params.rotation_deg);
        let shift_x = sym(params.translate_frac);
        let shift_y = sym(params.translate_frac);
        let contrast = 1.0 + sym(params.contrast_jitter);
        let brightness = sym(params.brightness_jitter);
        let flip = params.hflip && rng.random_bool(0.5);
        Self {
            flip,
            angle_deg,
            shift_x,
            shift_y,
            contrast,
            brightness,
        }
    }

    /// Applies the transform by inverse mapping with bilinear sampling;
    /// regions mapped from outside the source are zero. Output is clamped to [0,1].
    pub fn apply(&self, image: &ImageSample) -> ImageSample {
        let (h, w) = (image.height, image.width);
        let (cy, cx) = ((h as f32 - 1.0) / 2.0, (w as f32 - 1.0) / 2.0);
        let (sin, cos) = self.angle_deg.to_radians().sin_cos();
        let (dy, dx) = (self.shift_y * h as f32, self.shift_x * w as f32);
        let adjust_intensity = self.contrast != 1.0 || self.brightness != 0.0;
        let mut pixels = Vec::with_capacity(image.pixels.len());
        for y in 0..h {
            for x in 0..w {
                // undo translation, then rotation, then flip
                let (ry, rx) = (y as f32 - dy - cy, x as f32 - dx - cx);
                let sy = cos * ry - sin * rx + cy;
                let mut sx = sin * ry + cos * rx + cx;
                if self.flip {
                    sx = w as f32 - 1.0 - sx;
                }
                for c in 0..image.channels {
                    let v = image.sample_bilinear(sy, sx, c).unwrap_or(0.0);
                    let v = if adjust_intensity { (v - 0.5) * self.contrast + 0.5 + self.brightness } else { v };
                    pixels.push(v.clamp(0.0, 1.0));
                }
            }
        }
        ImageSample {
            pixels,
            ..image.clone()
        }
    }
}

/// Draws and applies one augmentation. `modality` selects strong overrides;
/// when absent the image's own label is used.
pub fn augment<R: Rng + ?Sized>(
    image: &ImageSample,
    policy: &AugmentationPolicy,
    modality: Option<Modality>,
    rng: &mut R,
) -> ImageSample {
    let params = policy.params_for(modality.or(image.modality_label));
    Transform::sample(params, rng).apply(image)
}
