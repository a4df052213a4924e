//! Dataset loading, weak modality labelling and image decoding.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use image::{imageops::FilterType, DynamicImage, ImageBuffer, Luma, Rgb};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::modality::Modality;

/// One question/answer pair attached to an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaRecord {
    pub record_id: String,
    pub image_path: String,
    pub question: String,
    pub answer: String,
    pub modality_label: Option<Modality>,
}

/// Decoded image, H×W×C row-major, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
    pub modality_label: Option<Modality>,
    pub record_id: String,
}

impl ImageSample {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("expected 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "pixel buffer of {} values does not match {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite pixel value {bad}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels: pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            modality_label: None,
            record_id: String::new(),
        })
    }

    /// Builds an image by evaluating `f(y, x, c)` at every position.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, pixels)
    }

    pub fn with_label(mut self, label: Option<Modality>) -> Self {
        self.modality_label = label;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.record_id = id.into();
        self
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Replicates a single channel to three; three-channel images are returned unchanged.
    pub fn to_rgb(&self) -> ImageSample {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        ImageSample {
            channels: 3,
            pixels,
            ..self.clone()
        }
    }

    /// Channel-first (C×H×W) copy of the pixel data.
    pub fn to_chw(&self) -> Vec<f32> {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[ch * h * w + y * w + x] = self.pixels[(y * w + x) * c + ch];
                }
            }
        }
        out
    }

    /// Bilinear sample at fractional pixel-centre coordinates; `None` outside the image.
    pub fn sample_bilinear(&self, y: f32, x: f32, c: usize) -> Option<f32> {
        let (h, w) = (self.height as f32, self.width as f32);
        if !(y > -1.0 && y < h && x > -1.0 && x < w) {
            return None;
        }
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let at = |yy: f32, xx: f32| -> f32 {
            if yy < 0.0 || xx < 0.0 || yy >= h || xx >= w {
                0.0
            } else {
                self.get(yy as usize, xx as usize, c)
            }
        };
        let top = at(y0, x0) * (1.0 - fx) + if fx > 0.0 { at(y0, x0 + 1.0) * fx } else { 0.0 };
        if fy == 0.0 {
            return Some(top);
        }
        let bottom = at(y0 + 1.0, x0) * (1.0 - fx) + if fx > 0.0 { at(y0 + 1.0, x0 + 1.0) * fx } else { 0.0 };
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Bilinear resize with half-pixel alignment and edge clamping.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> ImageSample {
        let sy = self.height as f32 / height as f32;
        let sx = self.width as f32 / width as f32;
        let mut pixels = Vec::with_capacity(height * width * self.channels);
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                for c in 0..self.channels {
                    pixels.push(self.sample_bilinear(fy, fx, c).unwrap_or(0.0));
                }
            }
        }
        ImageSample {
            height,
            width,
            pixels,
            ..self.clone()
        }
    }

    fn to_dynamic(&self) -> DynamicImage {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 1 {
            DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("buffer size checked at construction"))
        } else {
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("buffer size checked at construction"))
        }
    }

    /// 8-bit PNG encoding of the image.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_dynamic()
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding");
        out.into_inner()
    }

    /// Writes the image as 8-bit PNG (grayscale or RGB).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_png()).map_err(|e| Error::io(path, e))
    }
}

fn keyword_families() -> &'static [(Modality, Regex)] {
    static FAMILIES: OnceLock<Vec<(Modality, Regex)>> = OnceLock::new();
    FAMILIES.get_or_init(|| {
        vec![
            (
                Modality::Mri,
                Regex::new(r"(?i)\b(?:mris?|magnetic\s+resonance)\b").unwrap(),
            ),
            (
                Modality::Ct,
                Regex::new(r"(?i)\b(?:ct|computed\s+tomography)\b").unwrap(),
            ),
            (
                Modality::Xray,
                Regex::new(r"(?i)\b(?:x-?rays?|x\s+rays?|radiograph(?:s|y|ic)?)\b").unwrap(),
            ),
        ]
    })
}

fn families_in(text: &str) -> Vec<Modality> {
    keyword_families()
        .iter()
        .filter(|(_, re)| re.is_match(text))
        .map(|(m, _)| *m)
        .collect()
}

/// Weak modality label from modality keywords in the question, then the answer.
///
/// The first field naming exactly one modality family decides; a field naming
/// several families is ambiguous and defers to the next one.
pub fn extract_weak_modality(question: &str, answer: &str) -> Option<Modality> {
    [question, answer].into_iter().find_map(|field| match families_in(field).as_slice() {
        [only] => Some(*only),
        _ => None,
    })
}

/// Supported dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DatasetFormat {
    SlakeJson,
    RadJson,
}

/// JSON field names used by a dataset layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub image: String,
    pub question: String,
    pub answer: String,
    /// Ground-truth modality field, if the dataset carries one.
    pub modality: Option<String>,
    pub id: Option<String>,
}

impl FieldMapping {
    pub fn for_format(format: DatasetFormat) -> Self {
        match format {
            DatasetFormat::SlakeJson => FieldMapping {
                image: "img_name".into(),
                question: "question".into(),
                answer: "answer".into(),
                modality: Some("modality".into()),
                id: Some("qid".into()),
            },
            DatasetFormat::RadJson => FieldMapping {
                image: "image_name".into(),
                question: "question".into(),
                answer: "answer".into(),
                modality: None,
                id: Some("qid".into()),
            },
        }
    }
}

/// Loads a JSON array of VQA records with the default field mapping for `format`.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Vec<VqaRecord>> {
    load_dataset_with(path, &FieldMapping::for_format(format))
}

pub fn load_dataset_with(path: impl AsRef<Path>, mapping: &FieldMapping) -> Result<Vec<VqaRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, mapping)
}

pub fn parse_dataset(text: &str, mapping: &FieldMapping) -> Result<Vec<VqaRecord>> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    let Value::Array(items) = value else {
        return Err(Error::Parse {
            line: None,
            message: "dataset must be a JSON array of objects".into(),
        });
    };

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let Value::Object(obj) = item else {
            return Err(Error::Parse {
                line: None,
                message: format!("record {index} is not an object"),
            });
        };
        let field = |name: &str| -> Result<String> {
            match obj.get(name) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(Value::Number(n)) => Ok(n.to_string()),
                Some(Value::Bool(b)) => Ok(b.to_string()),
                _ => Err(Error::Schema {
                    index,
                    field: name.to_string(),
                }),
            }
        };
        let image_path = field(&mapping.image)?;
        if image_path.trim().is_empty() {
            return Err(Error::Schema {
                index,
                field: mapping.image.clone(),
            });
        }
        let question = field(&mapping.question)?;
        let answer = field(&mapping.answer)?;
        let record_id = match &mapping.id {
            Some(id) if obj.contains_key(id) => field(id)?,
            _ => index.to_string(),
        };
        if !seen.insert(record_id.clone()) {
            return Err(Error::Data(format!("duplicate record id `{record_id}` at record {index}")));
        }

        let ground_truth = match mapping.modality.as_deref().and_then(|m| obj.get(m)) {
            Some(Value::String(s)) => Some(s.parse::<Modality>()?),
            _ => None,
        };
        let modality_label = ground_truth.or_else(|| extract_weak_modality(&question, &answer));

        records.push(VqaRecord {
            record_id,
            image_path,
            question,
            answer,
            modality_label,
        });
    }
    Ok(records)
}

/// Decodes a PNG/JPEG, scales to [0,1], replicates grayscale to RGB and
/// resizes bilinearly to `resolution` (height, width) when given.
pub fn load_image(path: impl AsRef<Path>, resolution: Option<(usize, usize)>) -> Result<ImageSample> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let img = match resolution {
        Some((h, w)) if (img.height() as usize, img.width() as usize) != (h, w) => {
            img.resize_exact(w as u32, h as u32, FilterType::Triangle)
        }
        _ => img,
    };
    let sample = decode_rgb(&img)?;
    Ok(sample.with_id(
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    ))
}

fn decode_rgb(img: &DynamicImage) -> Result<ImageSample> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let grayscale = matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
    );
    let sample = if grayscale {
        let luma = img.to_luma16();
        let pixels = luma.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        ImageSample::new(h, w, 1, pixels)?
    } else {
        let rgb = img.to_rgb16();
        let pixels = rgb.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        ImageSample::new(h, w, 3, pixels)?
    };
    Ok(sample.to_rgb())
}
