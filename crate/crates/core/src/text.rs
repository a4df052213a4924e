//! Tokenisation and the deterministic hashing text embedder.

use crate::error::Result;

/// Lower-cased alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Start positions where `phrase` occurs as a contiguous token run in `tokens`.
pub fn phrase_positions(tokens: &[String], phrase: &[String]) -> Vec<usize> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return Vec::new();
    }
    (0..=tokens.len() - phrase.len())
        .filter(|&i| tokens[i..i + phrase.len()] == *phrase)
        .collect()
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Maps text to a fixed-dimension vector. Implementations must be
/// deterministic and return finite values.
pub trait TextEmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Bag of hashed word and character-trigram features.
///
/// Each word contributes one word feature and the trigrams of `<word>`;
/// a bucket is 1 when any feature lands in it, and the result is
/// L2-normalised. Features are per word, so appending words to a text only
/// ever adds buckets.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(dim: usize) -> Self {
        Self { dim: dim.max(1) }
    }

    fn bucket(&self, feature: &str) -> usize {
        (fnv1a(feature.as_bytes()) % self.dim as u64) as usize
    }

    /// Raw 0/1 bucket occupancy before normalisation.
    pub fn buckets(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            v[self.bucket(&format!("w:{token}"))] = 1.0;
            let padded: Vec<char> = format!("<{token}>").chars().collect();
            for tri in padded.windows(3) {
                let tri: String = tri.iter().collect();
                v[self.bucket(&format!("c:{tri}"))] = 1.0;
            }
        }
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl TextEmbeddingProvider for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = self.buckets(text);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_and_lowercases() {
        assert_eq!(tokenize("Which side of the Lung, X-ray?"), ["which", "side", "of", "the", "lung", "x", "ray"]);
        assert!(tokenize("  ...  ").is_empty());
    }

    #[test]
    fn phrase_search() {
        let toks = tokenize("increased density in the lower left lung, increased density");
        assert_eq!(phrase_positions(&toks, &tokenize("increased density")), vec![0, 7]);
        assert!(phrase_positions(&toks, &[]).is_empty());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn embedder_is_deterministic_and_unit_norm() {
        let e = HashingEmbedder::default();
        let a = e.embed("left lung opacity").unwrap();
        assert_eq!(a, e.embed("Left LUNG opacity").unwrap());
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(e.embed("").unwrap().iter().all(|&x| x == 0.0));
    }
}
