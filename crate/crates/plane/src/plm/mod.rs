//! Toy-scale frozen point-language model: word-level tokenizer, a small
//! bidirectional text transformer, and a PointBert-style point encoder with
//! intermediate-layer taps.
//!
//! Both encoders are frozen: their weights come from a fixed-seed
//! distribution (or a checkpoint) and never receive gradients. The text
//! encoder still participates in the autodiff graph so that gradients reach
//! the learnable prompt embeddings fed through it.

mod point;
mod text;

pub use point::{EncodedPointCloud, Patches, PointEncoder};
pub use text::TextEncoder;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const UNK_TOKEN: &str = "<unk>";

/// Placeholder words always present in the vocabulary, beyond category
/// names.
const BASE_WORDS: &[&str] = &[
    "a", "point", "cloud", "of", "object", "normal", "anomalous", "damaged", "surface",
];

/// Word-level token table.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds the vocabulary from category names plus the base placeholder
    /// words; entry order (and therefore ids) is deterministic.
    pub fn build(categories: &[String]) -> Vocab {
        let mut words: Vec<String> = vec![UNK_TOKEN.to_string()];
        for w in BASE_WORDS {
            words.push((*w).to_string());
        }
        let mut extra: Vec<String> = categories
            .iter()
            .flat_map(|c| c.to_lowercase().split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .filter(|w| !words.contains(w))
            .collect();
        extra.sort();
        extra.dedup();
        words.extend(extra);
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocab { words, index }
    }

    /// Restores the id index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn id(&self, word: &str) -> usize {
        *self.index.get(word).unwrap_or(&0)
    }

    /// Lowercased whitespace tokenization; unknown words map to UNK (id 0).
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.to_lowercase()
            .split_whitespace()
            .map(|w| self.id(w))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TextEncoderConfig {
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        TextEncoderConfig {
            dim: 64,
            layers: 4,
            heads: 4,
            max_len: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PointEncoderConfig {
    /// Token count (patch centers chosen by farthest point sampling).
    pub groups: usize,
    /// Points per group.
    pub group_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    /// 1-indexed layers whose residual-stream output is captured.
    pub tap_layers: Vec<usize>,
}

impl Default for PointEncoderConfig {
    fn default() -> Self {
        PointEncoderConfig {
            groups: 64,
            group_size: 32,
            dim: 64,
            layers: 12,
            heads: 4,
            tap_layers: vec![2, 5, 8, 11],
        }
    }
}

impl PointEncoderConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.dim % self.heads != 0 {
            return Err(crate::Error::InvalidArgument(
                "dim must be divisible by heads".into(),
            ));
        }
        if self.tap_layers.is_empty()
            || self.tap_layers.iter().any(|&t| t < 1 || t > self.layers)
        {
            return Err(crate::Error::InvalidArgument(format!(
                "tap layers {:?} must lie in [1, {}]",
                self.tap_layers, self.layers
            )));
        }
        let mut sorted = self.tap_layers.clone();
        sorted.sort_unstable();
        if sorted != self.tap_layers {
            return Err(crate::Error::InvalidArgument(
                "tap layers must be ascending".into(),
            ));
        }
        Ok(())
    }
}

/// The frozen encoder pair plus its shared vocabulary.
pub struct PointLanguageModel {
    pub vocab: Vocab,
    pub text: TextEncoder,
    pub point: PointEncoder,
}

impl PointLanguageModel {
    /// Seeded construction: identical seeds yield identical frozen weights.
    pub fn new(
        vocab: Vocab,
        text_cfg: &TextEncoderConfig,
        point_cfg: &PointEncoderConfig,
        seed: u64,
    ) -> crate::Result<PointLanguageModel> {
        point_cfg.validate()?;
        let text = TextEncoder::new(text_cfg, vocab.len(), seed ^ 0x7465_7874);
        let point = PointEncoder::new(point_cfg, seed ^ 0x706f_696e);
        Ok(PointLanguageModel { vocab, text, point })
    }

    /// All frozen weights as (name, shape, data), for checkpoints and
    /// checksums.
    pub fn parameters(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = self.text.parameters();
        out.extend(self.point.parameters());
        out
    }

    /// SHA-256 checksum over every frozen weight, for frozen-ness checks.
    pub fn checksum(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for (name, shape, data) in self.parameters() {
            hasher.update(name.as_bytes());
            for d in shape {
                hasher.update((d as u64).to_le_bytes());
            }
            for v in data {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().into()
    }

    /// Loads frozen weights from checkpoint entries (names must match).
    pub fn load_parameters(
        &mut self,
        entries: &HashMap<String, (Vec<usize>, Vec<f64>)>,
    ) -> crate::Result<()> {
        self.text.load_parameters(entries)?;
        self.point.load_parameters(entries)
    }
}
