//! Frozen bidirectional text transformer over continuous embedding
//! sequences.
//!
//! Inputs are embedding rows (learnable prompt vectors concatenated with
//! token embeddings), not strings: prompt tuning composes in embedding
//! space. The encoder weights are frozen constants, so backward passes
//! deposit nothing here while still carrying gradients through to the
//! inputs.

use super::TextEncoderConfig;
use crate::autodiff::{concat, layernorm, Tensor};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

pub(crate) fn randn(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, std).expect("std > 0");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn frozen(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    Tensor::constant(shape, randn(rng, shape.iter().product(), std))
}

struct Layer {
    ln1_g: Tensor,
    ln1_b: Tensor,
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    ln2_g: Tensor,
    ln2_b: Tensor,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl Layer {
    fn new(rng: &mut ChaCha8Rng, dim: usize) -> Layer {
        let hidden = 4 * dim;
        Layer {
            ln1_g: Tensor::constant(&[dim], vec![1.0; dim]),
            ln1_b: Tensor::zeros(&[dim]),
            wq: frozen(rng, &[dim, dim], 0.05),
            bq: Tensor::zeros(&[1, dim]),
            wk: frozen(rng, &[dim, dim], 0.05),
            bk: Tensor::zeros(&[1, dim]),
            wv: frozen(rng, &[dim, dim], 0.05),
            bv: Tensor::zeros(&[1, dim]),
            wo: frozen(rng, &[dim, dim], 0.05),
            bo: Tensor::zeros(&[1, dim]),
            ln2_g: Tensor::constant(&[dim], vec![1.0; dim]),
            ln2_b: Tensor::zeros(&[dim]),
            w1: frozen(rng, &[dim, hidden], 0.05),
            b1: Tensor::zeros(&[1, hidden]),
            w2: frozen(rng, &[hidden, dim], 0.05),
            b2: Tensor::zeros(&[1, dim]),
        }
    }

    fn forward(&self, x: &Tensor, heads: usize) -> Result<Tensor> {
        let dim = x.shape()[1];
        let dh = dim / heads;
        let h = layernorm(x, &self.ln1_g, &self.ln1_b, 1e-5)?;
        let q = h.matmul(&self.wq)?.add(&self.bq)?;
        let k = h.matmul(&self.wk)?.add(&self.bk)?;
        let v = h.matmul(&self.wv)?.add(&self.bv)?;
        let mut head_outputs = Vec::with_capacity(heads);
        for head in 0..heads {
            let (lo, hi) = (head * dh, (head + 1) * dh);
            let qh = q.slice(1, lo, hi)?;
            let kh = k.slice(1, lo, hi)?;
            let vh = v.slice(1, lo, hi)?;
            let scores = qh
                .matmul(&kh.transpose2()?)?
                .scale(1.0 / (dh as f64).sqrt());
            let attn = scores.softmax(1)?;
            head_outputs.push(attn.matmul(&vh)?);
        }
        let attended = concat(&head_outputs, 1)?.matmul(&self.wo)?.add(&self.bo)?;
        let x = x.add(&attended)?;
        let h2 = layernorm(&x, &self.ln2_g, &self.ln2_b, 1e-5)?;
        let ffn = h2
            .matmul(&self.w1)?
            .add(&self.b1)?
            .gelu()
            .matmul(&self.w2)?
            .add(&self.b2)?;
        x.add(&ffn)
    }

    fn named(&self, prefix: &str) -> Vec<(String, Tensor)> {
        [
            ("ln1.g", &self.ln1_g),
            ("ln1.b", &self.ln1_b),
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("ln2.g", &self.ln2_g),
            ("ln2.b", &self.ln2_b),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t.clone()))
        .collect()
    }
}

pub struct TextEncoder {
    pub cfg: TextEncoderConfig,
    embed: Tensor,
    pos: Tensor,
    layers: Vec<Layer>,
    ln_f_g: Tensor,
    ln_f_b: Tensor,
}

/// Row-wise L2 normalization for a [1, d] feature.
pub(crate) fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = x.mul(x)?.sum_axis(x.shape().len() - 1)?.sqrt().add_scalar(1e-12);
    x.div(&norm)
}

impl TextEncoder {
    pub fn new(cfg: &TextEncoderConfig, vocab_size: usize, seed: u64) -> TextEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = cfg.dim;
        TextEncoder {
            cfg: cfg.clone(),
            embed: frozen(&mut rng, &[vocab_size, dim], 0.1),
            pos: frozen(&mut rng, &[cfg.max_len, dim], 0.1),
            layers: (0..cfg.layers).map(|_| Layer::new(&mut rng, dim)).collect(),
            ln_f_g: Tensor::constant(&[dim], vec![1.0; dim]),
            ln_f_b: Tensor::zeros(&[dim]),
        }
    }

    /// Embeds a token id sequence as a frozen [L, dim] tensor.
    pub fn embed_tokens(&self, ids: &[usize]) -> Tensor {
        let dim = self.cfg.dim;
        let table = self.embed.value();
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            data.extend_from_slice(&table[id * dim..(id + 1) * dim]);
        }
        Tensor::constant(&[ids.len(), dim], data)
    }

    /// Encodes a continuous embedding sequence to a unit-norm [1, dim]
    /// feature (final-position pooling).
    pub fn encode(&self, sequence: &Tensor) -> Result<Tensor> {
        let len = sequence.shape()[0];
        if len > self.cfg.max_len {
            return Err(Error::InvalidArgument(format!(
                "sequence length {len} exceeds max_len {}",
                self.cfg.max_len
            )));
        }
        if len == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let pos = self.pos.slice(0, 0, len)?;
        let mut x = sequence.add(&pos)?;
        for layer in &self.layers {
            x = layer.forward(&x, self.cfg.heads)?;
        }
        let x = layernorm(&x, &self.ln_f_g, &self.ln_f_b, 1e-5)?;
        let last = x.slice(0, len - 1, len)?;
        l2_normalize(&last)
    }

    fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("text_encoder.embed".to_string(), self.embed.clone()),
            ("text_encoder.pos".to_string(), self.pos.clone()),
            ("text_encoder.ln_f.g".to_string(), self.ln_f_g.clone()),
            ("text_encoder.ln_f.b".to_string(), self.ln_f_b.clone()),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.named(&format!("text_encoder.layer{i:02}")));
        }
        out
    }

    pub fn parameters(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec(), t.value()))
            .collect()
    }

    pub fn load_parameters(
        &mut self,
        entries: &HashMap<String, (Vec<usize>, Vec<f64>)>,
    ) -> Result<()> {
        for (name, tensor) in self.named() {
            let (shape, data) = entries
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?;
            if shape != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for '{name}': {:?} vs {:?}",
                    shape,
                    tensor.shape()
                )));
            }
            tensor.set_data(data.clone());
        }
        Ok(())
    }
}
