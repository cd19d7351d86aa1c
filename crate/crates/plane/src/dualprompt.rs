//! Dual-prompt anomaly head: learnable static text/point prompts, a dynamic
//! prompt creator conditioned on the global point feature, per-tap feature
//! adapters, and the paired-softmax score map.
//!
//! Everything trainable lives here; both encoders stay frozen. Two
//! learning-rate groups: "adapter" for the per-layer adapters, "prompts" for
//! the static prompts and the dynamic-prompt MLP.

use crate::autodiff::{concat, Parameter, Tensor};
use crate::geom3d::{dist2, Point3};
use crate::plm::{EncodedPointCloud, TextEncoder};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};

fn randn(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0, std).expect("std > 0");
    (0..n).map(|_| normal.sample(rng)).collect()
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct HeadConfig {
    /// Static text prompt tokens per polarity.
    pub text_prompt_len: usize,
    /// Static point prompt tokens per class.
    pub point_prompt_len: usize,
    pub dpcm_hidden: usize,
    /// Multiplier on the cosine logits before the paired softmax.
    pub temperature: f64,
    /// Lets adapter inputs attend to the prompt tokens before the FFN;
    /// without it the prompt tokens would be dropped unused.
    pub prompt_mixing: bool,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            text_prompt_len: 6,
            point_prompt_len: 4,
            dpcm_hidden: 128,
            temperature: 1.0,
            prompt_mixing: true,
        }
    }
}

/// Learnable prompt state: static text prompts for both polarities, static
/// point prompts per class, and the dynamic-prompt MLP.
pub struct PromptSet {
    pub cfg: HeadConfig,
    pub dim: usize,
    pub text_static_normal: Tensor,
    pub text_static_anomalous: Tensor,
    pub point_static: BTreeMap<String, Tensor>,
    dpcm_w1: Tensor,
    dpcm_b1: Tensor,
    dpcm_w2: Tensor,
    dpcm_b2: Tensor,
}

impl PromptSet {
    pub fn new(cfg: &HeadConfig, classes: &[String], dim: usize, seed: u64) -> PromptSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nt = cfg.text_prompt_len;
        let mp = cfg.point_prompt_len;
        let hidden = cfg.dpcm_hidden;
        // comparable in scale to token embeddings so the two prompt
        // sequences produce distinct text features from the first step
        let text_static_normal = Tensor::param(&[nt, dim], randn(&mut rng, nt * dim, 0.5));
        let text_static_anomalous = Tensor::param(&[nt, dim], randn(&mut rng, nt * dim, 0.5));
        let mut sorted: Vec<String> = classes.to_vec();
        sorted.sort();
        sorted.dedup();
        let point_static = sorted
            .into_iter()
            .map(|c| (c, Tensor::param(&[mp, dim], randn(&mut rng, mp * dim, 0.02))))
            .collect();
        PromptSet {
            cfg: cfg.clone(),
            dim,
            text_static_normal,
            text_static_anomalous,
            point_static,
            dpcm_w1: Tensor::param(&[dim, hidden], randn(&mut rng, dim * hidden, 0.02)),
            dpcm_b1: Tensor::param(&[1, hidden], vec![0.0; hidden]),
            dpcm_w2: Tensor::param(&[hidden, 2 * dim], randn(&mut rng, hidden * 2 * dim, 0.02)),
            dpcm_b2: Tensor::param(&[1, 2 * dim], vec![0.0; 2 * dim]),
        }
    }

    /// Dynamic prompt creation: MLP on the global point feature, split into
    /// a text half and a point half.
    pub fn dpcm(&self, f_pc: &Tensor) -> Result<(Tensor, Tensor)> {
        let h = f_pc.matmul(&self.dpcm_w1)?.add(&self.dpcm_b1)?.relu();
        let out = h.matmul(&self.dpcm_w2)?.add(&self.dpcm_b2)?;
        let f_d_text = out.slice(1, 0, self.dim)?;
        let f_d_point = out.slice(1, self.dim, 2 * self.dim)?;
        Ok((f_d_text, f_d_point))
    }

    /// Assembles both prompt sequences (static tokens, then the dynamic
    /// token, then the class-name tokens) and encodes them to unit-norm
    /// normal/anomalous text features.
    pub fn build_text_features(
        &self,
        text: &TextEncoder,
        class_ids: &[usize],
        f_d_text: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let class_emb = text.embed_tokens(class_ids);
        let normal_seq = concat(
            &[self.text_static_normal.clone(), f_d_text.clone(), class_emb.clone()],
            0,
        )?;
        let anomalous_seq = concat(
            &[self.text_static_anomalous.clone(), f_d_text.clone(), class_emb],
            0,
        )?;
        Ok((text.encode(&normal_seq)?, text.encode(&anomalous_seq)?))
    }

    pub fn point_prompt(&self, class: &str) -> Result<&Tensor> {
        self.point_static
            .get(class)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown class '{class}'")))
    }

    fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("prompts.text_static_normal".to_string(), self.text_static_normal.clone()),
            ("prompts.text_static_anomalous".to_string(), self.text_static_anomalous.clone()),
            ("prompts.dpcm.w1".to_string(), self.dpcm_w1.clone()),
            ("prompts.dpcm.b1".to_string(), self.dpcm_b1.clone()),
            ("prompts.dpcm.w2".to_string(), self.dpcm_w2.clone()),
            ("prompts.dpcm.b2".to_string(), self.dpcm_b2.clone()),
        ];
        for (class, t) in &self.point_static {
            out.push((format!("prompts.point_static.{class}"), t.clone()));
        }
        out
    }
}

/// Per-tap-layer feature adapter: optional prompt mixing, then a token-wise
/// FFN with a residual connection.
pub struct PcfaAdapter {
    /// 1-indexed tap layer this adapter serves.
    pub layer: usize,
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

impl PcfaAdapter {
    pub fn new(layer: usize, dim: usize, seed: u64) -> PcfaAdapter {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = 4 * dim;
        PcfaAdapter {
            layer,
            w1: Tensor::param(&[dim, hidden], randn(&mut rng, dim * hidden, 0.02)),
            b1: Tensor::param(&[1, hidden], vec![0.0; hidden]),
            // small output weights keep the adapter near identity at init
            w2: Tensor::param(&[hidden, dim], randn(&mut rng, hidden * dim, 0.01)),
            b2: Tensor::param(&[1, dim], vec![0.0; dim]),
        }
    }

    /// Zeroes the FFN output path, making the adapter an exact identity.
    pub fn zero_output_path(&self) {
        self.w2.set_data(vec![0.0; self.w2.numel()]);
        self.b2.set_data(vec![0.0; self.b2.numel()]);
    }

    /// Projects tap features into the text feature space. Each of the G
    /// feature tokens optionally attends to the M_p+1 prompt tokens, then
    /// passes through the FFN; the residual keeps untrained adapters near
    /// identity. Only the G feature positions are returned.
    pub fn project(
        &self,
        f_ori: &Tensor,
        point_static: &Tensor,
        f_d_point: &Tensor,
        mixing: bool,
    ) -> Result<Tensor> {
        let dim = self.w1.shape()[0];
        if f_ori.shape().len() != 2 || f_ori.shape()[1] != dim {
            return Err(Error::ShapeMismatch {
                op: "pcfa_project".into(),
                left: f_ori.shape().to_vec(),
                right: vec![f_ori.shape().first().copied().unwrap_or(0), dim],
            });
        }
        let h = if mixing {
            let prompts = concat(&[point_static.clone(), f_d_point.clone()], 0)?;
            let scores = f_ori
                .matmul(&prompts.transpose2()?)?
                .scale(1.0 / (dim as f64).sqrt());
            let mixed = scores.softmax(1)?.matmul(&prompts)?;
            f_ori.add(&mixed)?
        } else {
            f_ori.clone()
        };
        let ffn = h
            .matmul(&self.w1)?
            .add(&self.b1)?
            .gelu()
            .matmul(&self.w2)?
            .add(&self.b2)?;
        f_ori.add(&ffn)
    }

    fn named(&self) -> Vec<(String, Tensor)> {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
            .into_iter()
            .map(|(n, t)| (format!("pcfa.{}.{n}", self.layer), t.clone()))
            .collect()
    }
}

/// Inference output: calibrated per-point scores and the object-level max.
#[derive(Debug, Clone)]
pub struct AnomalyMap {
    pub point_scores: Vec<f64>,
    pub object_score: f64,
    pub per_layer: Option<Vec<Vec<f64>>>,
}

/// Row-normalizes a [G, dim] feature matrix to unit L2 rows.
fn normalize_rows(x: &Tensor) -> Result<Tensor> {
    let norm = x.mul(x)?.sum_axis(1)?.sqrt().add_scalar(1e-12);
    x.div(&norm)
}

/// Paired token scores: [G, 2] rows (normal, anomalous) from a softmax over
/// the two cosine logits; each row sums to one.
pub fn token_pair_scores(
    f_p: &Tensor,
    f_n_t: &Tensor,
    f_a_t: &Tensor,
    temperature: f64,
) -> Result<Tensor> {
    let fp = normalize_rows(f_p)?;
    let cos_n = fp.matmul(&f_n_t.transpose2()?)?;
    let cos_a = fp.matmul(&f_a_t.transpose2()?)?;
    concat(&[cos_n, cos_a], 1)?.scale(temperature).softmax(1)
}

/// Sparse inverse-distance interpolation from G token centers to N points,
/// as a constant [N, G] matrix over each point's 3 nearest centers.
pub fn interpolation_matrix(points: &[Point3], centers: &[Point3]) -> Tensor {
    let n = points.len();
    let g = centers.len();
    let k = g.min(3);
    let mut w = vec![0.0; n * g];
    for (pi, p) in points.iter().enumerate() {
        let mut nearest: Vec<(usize, f64)> = centers
            .iter()
            .enumerate()
            .map(|(ci, c)| (ci, dist2(p, c).sqrt()))
            .collect();
        nearest.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let weights: Vec<f64> = nearest[..k].iter().map(|(_, d)| 1.0 / (d + 1e-8)).collect();
        let total: f64 = weights.iter().sum();
        for ((ci, _), wt) in nearest[..k].iter().zip(&weights) {
            w[pi * g + ci] = wt / total;
        }
    }
    Tensor::constant(&[n, g], w)
}

/// Interpolated per-point anomaly scores as an [N, 1] tensor.
pub fn score_map(
    f_p: &Tensor,
    f_n_t: &Tensor,
    f_a_t: &Tensor,
    interp: &Tensor,
    temperature: f64,
) -> Result<Tensor> {
    let pair = token_pair_scores(f_p, f_n_t, f_a_t, temperature)?;
    let anomalous = pair.slice(1, 1, 2)?;
    interp.matmul(&anomalous)
}

/// Mean-aggregates per-layer score maps; the object score is the maximum
/// point score.
pub fn aggregate(per_layer: &[Tensor]) -> Result<(Tensor, AnomalyMap)> {
    if per_layer.is_empty() {
        return Err(Error::InvalidArgument("aggregate over zero layers".into()));
    }
    let mut sum = per_layer[0].clone();
    for m in &per_layer[1..] {
        sum = sum.add(m)?;
    }
    let mean = sum.scale(1.0 / per_layer.len() as f64);
    let point_scores = mean.value();
    let object_score = point_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let map = AnomalyMap {
        point_scores,
        object_score,
        per_layer: Some(per_layer.iter().map(|m| m.value()).collect()),
    };
    Ok((mean, map))
}

/// The full trainable head: prompts plus one adapter per tap layer.
pub struct PlaneHead {
    pub cfg: HeadConfig,
    pub prompts: PromptSet,
    pub adapters: Vec<PcfaAdapter>,
}

impl PlaneHead {
    pub fn new(
        cfg: &HeadConfig,
        classes: &[String],
        dim: usize,
        tap_layers: &[usize],
        seed: u64,
    ) -> PlaneHead {
        let prompts = PromptSet::new(cfg, classes, dim, seed);
        let adapters = tap_layers
            .iter()
            .map(|&layer| PcfaAdapter::new(layer, dim, seed ^ (0x5043_4641 + layer as u64)))
            .collect();
        PlaneHead {
            cfg: cfg.clone(),
            prompts,
            adapters,
        }
    }

    /// Runs the head over an encoded cloud. `points` are the original
    /// coordinates the scores interpolate back onto. Returns the
    /// differentiable mean score map alongside the extracted values.
    pub fn forward(
        &self,
        encoded: &EncodedPointCloud,
        points: &[Point3],
        text: &TextEncoder,
        class_ids: &[usize],
        class: &str,
    ) -> Result<(Tensor, AnomalyMap)> {
        if encoded.taps.len() != self.adapters.len() {
            return Err(Error::InvalidArgument(format!(
                "{} taps but {} adapters",
                encoded.taps.len(),
                self.adapters.len()
            )));
        }
        let (f_d_text, f_d_point) = self.prompts.dpcm(&encoded.global)?;
        let (f_n_t, f_a_t) = self.prompts.build_text_features(text, class_ids, &f_d_text)?;
        let point_static = self.prompts.point_prompt(class)?;
        let interp = interpolation_matrix(points, &encoded.patches.centers);
        let mut maps = Vec::with_capacity(self.adapters.len());
        for (adapter, tap) in self.adapters.iter().zip(&encoded.taps) {
            let f_p = adapter.project(tap, point_static, &f_d_point, self.cfg.prompt_mixing)?;
            maps.push(score_map(&f_p, &f_n_t, &f_a_t, &interp, self.cfg.temperature)?);
        }
        aggregate(&maps)
    }

    /// Current text features for a class, for prompt-separation probes.
    pub fn text_features(
        &self,
        text: &TextEncoder,
        class_ids: &[usize],
        f_pc: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let (f_d_text, _) = self.prompts.dpcm(f_pc)?;
        self.prompts.build_text_features(text, class_ids, &f_d_text)
    }

    fn named(&self) -> Vec<(String, Tensor)> {
        let mut out = self.prompts.named();
        for adapter in &self.adapters {
            out.extend(adapter.named());
        }
        out
    }

    /// Trainable parameters tagged with their learning-rate group.
    pub fn parameters(&self) -> Vec<Parameter> {
        self.named()
            .into_iter()
            .map(|(name, tensor)| {
                let group = if name.starts_with("pcfa.") { "adapter" } else { "prompts" };
                Parameter::new(name, tensor, group)
            })
            .collect()
    }

    pub fn state(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec(), t.value()))
            .collect()
    }

    pub fn load_state(&mut self, entries: &HashMap<String, (Vec<usize>, Vec<f64>)>) -> Result<()> {
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
