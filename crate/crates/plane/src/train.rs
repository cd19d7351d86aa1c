//! Losses, the assembled model, and the training loop.
//!
//! Only the head (prompts, DPCM, adapters) trains; both encoders stay
//! frozen. Two learning-rate groups follow the module split: "adapter" for
//! the per-layer adapters, "prompts" for everything else trainable.

use crate::ano3d::{ano3d_augment, AnomalyConfig, DefectKind};
use crate::autodiff::{
    backward, load_checkpoint, save_checkpoint, Adam, AdamConfig, ParamGroup, Tensor,
};
use crate::dataset::Sample;
use crate::dualprompt::{AnomalyMap, HeadConfig, PlaneHead};
use crate::geom3d::{normalize_cloud, PointCloud};
use crate::plm::{PointEncoderConfig, PointLanguageModel, TextEncoderConfig, Vocab};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_adapter: f64,
    pub lr_prompts_dpcm: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub dice_smooth: f64,
    /// Mixing weights for the two loss terms; zero disables a term.
    #[serde(default = "one")]
    pub focal_weight: f64,
    #[serde(default = "one")]
    pub dice_weight: f64,
    /// Probability a batch slot gets a pseudo-anomalous augmentation; the
    /// rest stay normal (rotated only).
    pub anomalous_fraction: f64,
    /// Checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1400,
            batch_size: 4,
            lr_adapter: 1e-4,
            lr_prompts_dpcm: 1e-5,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            dice_smooth: 1.0,
            focal_weight: 1.0,
            dice_weight: 1.0,
            anomalous_fraction: 0.75,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        for (name, v) in [
            ("lr_adapter", self.lr_adapter),
            ("lr_prompts_dpcm", self.lr_prompts_dpcm),
            ("focal_gamma", self.focal_gamma),
            ("focal_alpha", self.focal_alpha),
            ("dice_smooth", self.dice_smooth),
            ("focal_weight", self.focal_weight),
            ("dice_weight", self.dice_weight),
        ] {
            if v < 0.0 || (name.starts_with("lr") && v <= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.anomalous_fraction) {
            return Err(Error::InvalidArgument("anomalous_fraction must be in [0,1]".into()));
        }
        Ok(())
    }

    /// Reads either JSON or flat `key=value` lines.
    pub fn from_file(path: &Path) -> Result<TrainConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            return serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                reason: e.to_string(),
            });
        }
        let mut cfg = TrainConfig::default();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                reason: format!("line {}: expected key=value", ln + 1),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| Error::Parse {
                path: path.display().to_string(),
                reason: format!("line {}: {e}", ln + 1),
            };
            match key {
                "epochs" => cfg.epochs = value.parse().map_err(|e| bad(&e))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|e| bad(&e))?,
                "lr_adapter" => cfg.lr_adapter = value.parse().map_err(|e| bad(&e))?,
                "lr_prompts_dpcm" => cfg.lr_prompts_dpcm = value.parse().map_err(|e| bad(&e))?,
                "focal_gamma" => cfg.focal_gamma = value.parse().map_err(|e| bad(&e))?,
                "focal_alpha" => cfg.focal_alpha = value.parse().map_err(|e| bad(&e))?,
                "dice_smooth" => cfg.dice_smooth = value.parse().map_err(|e| bad(&e))?,
                "focal_weight" => cfg.focal_weight = value.parse().map_err(|e| bad(&e))?,
                "dice_weight" => cfg.dice_weight = value.parse().map_err(|e| bad(&e))?,
                "anomalous_fraction" => {
                    cfg.anomalous_fraction = value.parse().map_err(|e| bad(&e))?
                }
                "checkpoint_every" => cfg.checkpoint_every = value.parse().map_err(|e| bad(&e))?,
                "seed" => cfg.seed = value.parse().map_err(|e| bad(&e))?,
                other => {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        reason: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn gt_tensor(gt: &[u8]) -> Tensor {
    Tensor::constant(&[gt.len(), 1], gt.iter().map(|&v| v as f64).collect())
}

/// Focal loss (mean over points) with probability clamping at 1e-7.
pub fn focal_loss(pred: &Tensor, gt: &[u8], alpha: f64, gamma: f64) -> Result<Tensor> {
    let g = gt_tensor(gt);
    let one_minus_g = g.neg().add_scalar(1.0);
    let p = pred.clamp(1e-7, 1.0 - 1e-7);
    let p_t = p.mul(&g)?.add(&p.neg().add_scalar(1.0).mul(&one_minus_g)?)?;
    let w = g.scale(alpha).add(&one_minus_g.scale(1.0 - alpha))?;
    let focal = w
        .mul(&p_t.neg().add_scalar(1.0).pow_scalar(gamma))?
        .mul(&p_t.log().neg())?;
    Ok(focal.mean_all())
}

/// Dice loss: 1 − (2·Σ(pred·gt) + smooth) / (Σpred + Σgt + smooth).
pub fn dice_loss(pred: &Tensor, gt: &[u8], smooth: f64) -> Result<Tensor> {
    let g = gt_tensor(gt);
    let inter = pred.mul(&g)?.sum_all().scale(2.0).add_scalar(smooth);
    let denom = pred.sum_all().add(&g.sum_all())?.add_scalar(smooth);
    Ok(inter.div(&denom)?.neg().add_scalar(1.0))
}

/// The full assembled model: frozen encoders plus the trainable head.
pub struct PlaneModel {
    pub plm: PointLanguageModel,
    pub head: PlaneHead,
    pub categories: Vec<String>,
    /// Center-and-scale each input to the unit ball before encoding.
    pub normalize_input: bool,
}

/// Serialized model description stored beside the weight checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub text_cfg: TextEncoderConfig,
    pub point_cfg: PointEncoderConfig,
    pub head_cfg: HeadConfig,
    pub categories: Vec<String>,
    pub normalize_input: bool,
    pub seed: u64,
}

impl PlaneModel {
    pub fn new(
        categories: &[String],
        text_cfg: &TextEncoderConfig,
        point_cfg: &PointEncoderConfig,
        head_cfg: &HeadConfig,
        seed: u64,
    ) -> Result<PlaneModel> {
        let vocab = Vocab::build(categories);
        let plm = PointLanguageModel::new(vocab, text_cfg, point_cfg, seed)?;
        let head = PlaneHead::new(
            head_cfg,
            categories,
            point_cfg.dim,
            &point_cfg.tap_layers,
            seed ^ 0x6865_6164,
        );
        Ok(PlaneModel {
            plm,
            head,
            categories: categories.to_vec(),
            normalize_input: true,
        })
    }

    pub fn manifest(&self, seed: u64) -> ModelManifest {
        ModelManifest {
            text_cfg: self.plm.text.cfg.clone(),
            point_cfg: self.plm.point.cfg.clone(),
            head_cfg: self.head.cfg.clone(),
            categories: self.categories.clone(),
            normalize_input: self.normalize_input,
            seed,
        }
    }

    /// Differentiable forward pass over one cloud.
    pub fn forward(&self, cloud: &PointCloud) -> Result<(Tensor, AnomalyMap)> {
        let cloud = if self.normalize_input {
            normalize_cloud(cloud)
        } else {
            cloud.clone()
        };
        let encoded = self.plm.point.encode(&cloud)?;
        let ids = self.plm.vocab.tokenize(&cloud.class_name);
        self.head
            .forward(&encoded, &cloud.points, &self.plm.text, &ids, &cloud.class_name)
    }

    /// Inference-only scoring.
    pub fn infer(&self, cloud: &PointCloud) -> Result<AnomalyMap> {
        Ok(self.forward(cloud)?.1)
    }

    /// Full weight set (trainable head plus frozen encoders).
    pub fn state(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = self.head.state();
        out.extend(self.plm.parameters());
        out
    }

    pub fn save(&self, dir: &Path, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        save_checkpoint(&dir.join("model.ckpt"), &self.state())?;
        let manifest_path = dir.join("model.json");
        let json = serde_json::to_string_pretty(&self.manifest(seed)).map_err(|e| Error::Parse {
            path: manifest_path.display().to_string(),
            reason: e.to_string(),
        })?;
        std::fs::write(&manifest_path, json)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))
    }

    pub fn load(dir: &Path) -> Result<PlaneModel> {
        let manifest_path = dir.join("model.json");
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        let manifest: ModelManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: manifest_path.display().to_string(),
            reason: e.to_string(),
        })?;
        let mut model = PlaneModel::new(
            &manifest.categories,
            &manifest.text_cfg,
            &manifest.point_cfg,
            &manifest.head_cfg,
            manifest.seed,
        )?;
        model.normalize_input = manifest.normalize_input;
        let entries: HashMap<String, (Vec<usize>, Vec<f64>)> =
            load_checkpoint(&dir.join("model.ckpt"))?
                .into_iter()
                .map(|(n, s, d)| (n, (s, d)))
                .collect();
        model.head.load_state(&entries)?;
        model.plm.load_parameters(&entries)?;
        Ok(model)
    }

    /// Builds the two-group optimizer over the head parameters only.
    pub fn optimizer(&self, cfg: &TrainConfig) -> Result<Adam> {
        let params = self.head.parameters();
        let expected: usize = params.iter().map(|p| p.tensor.numel()).sum();
        let (adapters, prompts): (Vec<_>, Vec<_>) =
            params.into_iter().partition(|p| p.group == "adapter");
        let opt = Adam::new(
            vec![
                ParamGroup {
                    name: "adapter".into(),
                    lr: cfg.lr_adapter,
                    params: adapters,
                },
                ParamGroup {
                    name: "prompts".into(),
                    lr: cfg.lr_prompts_dpcm,
                    params: prompts,
                },
            ],
            AdamConfig::default(),
        )?;
        assert_eq!(opt.param_count(), expected, "optimizer must cover exactly the head");
        Ok(opt)
    }
}

/// One optimization step over a batch of labeled clouds. Forward passes run
/// in parallel; the losses combine and the gradient accumulates in fixed
/// batch order, keeping the step bitwise deterministic.
pub fn train_step(
    model: &PlaneModel,
    batch: &[PointCloud],
    opt: &mut Adam,
    cfg: &TrainConfig,
) -> Result<(f64, f64, f64)> {
    let per_sample: Vec<(Tensor, Tensor)> = batch
        .par_iter()
        .map(|cloud| -> Result<(Tensor, Tensor)> {
            let gt = cloud
                .labels
                .clone()
                .ok_or_else(|| Error::InvalidArgument("training cloud lacks labels".into()))?;
            let (pred, _) = model.forward(cloud)?;
            let focal = focal_loss(&pred, &gt, cfg.focal_alpha, cfg.focal_gamma)?;
            let dice = dice_loss(&pred, &gt, cfg.dice_smooth)?;
            Ok((focal, dice))
        })
        .collect::<Result<_>>()?;

    let mut focal_sum = per_sample[0].0.clone();
    let mut dice_sum = per_sample[0].1.clone();
    for (f, d) in &per_sample[1..] {
        focal_sum = focal_sum.add(f)?;
        dice_sum = dice_sum.add(d)?;
    }
    let scale = 1.0 / batch.len() as f64;
    let focal_mean = focal_sum.scale(scale);
    let dice_mean = dice_sum.scale(scale);
    let total = focal_mean.scale(cfg.focal_weight).add(&dice_mean.scale(cfg.dice_weight))?;
    let (t, f, d) = (total.item(), focal_mean.item(), dice_mean.item());
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite loss {t}")));
    }
    backward(&total)?;
    opt.step();
    Ok((t, f, d))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub focal: f64,
    pub dice: f64,
}

/// Writes the loss history as `epoch,mean_loss,focal,dice` CSV.
pub fn write_loss_csv(path: &Path, history: &[EpochStats]) -> Result<()> {
    let mut text = String::from("epoch,mean_loss,focal,dice\n");
    for e in history {
        text.push_str(&format!("{},{},{},{}\n", e.epoch, e.mean_loss, e.focal, e.dice));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Full training loop: every epoch re-augments the normal corpus with fresh
/// rotations and defects, shuffles it into batches, and steps the
/// optimizer. Returns the per-epoch loss history.
pub fn fit(
    model: &PlaneModel,
    train: &[Sample],
    cfg: &TrainConfig,
    ano_cfg: &AnomalyConfig,
    out_dir: Option<&Path>,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    ano_cfg.validate()?;
    if train.is_empty() {
        return Err(Error::NoSamples("training split".into()));
    }
    let mut opt = model.optimizer(cfg)?;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        // decide augmentation per slot up front so generation can run in
        // parallel with a fixed outcome
        let plan: Vec<(usize, bool, u64)> = order
            .iter()
            .map(|&i| {
                let anomalous = rng.random_range(0.0..1.0) < cfg.anomalous_fraction;
                (i, anomalous, rng.random::<u64>())
            })
            .collect();
        let augmented: Vec<PointCloud> = plan
            .par_iter()
            .map(|&(i, anomalous, seed)| -> Result<PointCloud> {
                let cloud = &train[i].cloud;
                let aug_cfg = if anomalous {
                    ano_cfg.clone()
                } else {
                    AnomalyConfig {
                        defect_type: Some(DefectKind::None),
                        ..ano_cfg.clone()
                    }
                };
                let (out, _, _) = ano3d_augment(cloud, &aug_cfg, seed)?;
                Ok(out)
            })
            .collect::<Result<_>>()?;

        let (mut loss_acc, mut focal_acc, mut dice_acc, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for batch in augmented.chunks(cfg.batch_size) {
            let (t, f, d) = train_step(model, batch, &mut opt, cfg)?;
            loss_acc += t;
            focal_acc += f;
            dice_acc += d;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        history.push(EpochStats {
            epoch,
            mean_loss: loss_acc / n,
            focal: focal_acc / n,
            dice: dice_acc / n,
        });

        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
                save_checkpoint(
                    &dir.join(format!("checkpoint_{:05}.ckpt", epoch + 1)),
                    &model.state(),
                )?;
            }
        }
    }

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        model.save(dir, cfg.seed)?;
        write_loss_csv(&dir.join("loss.csv"), &history)?;
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_shape, ShapeKind};

    #[test]
    fn focal_perfect_prediction_is_tiny() {
        let gt = vec![0, 1, 0, 1];
        let pred = Tensor::constant(&[4, 1], vec![0.0, 1.0, 0.0, 1.0]);
        let loss = focal_loss(&pred, &gt, 0.25, 2.0).unwrap().item();
        assert!(loss < 1e-5, "loss {loss}");
    }

    #[test]
    fn focal_single_point_closed_form() {
        let gt = vec![1];
        let pred = Tensor::constant(&[1, 1], vec![0.5]);
        let loss = focal_loss(&pred, &gt, 0.25, 2.0).unwrap().item();
        let expected = 0.25 * 0.25 * (2.0f64).ln();
        assert!((loss - expected).abs() < 1e-9, "loss {loss} vs {expected}");
        assert!((loss - 0.043321).abs() < 1e-6);
    }

    #[test]
    fn focal_reduces_to_half_bce() {
        let gt = vec![1, 0, 1, 0, 0];
        let p = [0.8, 0.3, 0.6, 0.1, 0.45];
        let pred = Tensor::constant(&[5, 1], p.to_vec());
        let loss = focal_loss(&pred, &gt, 0.5, 0.0).unwrap().item();
        let bce: f64 = p
            .iter()
            .zip(&gt)
            .map(|(&pi, &g)| if g == 1 { -pi.ln() } else { -(1.0 - pi).ln() })
            .sum::<f64>()
            / 5.0;
        assert!((loss - 0.5 * bce).abs() < 1e-9);
    }

    #[test]
    fn dice_exact_match_is_zero() {
        let gt = vec![0, 1, 1, 0];
        let pred = Tensor::constant(&[4, 1], vec![0.0, 1.0, 1.0, 0.0]);
        assert!(dice_loss(&pred, &gt, 1.0).unwrap().item().abs() < 1e-12);
    }

    #[test]
    fn dice_disjoint_closed_form() {
        let n = 200;
        let mut gt = vec![0u8; n];
        let mut pred = vec![0.0; n];
        for i in 0..100 {
            gt[i] = 1;
            pred[100 + i] = 1.0;
        }
        let loss = dice_loss(&Tensor::constant(&[n, 1], pred), &gt, 1.0).unwrap().item();
        assert!((loss - (1.0 - 1.0 / 201.0)).abs() < 1e-12);
    }

    #[test]
    fn dice_all_zero_is_zero() {
        let gt = vec![0u8; 8];
        let pred = Tensor::constant(&[8, 1], vec![0.0; 8]);
        assert!(dice_loss(&pred, &gt, 1.0).unwrap().item().abs() < 1e-12);
    }

    fn tiny_model() -> PlaneModel {
        let text_cfg = TextEncoderConfig {
            dim: 32,
            layers: 2,
            heads: 4,
            max_len: 16,
        };
        let point_cfg = PointEncoderConfig {
            groups: 8,
            group_size: 4,
            dim: 32,
            layers: 3,
            heads: 4,
            tap_layers: vec![1, 3],
        };
        let head_cfg = HeadConfig {
            text_prompt_len: 3,
            point_prompt_len: 2,
            dpcm_hidden: 16,
            ..HeadConfig::default()
        };
        PlaneModel::new(&["sphere".into()], &text_cfg, &point_cfg, &head_cfg, 1).unwrap()
    }

    fn tiny_corpus() -> Vec<Sample> {
        (0..2)
            .map(|i| {
                let mut cloud = synth_shape(ShapeKind::Sphere, 80, 0.01, 40 + i).unwrap();
                cloud.labels = Some(vec![0; cloud.len()]);
                Sample::from_cloud(cloud, "sphere")
            })
            .collect()
    }

    fn tiny_ano() -> AnomalyConfig {
        AnomalyConfig {
            neighbor_count: 8,
            removal_count: 7,
            hole_boundary_k: 4,
            ..AnomalyConfig::default()
        }
    }

    #[test]
    fn step_leaves_encoders_frozen_and_moves_head() {
        let model = tiny_model();
        let cfg = TrainConfig {
            epochs: 1,
            seed: 3,
            ..TrainConfig::default()
        };
        let mut opt = model.optimizer(&cfg).unwrap();
        let frozen_before = model.plm.checksum();
        let head_before: Vec<f64> = model
            .head
            .state()
            .iter()
            .flat_map(|(_, _, d)| d.clone())
            .collect();
        let batch: Vec<PointCloud> = tiny_corpus()
            .into_iter()
            .map(|s| {
                let (c, _, _) = ano3d_augment(&s.cloud, &tiny_ano(), 9).unwrap();
                c
            })
            .collect();
        let (t, f, d) = train_step(&model, &batch, &mut opt, &cfg).unwrap();
        assert!(t.is_finite() && f >= 0.0 && d >= -1e-12);
        assert_eq!(model.plm.checksum(), frozen_before);
        let head_after: Vec<f64> = model
            .head
            .state()
            .iter()
            .flat_map(|(_, _, d)| d.clone())
            .collect();
        assert_ne!(head_before, head_after);
    }

    #[test]
    fn step_replay_is_bitwise_identical() {
        let cfg = TrainConfig {
            seed: 5,
            ..TrainConfig::default()
        };
        let batch: Vec<PointCloud> = tiny_corpus()
            .into_iter()
            .map(|s| {
                let (c, _, _) = ano3d_augment(&s.cloud, &tiny_ano(), 17).unwrap();
                c
            })
            .collect();
        let run = || {
            let model = tiny_model();
            let mut opt = model.optimizer(&cfg).unwrap();
            train_step(&model, &batch, &mut opt, &cfg).unwrap();
            model
                .head
                .state()
                .into_iter()
                .flat_map(|(_, _, d)| d)
                .map(|v| v.to_bits())
                .collect::<Vec<u64>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fit_zero_epochs_changes_nothing() {
        let model = tiny_model();
        let before = model.head.state();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let history = fit(&model, &tiny_corpus(), &cfg, &tiny_ano(), None).unwrap();
        assert!(history.is_empty());
        let after = model.head.state();
        for ((_, _, a), (_, _, b)) in before.iter().zip(after.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fit_history_matches_epochs_and_saves() {
        let model = tiny_model();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            seed: 8,
            ..TrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let history = fit(&model, &tiny_corpus(), &cfg, &tiny_ano(), Some(dir.path())).unwrap();
        assert_eq!(history.len(), 2);
        assert!(history.iter().all(|e| e.mean_loss.is_finite()));
        assert!(dir.path().join("model.ckpt").is_file());
        assert!(dir.path().join("loss.csv").is_file());

        let loaded = PlaneModel::load(dir.path()).unwrap();
        let cloud = synth_shape(ShapeKind::Sphere, 80, 0.01, 99).unwrap();
        let a = model.infer(&cloud).unwrap();
        let b = loaded.infer(&cloud).unwrap();
        assert_eq!(a.point_scores, b.point_scores);
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kv = dir.path().join("train.cfg");
        std::fs::write(&kv, "epochs = 7\nlr_adapter = 0.001\n# comment\nseed = 42\n").unwrap();
        let cfg = TrainConfig::from_file(&kv).unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.lr_adapter, 0.001);
        assert_eq!(cfg.seed, 42);

        let js = dir.path().join("train.json");
        std::fs::write(&js, serde_json::to_string(&cfg).unwrap()).unwrap();
        let cfg2 = TrainConfig::from_file(&js).unwrap();
        assert_eq!(cfg2.epochs, 7);
    }
}
