//! The `plane` command-line interface: dataset synthesis, defect injection,
//! training, inference, evaluation, and timing.
//!
//! Every command is deterministic for a given `--seed` and writes a
//! `run_manifest.json` beside its outputs describing what produced them.

use crate::ano3d::{ano3d_augment, AnomalyConfig, DefectMeta};
use crate::dataset::{
    build_dataset, load_manifest_samples, save_dataset, DatasetSpec, Manifest,
};
use crate::dualprompt::HeadConfig;
use crate::evalkit::{benchmark, evaluate};
use crate::geom3d::io::{read_cloud, write_ply, write_ply_scored};
use crate::plm::{PointEncoderConfig, TextEncoderConfig};
use crate::train::{fit, PlaneModel, TrainConfig};
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "plane", version, about = "Point-cloud anomaly detection with dual prompts")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct WorkerArgs {
    /// Worker threads for per-sample parallelism (default: logical cores).
    /// The PLANE_NUM_WORKERS environment variable takes precedence.
    #[arg(long)]
    workers: Option<usize>,
}

impl WorkerArgs {
    fn install(&self) {
        let n = std::env::var("PLANE_NUM_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
            .or(self.workers);
        if let Some(n) = n {
            // ignore the error when a pool was already installed
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic shape corpus with pseudo-anomalous test samples.
    Synth {
        /// Comma-separated categories (sphere, box, cylinder, cone, torus).
        #[arg(long, default_value = "sphere,box,cylinder")]
        categories: String,
        /// Normal training samples per category.
        #[arg(long, default_value_t = 4)]
        train: usize,
        /// Normal test samples per category.
        #[arg(long, default_value_t = 4)]
        test_normal: usize,
        /// Defected test samples per category.
        #[arg(long, default_value_t = 4)]
        test_anomalous: usize,
        #[arg(long, default_value_t = 2048)]
        points: usize,
        /// Gaussian surface jitter.
        #[arg(long, default_value_t = 0.01)]
        jitter: f64,
        /// Mean defect displacement.
        #[arg(long, default_value_t = 0.05)]
        mu: f64,
        /// Defect displacement standard deviation.
        #[arg(long, default_value_t = 0.02)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Apply one pseudo-defect to a point cloud file.
    Inject {
        /// Input cloud (PLY or XYZ).
        #[arg(long)]
        input: PathBuf,
        /// Defect type: bulge, concavity, hole, or none (omit for random).
        #[arg(long, value_name = "KIND")]
        r#type: Option<String>,
        /// Neighborhood size M for bulge/concavity.
        #[arg(long, default_value_t = 64)]
        m: usize,
        /// Removal count X for holes (X+1 points are deleted).
        #[arg(long, default_value_t = 63)]
        x: usize,
        #[arg(long, default_value_t = 0.05)]
        mu: f64,
        #[arg(long, default_value_t = 0.02)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replay a previous injection from its meta JSON instead of the
        /// defect flags.
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the dual-prompt head over a dataset manifest.
    Train {
        /// Dataset manifest JSON.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1400)]
        epochs: usize,
        #[arg(long, default_value_t = 4)]
        batch: usize,
        #[arg(long, default_value_t = 1e-4)]
        lr_adapter: f64,
        /// Learning rate for prompts and the dynamic-prompt MLP.
        #[arg(long, default_value_t = 1e-5)]
        lr_prompts: f64,
        #[arg(long, default_value_t = 6)]
        text_prompt_len: usize,
        #[arg(long, default_value_t = 4)]
        point_prompt_len: usize,
        /// Comma-separated 1-indexed encoder layers to tap.
        #[arg(long, default_value = "2,5,8,11")]
        taps: String,
        #[arg(long, default_value_t = 0.05)]
        mu: f64,
        #[arg(long, default_value_t = 0.02)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the checkpoint and loss CSV.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Score a single cloud with a trained model.
    Infer {
        /// Model directory (from `train`).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Category name; defaults to the input file-stem prefix.
        #[arg(long)]
        category: Option<String>,
        /// Output directory for the scored PLY.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model over a manifest's test split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        fpr_limit: f64,
        /// Also write per-sample score-colored PLY files.
        #[arg(long, default_value_t = false)]
        ply: bool,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
    },
    /// Time inference over one cloud.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        category: Option<String>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    version: String,
    timestamp_unix_seconds: u64,
}

fn write_run_manifest(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: &[String],
    outputs: &[String],
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        config,
        seed,
        inputs: inputs.to_vec(),
        outputs: outputs.to_vec(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix_seconds: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = dir.join("run_manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn category_from(path: &Path, flag: &Option<String>) -> String {
    flag.clone().unwrap_or_else(|| {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("object");
        stem.split('_').next().unwrap_or(stem).to_string()
    })
}

/// Parses CLI arguments from `argv` and runs the selected command.
pub fn run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    match cli.command {
        Command::Synth {
            categories,
            train,
            test_normal,
            test_anomalous,
            points,
            jitter,
            mu,
            sigma,
            seed,
            out,
            workers,
        } => {
            workers.install();
            let spec = DatasetSpec {
                categories: categories.split(',').map(|c| c.trim().to_string()).collect(),
                train_per_class: train,
                test_normal_per_class: test_normal,
                test_anomalous_per_class: test_anomalous,
                points_per_sample: points,
                jitter,
                seed,
            };
            let ano_cfg = AnomalyConfig {
                mu,
                sigma,
                ..AnomalyConfig::default()
            };
            ensure_dir(&out)?;
            let (train_split, test_split) = build_dataset(&spec, &ano_cfg)?;
            let manifest = save_dataset(&out, &train_split, &test_split)?;
            let manifest_path = out.join("manifest.json");
            manifest.save(&manifest_path)?;
            let outputs: Vec<String> = manifest.entries.iter().map(|e| e.path.clone()).collect();
            write_run_manifest(
                &out,
                "synth",
                serde_json::to_value(&spec).unwrap_or_default(),
                Some(seed),
                &[],
                &outputs,
            )?;
            println!(
                "wrote {} train and {} test samples to {}",
                train_split.len(),
                test_split.len(),
                out.display()
            );
            Ok(())
        }
        Command::Inject {
            input,
            r#type,
            m,
            x,
            mu,
            sigma,
            seed,
            meta,
            out,
        } => {
            let cloud = read_cloud(&input)?;
            let (cfg, seed) = match &meta {
                Some(meta_path) => {
                    let text = std::fs::read_to_string(meta_path)
                        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
                    let meta: DefectMeta =
                        serde_json::from_str(&text).map_err(|e| Error::Parse {
                            path: meta_path.display().to_string(),
                            reason: e.to_string(),
                        })?;
                    let cfg = AnomalyConfig {
                        defect_type: Some(meta.kind),
                        ..meta.config.clone()
                    };
                    (cfg, meta.seed)
                }
                None => {
                    let kind = r#type.as_deref().map(str::parse).transpose()?;
                    let cfg = AnomalyConfig {
                        defect_type: kind,
                        neighbor_count: m,
                        removal_count: x,
                        mu,
                        sigma,
                        ..AnomalyConfig::default()
                    };
                    (cfg, seed)
                }
            };
            ensure_dir(&out)?;
            let (defected, mask, defect_meta) = ano3d_augment(&cloud, &cfg, seed)?;
            let ply = out.join("defected.ply");
            write_ply(&ply, &defected)?;
            let mask_path = out.join("mask.txt");
            let mask_text: String = mask.iter().map(|v| format!("{v}\n")).collect();
            std::fs::write(&mask_path, mask_text)
                .map_err(|e| Error::io(mask_path.display().to_string(), e))?;
            let meta_path = out.join("meta.json");
            let meta_json =
                serde_json::to_string_pretty(&defect_meta).map_err(|e| Error::Parse {
                    path: meta_path.display().to_string(),
                    reason: e.to_string(),
                })?;
            std::fs::write(&meta_path, meta_json)
                .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
            write_run_manifest(
                &out,
                "inject",
                serde_json::to_value(&cfg).unwrap_or_default(),
                Some(seed),
                &[input.display().to_string()],
                &[
                    ply.display().to_string(),
                    mask_path.display().to_string(),
                    meta_path.display().to_string(),
                ],
            )?;
            println!(
                "{} defect: {} points out, {} anomalous",
                format!("{:?}", defect_meta.kind).to_lowercase(),
                defected.len(),
                mask.iter().filter(|&&v| v == 1).count()
            );
            Ok(())
        }
        Command::Train {
            manifest,
            epochs,
            batch,
            lr_adapter,
            lr_prompts,
            text_prompt_len,
            point_prompt_len,
            taps,
            mu,
            sigma,
            seed,
            out,
            workers,
        } => {
            workers.install();
            let dataset = Manifest::load(&manifest)?;
            let (train_split, _) = load_manifest_samples(&dataset)?;
            if train_split.is_empty() {
                return Err(Error::NoSamples("train split".into()));
            }
            let mut categories: Vec<String> =
                train_split.iter().map(|s| s.category.clone()).collect();
            categories.sort();
            categories.dedup();

            let tap_layers: Vec<usize> = taps
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad tap layer '{t}'")))
                })
                .collect::<Result<_>>()?;
            let point_cfg = PointEncoderConfig {
                tap_layers,
                ..PointEncoderConfig::default()
            };
            let head_cfg = HeadConfig {
                text_prompt_len,
                point_prompt_len,
                ..HeadConfig::default()
            };
            let model = PlaneModel::new(
                &categories,
                &TextEncoderConfig::default(),
                &point_cfg,
                &head_cfg,
                seed,
            )?;
            let train_cfg = TrainConfig {
                epochs,
                batch_size: batch,
                lr_adapter,
                lr_prompts_dpcm: lr_prompts,
                seed,
                ..TrainConfig::default()
            };
            let ano_cfg = AnomalyConfig {
                mu,
                sigma,
                ..AnomalyConfig::default()
            };
            ensure_dir(&out)?;
            let history = fit(&model, &train_split, &train_cfg, &ano_cfg, Some(&out))?;
            write_run_manifest(
                &out,
                "train",
                serde_json::to_value(&train_cfg).unwrap_or_default(),
                Some(seed),
                &[manifest.display().to_string()],
                &[
                    out.join("model.ckpt").display().to_string(),
                    out.join("loss.csv").display().to_string(),
                ],
            )?;
            if let Some(last) = history.last() {
                println!("trained {} epochs, final loss {:.6}", history.len(), last.mean_loss);
            } else {
                println!("trained 0 epochs");
            }
            Ok(())
        }
        Command::Infer {
            model,
            input,
            category,
            out,
        } => {
            let model = PlaneModel::load(&model)?;
            let mut cloud = read_cloud(&input)?;
            cloud.class_name = category_from(&input, &category);
            let map = model.infer(&cloud)?;
            ensure_dir(&out)?;
            let scored = out.join("scored.ply");
            write_ply_scored(&scored, &cloud, &map.point_scores)?;
            write_run_manifest(
                &out,
                "infer",
                serde_json::json!({ "category": cloud.class_name }),
                None,
                &[input.display().to_string()],
                &[scored.display().to_string()],
            )?;
            println!("{:.6}", map.object_score);
            Ok(())
        }
        Command::Eval {
            model,
            manifest,
            fpr_limit,
            ply,
            out,
            workers,
        } => {
            workers.install();
            let model = PlaneModel::load(&model)?;
            let dataset = Manifest::load(&manifest)?;
            let (_, test_split) = load_manifest_samples(&dataset)?;
            ensure_dir(&out)?;
            let ply_dir = out.join("scored");
            let report = evaluate(
                &model,
                &test_split,
                fpr_limit,
                ply.then_some(ply_dir.as_path()),
            )?;
            report.save(&out)?;
            write_run_manifest(
                &out,
                "eval",
                serde_json::json!({ "fpr_limit": fpr_limit, "ply": ply }),
                None,
                &[manifest.display().to_string()],
                &[
                    out.join("report.csv").display().to_string(),
                    out.join("report.json").display().to_string(),
                ],
            )?;
            print!("{}", report.to_csv());
            Ok(())
        }
        Command::Bench {
            model,
            input,
            category,
            reps,
            out,
        } => {
            let model = PlaneModel::load(&model)?;
            let mut cloud = read_cloud(&input)?;
            cloud.class_name = category_from(&input, &category);
            let report = benchmark(&model, &cloud, reps)?;
            ensure_dir(&out)?;
            let path = out.join("bench.json");
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            std::fs::write(&path, json).map_err(|e| Error::io(path.display().to_string(), e))?;
            write_run_manifest(
                &out,
                "bench",
                serde_json::json!({ "reps": reps }),
                None,
                &[input.display().to_string()],
                &[path.display().to_string()],
            )?;
            println!(
                "median {:.6}s ({:.2} samples/s)",
                report.median_seconds, report.samples_per_second
            );
            Ok(())
        }
    }
}
