//! Minimal end-to-end run: synthesizes a tiny corpus, trains the head for a
//! few epochs, and prints the evaluation report.
//!
//! Run with: cargo run --release --example train_and_eval

use plane::ano3d::AnomalyConfig;
use plane::dataset::{build_dataset, DatasetSpec};
use plane::dualprompt::HeadConfig;
use plane::evalkit::evaluate;
use plane::plm::{PointEncoderConfig, TextEncoderConfig};
use plane::train::{fit, PlaneModel, TrainConfig};

fn main() -> plane::Result<()> {
    let spec = DatasetSpec {
        categories: vec!["sphere".into(), "box".into()],
        train_per_class: 4,
        test_normal_per_class: 5,
        test_anomalous_per_class: 5,
        points_per_sample: 1024,
        jitter: 0.01,
        seed: 3,
    };
    let ano_cfg = AnomalyConfig::default();
    let (train, test) = build_dataset(&spec, &ano_cfg)?;

    let model = PlaneModel::new(
        &spec.categories,
        &TextEncoderConfig::default(),
        &PointEncoderConfig::default(),
        &HeadConfig::default(),
        11,
    )?;
    let cfg = TrainConfig {
        epochs: 60,
        seed: 11,
        ..TrainConfig::default()
    };
    let history = fit(&model, &train, &cfg, &ano_cfg, None)?;
    println!(
        "loss: first {:.4} -> last {:.4}",
        history.first().map_or(0.0, |e| e.mean_loss),
        history.last().map_or(0.0, |e| e.mean_loss)
    );

    let report = evaluate(&model, &test, 0.3, None)?;
    print!("{}", report.to_csv());
    Ok(())
}
