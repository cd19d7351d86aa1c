//! Builds a small synthetic corpus and writes it to disk with a manifest.
//!
//! Run with: cargo run --example synth_dataset

use plane::ano3d::AnomalyConfig;
use plane::dataset::{build_dataset, save_dataset, DatasetSpec};

fn main() -> plane::Result<()> {
    let spec = DatasetSpec {
        categories: vec!["sphere".into(), "box".into(), "torus".into()],
        train_per_class: 4,
        test_normal_per_class: 3,
        test_anomalous_per_class: 3,
        points_per_sample: 1024,
        jitter: 0.01,
        seed: 7,
    };
    let (train, test) = build_dataset(&spec, &AnomalyConfig::default())?;
    println!("train samples: {}", train.len());
    println!("test samples:  {}", test.len());
    for sample in test.iter().take(4) {
        let anomalous = sample.cloud.labels.as_ref().map_or(0, |l| {
            l.iter().filter(|&&v| v == 1).count()
        });
        println!(
            "  {} label={} anomalous_points={} digest={}",
            sample.category,
            sample.label_object,
            anomalous,
            &sample.digest()[..12]
        );
    }

    let dir = std::env::temp_dir().join("plane-example-dataset");
    let manifest = save_dataset(&dir, &train, &test)?;
    manifest.save(&dir.join("manifest.json"))?;
    println!("wrote {} files under {}", manifest.entries.len(), dir.display());
    Ok(())
}
