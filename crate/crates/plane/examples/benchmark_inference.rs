//! Times the inference pipeline stage by stage at two point counts.
//!
//! Run with: cargo run --release --example benchmark_inference

use plane::dataset::{synth_shape, ShapeKind};
use plane::dualprompt::HeadConfig;
use plane::evalkit::benchmark;
use plane::plm::{PointEncoderConfig, TextEncoderConfig};
use plane::train::PlaneModel;

fn main() -> plane::Result<()> {
    let model = PlaneModel::new(
        &["sphere".into()],
        &TextEncoderConfig::default(),
        &PointEncoderConfig::default(),
        &HeadConfig::default(),
        1,
    )?;
    for n in [2048, 8192] {
        let cloud = synth_shape(ShapeKind::Sphere, n, 0.01, 4)?;
        let report = benchmark(&model, &cloud, 5)?;
        println!(
            "{n} points: median {:.4}s ({:.2} samples/s) | encode {:.4}s head {:.4}s interpolate {:.4}s",
            report.median_seconds,
            report.samples_per_second,
            report.stage_encode_seconds,
            report.stage_head_seconds,
            report.stage_interpolate_seconds,
        );
    }
    Ok(())
}
