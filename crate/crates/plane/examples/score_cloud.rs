//! Scores a defected cloud with an untrained head and writes a heat-colored
//! PLY next to the system temp directory.
//!
//! Run with: cargo run --example score_cloud

use plane::ano3d::{ano3d_augment, AnomalyConfig, DefectKind};
use plane::dataset::{synth_shape, ShapeKind};
use plane::dualprompt::HeadConfig;
use plane::geom3d::io::write_ply_scored;
use plane::plm::{PointEncoderConfig, TextEncoderConfig};
use plane::train::PlaneModel;

fn main() -> plane::Result<()> {
    let model = PlaneModel::new(
        &["sphere".into()],
        &TextEncoderConfig::default(),
        &PointEncoderConfig::default(),
        &HeadConfig::default(),
        9,
    )?;

    let clean = synth_shape(ShapeKind::Sphere, 2048, 0.005, 2)?;
    let cfg = AnomalyConfig {
        defect_type: Some(DefectKind::Bulge),
        ..AnomalyConfig::default()
    };
    let (defected, mask, _) = ano3d_augment(&clean, &cfg, 21)?;

    let map = model.infer(&defected)?;
    println!("object score = {:.6}", map.object_score);
    println!(
        "score range = [{:.6}, {:.6}]",
        map.point_scores.iter().copied().fold(f64::INFINITY, f64::min),
        map.object_score
    );
    let anomalous_mean = map
        .point_scores
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m == 1)
        .map(|(s, _)| s)
        .sum::<f64>()
        / mask.iter().filter(|&&m| m == 1).count() as f64;
    println!("mean score on ground-truth points = {anomalous_mean:.6}");

    let out = std::env::temp_dir().join("plane-example-scored.ply");
    write_ply_scored(&out, &defected, &map.point_scores)?;
    println!("wrote {}", out.display());
    Ok(())
}
