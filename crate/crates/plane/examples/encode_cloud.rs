//! Runs the frozen encoders directly: patchifies a cloud, prints the tap
//! shapes, and embeds two text descriptions for comparison.
//!
//! Run with: cargo run --example encode_cloud

use plane::autodiff::concat;
use plane::dataset::{synth_shape, ShapeKind};
use plane::plm::{PointEncoderConfig, PointLanguageModel, TextEncoderConfig, Vocab};

fn main() -> plane::Result<()> {
    let vocab = Vocab::build(&["sphere".into(), "box".into()]);
    let plm = PointLanguageModel::new(
        vocab,
        &TextEncoderConfig::default(),
        &PointEncoderConfig::default(),
        3,
    )?;

    let cloud = synth_shape(ShapeKind::Sphere, 2048, 0.01, 5)?;
    let encoded = plm.point.encode(&cloud)?;
    println!("global feature: {:?}", encoded.global.shape());
    for (i, tap) in encoded.taps.iter().enumerate() {
        println!("tap {i}: {:?}", tap.shape());
    }
    println!(
        "patches: {} centers, member map covers {} points",
        encoded.patches.centers.len(),
        encoded.patches.member_map.len()
    );

    for text in ["a point cloud of normal sphere", "a point cloud of damaged sphere"] {
        let ids = plm.vocab.tokenize(text);
        let seq = plm.text.embed_tokens(&ids);
        let feat = plm.text.encode(&seq)?;
        let cos: f64 = feat
            .value()
            .iter()
            .zip(encoded.global.value())
            .map(|(a, b)| a * b)
            .sum();
        println!("cos(point global, \"{text}\") = {cos:.4}");
    }

    // prompt tuning composes in embedding space: prepend a learnable prompt
    let prompt = plane::autodiff::Tensor::param(&[4, 64], vec![0.01; 256]);
    let ids = plm.vocab.tokenize("sphere");
    let seq = concat(&[prompt, plm.text.embed_tokens(&ids)], 0)?;
    let feat = plm.text.encode(&seq)?;
    println!("prompted feature norm = {:.6}", feat.value().iter().map(|v| v * v).sum::<f64>().sqrt());
    Ok(())
}
