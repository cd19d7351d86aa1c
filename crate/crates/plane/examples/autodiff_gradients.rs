//! Exercises the reverse-mode engine: builds a small network, checks one
//! gradient against central finite differences, and shows that frozen
//! tensors pass gradients through without receiving any.
//!
//! Run with: cargo run --example autodiff_gradients

use plane::autodiff::{backward, cosine_similarity, Tensor};

fn main() -> plane::Result<()> {
    let x = Tensor::param(&[1, 4], vec![0.5, -1.0, 2.0, 0.25]);
    let w_frozen = Tensor::constant(&[4, 4], (0..16).map(|i| (i as f64 * 0.07).sin()).collect());
    let target = Tensor::constant(&[1, 4], vec![1.0, 0.0, -1.0, 0.5]);

    let loss_of = |x: &Tensor| -> plane::Result<Tensor> {
        let h = x.matmul(&w_frozen)?.gelu();
        let sim = cosine_similarity(&h, &target)?;
        Ok(sim.neg().add_scalar(1.0).sum_all())
    };

    let loss = loss_of(&x)?;
    backward(&loss)?;
    let grad = x.grad().expect("trainable leaf receives a gradient");
    println!("loss = {:.6}", loss.item());
    println!("autodiff grad = {:?}", grad);
    assert!(w_frozen.grad().is_none(), "frozen weights stay grad-free");

    // central finite difference on the first coordinate
    let h = 1e-5;
    let mut data = x.value();
    data[0] += h;
    x.set_data(data.clone());
    let up = loss_of(&x)?.item();
    data[0] -= 2.0 * h;
    x.set_data(data.clone());
    let down = loss_of(&x)?.item();
    let numeric = (up - down) / (2.0 * h);
    println!("numeric d/dx0 = {numeric:.8}, autodiff = {:.8}", grad[0]);
    assert!((numeric - grad[0]).abs() / numeric.abs().max(1e-6) < 1e-4);
    println!("finite-difference check passed");
    Ok(())
}
