//! The total-variation proximal operator on its own: one quadratic
//! denoising step, the building block of the splitting solver.
//!
//! Run with: cargo run --release --example tv_denoise

use mhdm::grid::ImageGrid;
use mhdm::metrics::rmse;
use mhdm::tvprox::{tv_prox, ProxParams};

fn main() -> mhdm::Result<()> {
    // step edge plus deterministic pseudo-noise
    let clean = ImageGrid::from_fn(48, 48, |_, j| if j < 24 { 0.2 } else { 0.8 });
    let noisy = ImageGrid::from_fn(48, 48, |i, j| {
        let wiggle = ((i * 37 + j * 101) % 17) as f64 / 17.0 - 0.5;
        clean.get(i, j) + 0.15 * wiggle
    });

    let mut params = ProxParams::new(8.0)?;
    params.max_iters = 200_000;
    params.tol = 1e-7;
    let denoised = tv_prox(&noisy, &params)?;

    println!("rmse noisy    vs clean: {:.4}", rmse(&noisy, &clean)?);
    println!("rmse denoised vs clean: {:.4}", rmse(&denoised, &clean)?);
    // the prox preserves the mean exactly
    println!(
        "mean drift: {:.3e}",
        (denoised.mean() - noisy.mean()).abs()
    );
    Ok(())
}
