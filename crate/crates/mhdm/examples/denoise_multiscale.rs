//! Full multiscale restoration of a small synthetic image, printing the
//! residual trace and the scale picked by the discrepancy rule.
//!
//! Run with: cargo run --release --example denoise_multiscale

use mhdm::degrade::{degrade, GammaNoiseSpec};
use mhdm::functionals::{fidelity, NoiseLevel, DEFAULT_TAU};
use mhdm::grid::ImageGrid;
use mhdm::multiscale::{run, stopping_index, ModelConfig, SolverChoice, StoppingMode};
use mhdm::operators::BlurOperator;
use mhdm::solvers::{Model, Variant};

/// Disc on a dark background, 64x64.
fn test_image() -> ImageGrid {
    ImageGrid::from_fn(64, 64, |i, j| {
        let (di, dj) = (i as f64 - 32.0, j as f64 - 32.0);
        if di * di + dj * dj < 400.0 {
            200.0
        } else {
            50.0
        }
    })
}

fn main() -> mhdm::Result<()> {
    let z = test_image().add_scalar(1.0);
    let identity = BlurOperator::identity();
    let noise = GammaNoiseSpec::new(25.0, 11)?;
    let f = degrade(&z, &identity, &noise);

    let mut config = ModelConfig::new(Model::SO, Variant::Regular, SolverChoice::EL);
    config.num_scales = 12;
    config.solver_params.max_iters = 400;

    // noise level measured against the known clean image
    let delta_sq = fidelity(config.fidelity_spec(), &f, &z)?;
    let level = NoiseLevel::new(delta_sq, DEFAULT_TAU)?;

    let result = run(&f, &identity, &config, Some(&z))?;

    println!("  k  lambda_k    residual    ratio    rmse     snr");
    for k in 0..result.num_scales() {
        println!(
            "{:3}  {:<10.4} {:<10.6} {:<8.3} {:<8.3} {:.2}",
            k,
            result.lambdas[k],
            result.residuals[k],
            result.residuals[k] / delta_sq,
            result.rmse[k],
            result.snr[k],
        );
    }

    let stop = stopping_index(&result, &level, StoppingMode::Regular);
    println!(
        "discrepancy rule picks k* = {} (oracle k_min = {:?})",
        stop.k_star, result.k_min
    );
    Ok(())
}
