//! The discrepancy stopping rule without ground truth: when the clean
//! image is unknown, the noise level is computed analytically from the
//! gamma shape parameter, and k* is the last scale whose residual is
//! still above it.
//!
//! Run with: cargo run --release --example stopping_rule

use mhdm::degrade::{degrade, GammaNoiseSpec};
use mhdm::functionals::{analytic_delta_sq, NoiseLevel, DEFAULT_TAU};
use mhdm::grid::ImageGrid;
use mhdm::multiscale::{run, stopping_index, ModelConfig, SolverChoice, StoppingMode};
use mhdm::operators::BlurOperator;
use mhdm::solvers::{Model, Variant};

fn main() -> mhdm::Result<()> {
    let z = ImageGrid::from_fn(64, 64, |i, _| if i >= 32 { 201.0 } else { 61.0 });
    let identity = BlurOperator::identity();
    let shape_a = 25.0;
    let f = degrade(&z, &identity, &GammaNoiseSpec::new(shape_a, 2)?);

    let mut config = ModelConfig::new(Model::SO, Variant::Regular, SolverChoice::EL);
    config.num_scales = 12;
    config.solver_params.max_iters = 400;

    // expected fidelity value of pure noise, no clean image needed
    let delta_sq = analytic_delta_sq(config.fidelity_spec(), shape_a)?;
    let level = NoiseLevel::new(delta_sq, DEFAULT_TAU)?;
    println!("analytic noise level delta^2 = {delta_sq:.6}");

    // run blind, then compare the blind stop against the oracle
    let blind = run(&f, &identity, &config, None)?;
    let stop = stopping_index(&blind, &level, StoppingMode::Regular);
    println!("blind k* = {} (not_yet_discrepant = {})", stop.k_star, stop.not_yet_discrepant);

    let oracle = run(&f, &identity, &config, Some(&z))?;
    println!("oracle k_min = {:?}", oracle.k_min);
    for k in 0..blind.num_scales() {
        let marker = if k == stop.k_star { " <- k*" } else { "" };
        println!(
            "k = {k:2}: residual / delta^2 = {:.3}{marker}",
            blind.residuals[k] / delta_sq
        );
    }
    Ok(())
}
