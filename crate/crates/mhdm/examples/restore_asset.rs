//! End-to-end restoration of the bundled 256x256 cameraman: degrade,
//! restore, pick the stopping scale, write the result. Takes around half
//! a minute in release mode.
//!
//! Run with: cargo run --release --example restore_asset

use mhdm::degrade::{degrade_shifted, GammaNoiseSpec, DEFAULT_SHIFT};
use mhdm::functionals::{fidelity, NoiseLevel, DEFAULT_TAU};
use mhdm::io::{read_image, write_image, BitDepth};
use mhdm::metrics::quality_report;
use mhdm::multiscale::{run, stopping_index, ModelConfig, SolverChoice, StoppingMode};
use mhdm::operators::BlurOperator;
use mhdm::solvers::{Model, Variant};
use std::path::Path;

fn main() -> mhdm::Result<()> {
    let (z, _) = read_image(Path::new("assets/cameraman.pgm"))?;
    let identity = BlurOperator::identity();
    let noise = GammaNoiseSpec::new(25.0, 1)?;
    let f = degrade_shifted(&z, &identity, &noise, DEFAULT_SHIFT)?;
    let degraded = quality_report(&f, &z)?;
    println!("degraded: rmse = {:.2}, snr = {:.2} dB", degraded.rmse, degraded.snr);

    // the restoration works on strictly positive intensities
    let f_shift = f.add_scalar(DEFAULT_SHIFT);
    let z_shift = z.add_scalar(DEFAULT_SHIFT);

    let mut config = ModelConfig::new(Model::SO, Variant::Regular, SolverChoice::EL);
    config.num_scales = 14;
    let delta_sq = fidelity(config.fidelity_spec(), &f_shift, &z_shift)?;
    let level = NoiseLevel::new(delta_sq, DEFAULT_TAU)?;

    let result = run(&f_shift, &identity, &config, Some(&z_shift))?;
    let stop = stopping_index(&result, &level, StoppingMode::Regular);
    let restored = result.cumulative[stop.k_star].add_scalar(-DEFAULT_SHIFT);
    let report = quality_report(&restored, &z)?;
    println!(
        "restored at k* = {} (k_min = {:?}): rmse = {:.2}, snr = {:.2} dB",
        stop.k_star, result.k_min, report.rmse, report.snr
    );

    let out = Path::new("target/restored_cameraman.pgm");
    write_image(out, &restored, BitDepth::Eight)?;
    println!("wrote {}", out.display());
    Ok(())
}
