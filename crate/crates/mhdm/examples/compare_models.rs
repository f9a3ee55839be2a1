//! Run every restoration model on the same noisy input and tabulate the
//! best reachable SNR and the SNR at the automatic stopping index.
//!
//! Run with: cargo run --release --example compare_models

use mhdm::degrade::{degrade, GammaNoiseSpec};
use mhdm::functionals::{fidelity, NoiseLevel, DEFAULT_TAU};
use mhdm::grid::ImageGrid;
use mhdm::multiscale::{run, stopping_index, ModelConfig, SolverChoice, StoppingMode};
use mhdm::operators::BlurOperator;
use mhdm::solvers::{Model, Variant};

fn test_image() -> ImageGrid {
    // two intensity plateaus plus a smooth ramp; 64x64
    ImageGrid::from_fn(64, 64, |i, j| {
        let base = if (i / 16 + j / 16) % 2 == 0 { 160.0 } else { 70.0 };
        base + i as f64 / 2.0
    })
}

fn main() -> mhdm::Result<()> {
    let z = test_image().add_scalar(1.0);
    let identity = BlurOperator::identity();
    let noise = GammaNoiseSpec::new(25.0, 3)?;
    let f = degrade(&z, &identity, &noise);

    let cases: &[(&str, Model, Variant, SolverChoice)] = &[
        ("log-domain (descent)", Model::SO, Variant::Regular, SolverChoice::EL),
        ("log-domain tight", Model::SO, Variant::Tight, SolverChoice::EL),
        ("log-domain (splitting)", Model::SO, Variant::Regular, SolverChoice::ADMM),
        ("multiplicative TV", Model::AA, Variant::Regular, SolverChoice::EL),
        ("multiplicative TV(log)", Model::AAlog, Variant::Regular, SolverChoice::EL),
        ("quadratic ratio", Model::TNV, Variant::Regular, SolverChoice::EL),
        ("quadratic ratio, TV(log)", Model::TNVlog, Variant::Regular, SolverChoice::EL),
    ];

    println!("{:<26} {:>5} {:>8} {:>5} {:>8}", "model", "k_min", "snr", "k*", "snr@k*");
    for &(label, model, variant, solver) in cases {
        let mut config = ModelConfig::new(model, variant, solver);
        config.num_scales = 12;
        config.solver_params.max_iters = 300;

        let delta_sq = fidelity(config.fidelity_spec(), &f, &z)?;
        let level = NoiseLevel::new(delta_sq, DEFAULT_TAU)?;
        let result = run(&f, &identity, &config, Some(&z))?;
        let mode = if matches!(variant, Variant::Regular) {
            StoppingMode::Regular
        } else {
            StoppingMode::Tight
        };
        let stop = stopping_index(&result, &level, mode);
        let k_min = result.k_min.expect("ground truth given");
        println!(
            "{:<26} {:>5} {:>8.2} {:>5} {:>8.2}",
            label, k_min, result.snr[k_min], stop.k_star, result.snr[stop.k_star]
        );
    }
    Ok(())
}
