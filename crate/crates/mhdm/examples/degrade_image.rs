//! Corrupt a clean image with multiplicative gamma noise and report how
//! far the result is from the original.
//!
//! Run with: cargo run --release --example degrade_image

use mhdm::degrade::{degrade_shifted, GammaNoiseSpec, DEFAULT_SHIFT};
use mhdm::io::{read_image, write_image};
use mhdm::metrics::quality_report;
use mhdm::operators::parse_blur_spec;
use std::path::Path;

fn main() -> mhdm::Result<()> {
    let (z, depth) = read_image(Path::new("assets/cameraman.pgm"))?;

    // gamma noise with shape a has mean 1 and standard deviation 1/sqrt(a)
    let noise = GammaNoiseSpec::new(25.0, 7)?;
    let blur = parse_blur_spec("identity")?;
    let f = degrade_shifted(&z, &blur, &noise, DEFAULT_SHIFT)?;

    let report = quality_report(&f, &z)?;
    println!("noise shape a = 25, std = {:.3}", 1.0 / 25.0f64.sqrt());
    println!("degraded vs clean: rmse = {:.2}, snr = {:.2} dB", report.rmse, report.snr);

    let out = Path::new("target/degraded_cameraman.pgm");
    write_image(out, &f, depth)?;
    println!("wrote {}", out.display());
    Ok(())
}
