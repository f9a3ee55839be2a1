//! Restoration quality metrics.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QualityReport {
    pub rmse: f64,
    /// dB; +infinity when the images match exactly.
    pub snr: f64,
    pub mean_shift: f64,
}

/// ||x - z|| / sqrt(N).
pub fn rmse(x: &ImageGrid, z: &ImageGrid) -> Result<f64> {
    x.check_same_shape(z, "rmse")?;
    Ok((x.sub(z).norm_sq() / x.len() as f64).sqrt())
}

/// 10 log10(||z||^2 / ||x - z||^2); +infinity at exact recovery.
pub fn snr(x: &ImageGrid, z: &ImageGrid) -> Result<f64> {
    x.check_same_shape(z, "snr")?;
    let signal = z.norm_sq();
    if signal == 0.0 {
        return Err(Error::InvalidParam(
            "snr undefined for an all-zero reference image".into(),
        ));
    }
    let err = x.sub(z).norm_sq();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / err).log10())
}

/// mean(x) - mean(z), the average intensity drift of a restoration.
pub fn mean_shift(x: &ImageGrid, z: &ImageGrid) -> Result<f64> {
    x.check_same_shape(z, "mean_shift")?;
    Ok(x.mean() - z.mean())
}

pub fn quality_report(x: &ImageGrid, z: &ImageGrid) -> Result<QualityReport> {
    Ok(QualityReport {
        rmse: rmse(x, z)?,
        snr: snr(x, z)?,
        mean_shift: mean_shift(x, z)?,
    })
}

/// CSV rendering of a possibly infinite metric value.
pub fn csv_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}
