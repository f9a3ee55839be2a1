//! Multiscale driver: schedules the fidelity weights, runs the per-scale
//! solver, accumulates the reconstruction, tracks residuals and metrics,
//! and applies the discrepancy stopping rule.

use crate::error::{Error, Result};
use crate::functionals::{fidelity, tv, tv_log, FidelitySpec, NoiseLevel, DEFAULT_TAU};
use crate::grid::ImageGrid;
use crate::metrics::{csv_value, rmse, snr};
use crate::operators::BlurOperator;
use crate::solvers::{
    aa_solve, aalog_solve, so_solve_admm, so_solve_el, tnv_solve, tnvlog_solve, Model,
    ScaleState, SolverParams, Variant,
};
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverChoice {
    EL,
    ADMM,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: Model,
    pub variant: Variant,
    pub solver: SolverChoice,
    pub lambda0: f64,
    /// Geometric growth factor of lambda_k.
    pub q: f64,
    /// Tight/refined weight sequence a_k = a0 / (1+k)^schedule_exp.
    pub a0: f64,
    pub schedule_exp: f64,
    pub num_scales: usize,
    pub tau: f64,
    pub solver_params: SolverParams,
}

impl ModelConfig {
    /// Defaults per model/variant: q = 2 regular, q = 3 tight/refined,
    /// lambda0 = 0.01, a0 = 1, exponent 3/2, 15 extra scales.
    pub fn new(model: Model, variant: Variant, solver: SolverChoice) -> Self {
        let q = match variant {
            Variant::Regular => 2.0,
            _ => 3.0,
        };
        Self {
            model,
            variant,
            solver,
            lambda0: 0.01,
            q,
            a0: 1.0,
            schedule_exp: 1.5,
            num_scales: 15,
            tau: DEFAULT_TAU,
            solver_params: SolverParams::new(0.01),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 > 0.0) {
            return Err(Error::InvalidParam(format!(
                "lambda0 must be positive, got {}",
                self.lambda0
            )));
        }
        if self.q < 2.0 {
            return Err(Error::InvalidParam(format!(
                "q must be at least 2 so the weights at least double, got {}",
                self.q
            )));
        }
        if self.a0 < 0.0 {
            return Err(Error::InvalidParam(format!(
                "a0 must be nonnegative, got {}",
                self.a0
            )));
        }
        if self.tau < 1.0 {
            return Err(Error::InvalidParam(format!(
                "tau must be >= 1, got {}",
                self.tau
            )));
        }
        if matches!(self.solver, SolverChoice::ADMM) && self.model != Model::SO {
            return Err(Error::InvalidParam(
                "the ADMM solver applies to the log-domain model only".into(),
            ));
        }
        Ok(())
    }

    /// Fidelity used by this model.
    pub fn fidelity_spec(&self) -> FidelitySpec {
        match self.model {
            Model::SO | Model::AA | Model::AAlog => FidelitySpec::ItakuraSaito,
            Model::TNVlog | Model::TNV => FidelitySpec::QuadraticRO,
        }
    }

    /// Whether the penalty acts on the log of the reconstruction.
    pub fn log_penalty(&self) -> bool {
        matches!(self.model, Model::SO | Model::AAlog | Model::TNVlog)
    }
}

pub fn lambda_schedule(config: &ModelConfig, k: usize) -> f64 {
    config.lambda0 * config.q.powi(k as i32)
}

pub fn ak_schedule(config: &ModelConfig, k: usize) -> f64 {
    if matches!(config.variant, Variant::Regular) {
        0.0
    } else {
        config.a0 / (1.0 + k as f64).powf(config.schedule_exp)
    }
}

#[derive(Debug, Clone)]
pub struct MultiscaleResult {
    /// Per-scale factor u_k (multiplicative models) or increment w_k (log
    /// domain).
    pub scales: Vec<ImageGrid>,
    /// Cumulative reconstruction x_k after each scale.
    pub cumulative: Vec<ImageGrid>,
    pub lambdas: Vec<f64>,
    pub aks: Vec<f64>,
    /// H(f_delta, T x_k).
    pub residuals: Vec<f64>,
    /// H + a_k * J(x_k), the discrepancy quantity of the tight/refined
    /// schemes (equals `residuals` for regular ones).
    pub tight_residuals: Vec<f64>,
    /// Per-scale RMSE/SNR against ground truth, empty when absent.
    pub rmse: Vec<f64>,
    pub snr: Vec<f64>,
    /// argmin RMSE, when ground truth was provided.
    pub k_min: Option<usize>,
    pub log_penalty: bool,
}

impl MultiscaleResult {
    pub fn num_scales(&self) -> usize {
        self.cumulative.len()
    }
}

/// Run the full multiscale loop for k = 0..=num_scales.
pub fn run(
    f_delta: &ImageGrid,
    t: &BlurOperator,
    config: &ModelConfig,
    ground_truth: Option<&ImageGrid>,
) -> Result<MultiscaleResult> {
    config.validate()?;
    if let Some(idx) = f_delta.data().iter().position(|&v| v <= 0.0) {
        return Err(Error::NonPositive {
            value: f_delta.data()[idx],
            index: idx,
            context: "degraded input (apply a larger shift)",
        });
    }
    if let Some(z) = ground_truth {
        f_delta.check_same_shape(z, "ground truth")?;
    }

    let mut state = ScaleState::initial(f_delta.width(), f_delta.height());
    let spec = config.fidelity_spec();
    let mut out = MultiscaleResult {
        scales: Vec::new(),
        cumulative: Vec::new(),
        lambdas: Vec::new(),
        aks: Vec::new(),
        residuals: Vec::new(),
        tight_residuals: Vec::new(),
        rmse: Vec::new(),
        snr: Vec::new(),
        k_min: None,
        log_penalty: config.log_penalty(),
    };

    for k in 0..=config.num_scales {
        let lambda_k = lambda_schedule(config, k);
        let a_k = ak_schedule(config, k);
        let mut params = config.solver_params;
        params.lambda_k = lambda_k;
        params.ak_lambda_k = a_k * lambda_k;

        let scale_result = (|| -> Result<()> {
            match (config.model, config.solver) {
                (Model::SO, SolverChoice::EL) => {
                    let w = so_solve_el(f_delta, &state, config.variant, &params)?;
                    state.advance_log(&w);
                    out.scales.push(w);
                }
                (Model::SO, SolverChoice::ADMM) => {
                    let w = so_solve_admm(f_delta, &state, config.variant, &params)?;
                    state.advance_log(&w);
                    out.scales.push(w);
                }
                (Model::AA, _) => {
                    let u = aa_solve(f_delta, &state, t, &params)?;
                    state.advance_multiplicative(&u)?;
                    out.scales.push(u);
                }
                (Model::AAlog, _) => {
                    let u = aalog_solve(f_delta, &state, t, config.variant, &params)?;
                    state.advance_multiplicative(&u)?;
                    out.scales.push(u);
                }
                (Model::TNVlog, _) => {
                    let u = tnvlog_solve(f_delta, &state, t, config.variant, &params)?;
                    state.advance_multiplicative(&u)?;
                    out.scales.push(u);
                }
                (Model::TNV, _) => {
                    let u = tnv_solve(f_delta, &state, &params)?;
                    state.advance_multiplicative(&u)?;
                    out.scales.push(u);
                }
            }
            Ok(())
        })();
        scale_result.map_err(|e| e.at_scale(k))?;

        let xk = state.x_prev.clone();
        let txk = t.apply(&xk);
        let residual = fidelity(spec, f_delta, &txk).map_err(|e| e.at_scale(k))?;
        let tight_residual = if matches!(config.variant, Variant::Regular) {
            residual
        } else {
            let j = if config.log_penalty() {
                tv_log(&xk, 0.0).map_err(|e| e.at_scale(k))?
            } else {
                tv(&xk, 0.0).map_err(|e| e.at_scale(k))?
            };
            residual + a_k * j
        };
        out.lambdas.push(lambda_k);
        out.aks.push(a_k);
        out.residuals.push(residual);
        out.tight_residuals.push(tight_residual);
        if let Some(z) = ground_truth {
            out.rmse.push(rmse(&xk, z)?);
            out.snr.push(snr(&xk, z)?);
        }
        out.cumulative.push(xk);
    }

    if ground_truth.is_some() {
        let k_min = out
            .rmse
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k);
        out.k_min = k_min;
    }
    Ok(out)
}

/// Which residual trace the discrepancy rule reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingMode {
    Regular,
    Tight,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StoppingIndex {
    pub k_star: usize,
    /// Set when no residual dropped below tau * delta^2 within the
    /// computed scales; k_star is then the last index.
    pub not_yet_discrepant: bool,
}

/// Discrepancy rule: the largest k whose residual is still at least
/// tau * delta^2.
pub fn stopping_index(
    result: &MultiscaleResult,
    noise: &NoiseLevel,
    mode: StoppingMode,
) -> StoppingIndex {
    let trace = match mode {
        StoppingMode::Regular => &result.residuals,
        StoppingMode::Tight => &result.tight_residuals,
    };
    let threshold = noise.threshold();
    let last = trace.len().saturating_sub(1);
    if trace.last().map_or(false, |&r| r >= threshold) {
        return StoppingIndex {
            k_star: last,
            not_yet_discrepant: true,
        };
    }
    let k_star = trace
        .iter()
        .enumerate()
        .rev()
        .find(|(_, &r)| r >= threshold)
        .map(|(k, _)| k)
        .unwrap_or(0);
    StoppingIndex {
        k_star,
        not_yet_discrepant: false,
    }
}

/// CSV trace with one row per scale.
pub fn write_trace(
    result: &MultiscaleResult,
    noise: Option<&NoiseLevel>,
    mut w: impl Write,
) -> Result<()> {
    writeln!(
        w,
        "k,lambda_k,a_k,residual,tight_residual,rmse,snr,ratio_to_delta_sq"
    )?;
    for k in 0..result.num_scales() {
        let ratio = noise
            .map(|n| {
                if n.delta_sq > 0.0 {
                    csv_value(result.residuals[k] / n.delta_sq)
                } else {
                    "inf".to_string()
                }
            })
            .unwrap_or_default();
        let (r, s) = if result.rmse.is_empty() {
            (String::new(), String::new())
        } else {
            (csv_value(result.rmse[k]), csv_value(result.snr[k]))
        };
        writeln!(
            w,
            "{k},{},{},{},{},{r},{s},{ratio}",
            csv_value(result.lambdas[k]),
            csv_value(result.aks[k]),
            csv_value(result.residuals[k]),
            csv_value(result.tight_residuals[k]),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{degrade, GammaNoiseSpec};
    use approx::assert_relative_eq;

    fn quick_config(model: Model, variant: Variant) -> ModelConfig {
        let mut config = ModelConfig::new(model, variant, SolverChoice::EL);
        config.num_scales = 4;
        config.solver_params.max_iters = 60;
        config
    }

    fn test_image(n: usize) -> ImageGrid {
        ImageGrid::from_fn(n, n, |i, j| {
            if (i as isize - n as isize / 2).pow(2) + (j as isize - n as isize / 2).pow(2)
                < (n as isize / 3).pow(2)
            {
                180.0
            } else {
                60.0
            }
        })
    }

    #[test]
    fn lambda_schedule_values() {
        let mut c = ModelConfig::new(Model::SO, Variant::Regular, SolverChoice::EL);
        c.lambda0 = 0.01;
        assert_relative_eq!(lambda_schedule(&c, 3), 0.08, epsilon = 1e-15);
        c.q = 3.0;
        assert_relative_eq!(lambda_schedule(&c, 2), 0.09, epsilon = 1e-15);
        for k in 0..30 {
            assert!(2.0 * lambda_schedule(&c, k) <= lambda_schedule(&c, k + 1) + 1e-12);
        }
    }

    #[test]
    fn ak_schedule_values() {
        let c = ModelConfig::new(Model::SO, Variant::Tight, SolverChoice::EL);
        assert_eq!(ak_schedule(&c, 0), 1.0);
        assert_relative_eq!(ak_schedule(&c, 3), 0.125, epsilon = 1e-15);
        let total: f64 = (0..=1000).map(|k| ak_schedule(&c, k)).sum();
        assert!(total < 2.613, "{total}");
        // regular variant disables the sequence
        let r = ModelConfig::new(Model::SO, Variant::Regular, SolverChoice::EL);
        assert_eq!(ak_schedule(&r, 5), 0.0);
    }

    #[test]
    fn zero_extra_scales_single_step() {
        let z = test_image(16);
        let noise = GammaNoiseSpec::new(25.0, 3).unwrap();
        let f = degrade(&z, &BlurOperator::identity(), &noise).add_scalar(1.0);
        let mut config = quick_config(Model::SO, Variant::Regular);
        config.num_scales = 0;
        let result = run(&f, &BlurOperator::identity(), &config, None).unwrap();
        assert_eq!(result.scales.len(), 1);
        assert_eq!(result.cumulative.len(), 1);
    }

    #[test]
    fn multiplicative_consistency() {
        let z = test_image(16);
        let noise = GammaNoiseSpec::new(25.0, 4).unwrap();
        let f = degrade(&z, &BlurOperator::identity(), &noise).add_scalar(1.0);
        for model in [Model::AAlog, Model::TNV] {
            let config = quick_config(model, Variant::Regular);
            let result = run(&f, &BlurOperator::identity(), &config, None).unwrap();
            let mut prod = ImageGrid::constant(16, 16, 1.0);
            for u in &result.scales {
                prod = prod.mul(u);
            }
            let last = result.cumulative.last().unwrap();
            let rel = prod.sub(last).max_abs() / last.max_abs();
            assert!(rel < 1e-12, "{rel}");
        }
    }

    #[test]
    fn residuals_non_increasing() {
        let z = test_image(24);
        let noise = GammaNoiseSpec::new(25.0, 5).unwrap();
        let f = degrade(&z, &BlurOperator::identity(), &noise).add_scalar(1.0);
        for (model, variant) in [
            (Model::SO, Variant::Regular),
            (Model::AAlog, Variant::Tight),
            (Model::TNV, Variant::Regular),
        ] {
            let mut config = quick_config(model, variant);
            config.solver_params.max_iters = 150;
            let result = run(&f, &BlurOperator::identity(), &config, Some(&z.add_scalar(1.0)))
                .unwrap();
            for pair in result.residuals.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-6,
                    "residuals increased for {model:?}/{variant:?}: {:?}",
                    result.residuals
                );
            }
            assert!(result.k_min.is_some());
        }
    }

    #[test]
    fn stopping_rule_hand_trace() {
        let d = 1.0;
        let result = MultiscaleResult {
            scales: vec![],
            cumulative: vec![],
            lambdas: vec![0.0; 3],
            aks: vec![0.0; 3],
            residuals: vec![4.0 * d, 2.0 * d, 0.5 * d],
            tight_residuals: vec![4.0 * d, 2.0 * d, 0.5 * d],
            rmse: vec![],
            snr: vec![],
            k_min: None,
            log_penalty: true,
        };
        let noise = NoiseLevel::new(d, 1.0).unwrap();
        let idx = stopping_index(&result, &noise, StoppingMode::Regular);
        assert_eq!(idx.k_star, 1);
        assert!(!idx.not_yet_discrepant);

        // never dropping below the threshold flags the trace
        let noise_small = NoiseLevel::new(0.1, 1.0).unwrap();
        let idx = stopping_index(&result, &noise_small, StoppingMode::Regular);
        assert_eq!(idx.k_star, 2);
        assert!(idx.not_yet_discrepant);
    }

    #[test]
    fn trace_csv_shape() {
        let z = test_image(16);
        let noise = GammaNoiseSpec::new(25.0, 6).unwrap();
        let f = degrade(&z, &BlurOperator::identity(), &noise).add_scalar(1.0);
        let config = quick_config(Model::SO, Variant::Regular);
        let result = run(&f, &BlurOperator::identity(), &config, Some(&z.add_scalar(1.0)))
            .unwrap();
        let nl = NoiseLevel::new(0.02, 1.0 + 1e-9).unwrap();
        let mut buf = Vec::new();
        write_trace(&result, Some(&nl), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), config.num_scales + 2);
        assert!(lines[0].starts_with("k,lambda_k,a_k,residual"));
        assert_eq!(lines[1].split(',').count(), 8);
    }

    #[test]
    fn admm_choice_limited_to_log_model() {
        let config = ModelConfig::new(Model::AA, Variant::Regular, SolverChoice::ADMM);
        assert!(config.validate().is_err());
    }
}
