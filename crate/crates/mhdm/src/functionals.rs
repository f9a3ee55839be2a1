//! Fidelity terms, total-variation penalties, the star-norm estimator and
//! noise-level bookkeeping.
//!
//! All integrals use the normalized counting measure (weight 1/N per
//! pixel), so values are resolution independent and directly comparable
//! across image sizes.

use crate::error::{Error, Result};
use crate::grid::{stencil_chi, stencil_diag, stencil_weight_d};
use crate::grid::{finite_difference, Axis, ImageGrid, Scheme};
use serde::{Deserialize, Serialize};

/// Which data-fit term to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FidelitySpec {
    /// mean((f/g - 1)^2); the quadratic ratio fit.
    QuadraticRO,
    /// mean(f/g + log g - log f - 1); nonnegative, zero iff f = g.
    ItakuraSaito,
    /// Log-domain form: g is w = log(candidate), evaluates
    /// mean(f e^{-w} + w - log f - 1).
    SOExponential,
}

/// Estimated noise level and the discrepancy threshold factor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub delta_sq: f64,
    pub tau: f64,
}

pub const DEFAULT_TAU: f64 = 1.0 + 1e-9;

impl NoiseLevel {
    pub fn new(delta_sq: f64, tau: f64) -> Result<Self> {
        // fidelity roundoff can leave a tiny negative value at a perfect fit
        let delta_sq = if delta_sq < 0.0 && delta_sq > -1e-10 {
            0.0
        } else {
            delta_sq
        };
        if delta_sq < 0.0 {
            return Err(Error::InvalidParam(format!(
                "delta_sq must be nonnegative, got {delta_sq}"
            )));
        }
        if tau < 1.0 {
            return Err(Error::InvalidParam(format!("tau must be >= 1, got {tau}")));
        }
        Ok(Self { delta_sq, tau })
    }

    /// Discrepancy threshold tau * delta^2.
    pub fn threshold(&self) -> f64 {
        self.tau * self.delta_sq
    }
}

fn require_positive(img: &ImageGrid, context: &'static str) -> Result<()> {
    if let Some(idx) = img.data().iter().position(|&v| v <= 0.0) {
        return Err(Error::NonPositive {
            value: img.data()[idx],
            index: idx,
            context,
        });
    }
    Ok(())
}

/// Data-fit value H(f_delta, g). For `SOExponential` the second argument is
/// the log-domain candidate w, not the intensity image.
pub fn fidelity(spec: FidelitySpec, f_delta: &ImageGrid, g: &ImageGrid) -> Result<f64> {
    f_delta.check_same_shape(g, "fidelity")?;
    let n = f_delta.len() as f64;
    match spec {
        FidelitySpec::QuadraticRO => {
            require_positive(g, "QuadraticRO denominator")?;
            let mut acc = 0.0;
            for (&f, &gg) in f_delta.data().iter().zip(g.data()) {
                let r = f / gg - 1.0;
                acc += r * r;
            }
            Ok(acc / n)
        }
        FidelitySpec::ItakuraSaito => {
            require_positive(f_delta, "ItakuraSaito data")?;
            require_positive(g, "ItakuraSaito denominator")?;
            let mut acc = 0.0;
            for (&f, &gg) in f_delta.data().iter().zip(g.data()) {
                acc += f / gg + gg.ln() - f.ln() - 1.0;
            }
            Ok(acc / n)
        }
        FidelitySpec::SOExponential => {
            require_positive(f_delta, "SOExponential data")?;
            let mut acc = 0.0;
            for (&f, &w) in f_delta.data().iter().zip(g.data()) {
                acc += f * (-w).exp() + w - f.ln() - 1.0;
            }
            Ok(acc / n)
        }
    }
}

/// Smoothed isotropic total variation mean(sqrt(eps^2 + |D+ u|^2)).
/// eps = 0 gives the plain discrete TV.
pub fn tv(img: &ImageGrid, eps: f64) -> Result<f64> {
    if eps < 0.0 {
        return Err(Error::InvalidParam(format!(
            "tv eps must be nonnegative, got {eps}"
        )));
    }
    let dx = finite_difference(img, Axis::X, Scheme::Forward);
    let dy = finite_difference(img, Axis::Y, Scheme::Forward);
    let mut acc = 0.0;
    for (a, b) in dx.data().iter().zip(dy.data()) {
        acc += (eps * eps + a * a + b * b).sqrt();
    }
    Ok(acc / img.len() as f64)
}

/// TV of the pixelwise log, the multiplicative-domain penalty.
pub fn tv_log(img: &ImageGrid, eps: f64) -> Result<f64> {
    tv(&img.ln_checked("tv_log")?, eps)
}

/// Result of the ascent-based star-norm estimate.
#[derive(Debug, Clone)]
pub struct StarNormEstimate {
    pub value: f64,
    pub phi: ImageGrid,
}

/// Relative tolerance on |mean(w)| before the supremum is declared
/// divergent (a nonzero-mean w pairs with arbitrarily large constants).
const STAR_MEAN_REL_TOL: f64 = 1e-6;

/// Estimate the dual norm sup <w, phi> / TV_eps(phi) by gradient ascent in
/// phi. Backtracking on the step keeps the ratio non-decreasing. Returns
/// the final ratio and maximizer.
pub fn star_norm_estimate(
    w: &ImageGrid,
    eps: f64,
    steps: usize,
    dt: f64,
) -> Result<StarNormEstimate> {
    if eps <= 0.0 || dt <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "star_norm_estimate needs eps > 0 and dt > 0, got eps={eps}, dt={dt}"
        )));
    }
    let rms = (w.norm_sq() / w.len() as f64).sqrt();
    if rms == 0.0 {
        return Ok(StarNormEstimate {
            value: 0.0,
            phi: ImageGrid::constant(w.width(), w.height(), 1e-3),
        });
    }
    let mean_abs = w.mean().abs();
    if mean_abs > STAR_MEAN_REL_TOL * rms {
        return Err(Error::StarNormDivergent {
            mean_abs,
            tol: STAR_MEAN_REL_TOL * rms,
        });
    }

    // work on w/rms so the ascent trajectory is scale invariant, which
    // makes the estimate exactly positively homogeneous
    let w_hat = w.scale(1.0 / rms);
    let n = w.len() as f64;
    let ratio = |phi: &ImageGrid| -> Result<f64> {
        let tve = tv(phi, eps)?;
        Ok(w_hat.dot(phi) / n / tve)
    };

    let mut phi = ImageGrid::constant(w.width(), w.height(), 1e-3);
    let mut r = ratio(&phi)?;
    let mut step = dt;
    for _ in 0..steps {
        phi = star_ascent_step(&w_hat, &phi, r, eps, &mut step)?;
        r = ratio(&phi)?;
    }
    Ok(StarNormEstimate {
        value: rms * r,
        phi,
    })
}

/// One backtracking ascent step on phi for the ratio <w,phi>/TV_eps(phi).
/// `step` is shrunk until the ratio does not decrease; it recovers slowly
/// afterwards. Used both standalone and inside the refined solvers.
pub(crate) fn star_ascent_step(
    w: &ImageGrid,
    phi: &ImageGrid,
    current_ratio: f64,
    eps: f64,
    step: &mut f64,
) -> Result<ImageGrid> {
    let n = w.len() as f64;
    let tve_of = |p: &ImageGrid| tv(p, eps).expect("eps > 0 checked by caller");
    let ratio_of = |p: &ImageGrid| w.dot(p) / n / tve_of(p);

    // ascent direction: (w + R * div(grad phi / sqrt(eps^2 + |grad phi|^2))) / TV_eps(phi)
    let d = stencil_weight_d(phi, eps, false)?;
    let curvature = stencil_chi(&d, phi)?.sub(&stencil_diag(&d).mul(phi));
    let tve = tve_of(phi);
    let grad = w.add(&curvature.scale(current_ratio)).scale(1.0 / tve);

    let mut s = *step;
    for _ in 0..40 {
        let cand = phi.add(&grad.scale(s));
        if cand.all_finite() {
            let r = ratio_of(&cand);
            if r.is_finite() && r >= current_ratio - 1e-12 {
                *step = (s * 1.2).min(*step * 1.2);
                return Ok(cand);
            }
        }
        s *= 0.5;
    }
    // no improving step found; keep phi (ratio unchanged, still monotone)
    *step = s;
    Ok(phi.clone())
}

/// delta^2 taken as the data fit between the degraded image and the clean
/// (blurred) one.
pub fn noise_level(spec: FidelitySpec, f_delta: &ImageGrid, tz: &ImageGrid) -> Result<NoiseLevel> {
    NoiseLevel::new(fidelity(spec, f_delta, tz)?, DEFAULT_TAU)
}

/// Expected delta^2 for unit-mean gamma noise with shape a, used when no
/// ground truth is available. For the log fidelities this is
/// E[eta - log eta - 1] = log a - digamma(a); for the quadratic one it is
/// E[(1/eta - 1)^2] (finite for a > 2).
pub fn analytic_delta_sq(spec: FidelitySpec, shape_a: f64) -> Result<f64> {
    if shape_a <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "gamma shape must be positive, got {shape_a}"
        )));
    }
    match spec {
        FidelitySpec::ItakuraSaito | FidelitySpec::SOExponential => {
            Ok(shape_a.ln() - statrs::function::gamma::digamma(shape_a))
        }
        FidelitySpec::QuadraticRO => {
            if shape_a <= 2.0 {
                return Err(Error::InvalidParam(format!(
                    "quadratic delta^2 needs shape > 2, got {shape_a}"
                )));
            }
            // E[1/eta] = a/(a-1), E[1/eta^2] = a^2/((a-1)(a-2)) for eta ~ Gamma(a, 1/a)
            let a = shape_a;
            Ok(a * a / ((a - 1.0) * (a - 2.0)) - 2.0 * a / (a - 1.0) + 1.0)
        }
    }
}
