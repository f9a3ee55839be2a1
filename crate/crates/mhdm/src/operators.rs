//! Linear blur operator T with an exact adjoint T*, plus the identity
//! operator for pure denoising.
//!
//! Kernels are small and applied by direct convolution with reflect
//! padding. The adjoint is the true algebraic adjoint of the padded
//! operator, implemented by scattering each output contribution back to
//! the (reflected) source pixel.

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Blur operator: a normalized square kernel with reflect boundary
/// handling, or the identity.
#[derive(Debug, Clone)]
pub struct BlurOperator {
    kernel: Vec<f64>,
    size: usize,
    is_identity: bool,
}

/// Reflect an index into [0, n): ..., 2, 1, 0 | 0, 1, 2, ... (edge included).
#[inline]
fn reflect(idx: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = idx;
    // kernels are far smaller than grids, so one fold suffices in practice;
    // loop to stay correct for tiny grids
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

impl BlurOperator {
    /// The identity operator (no blur).
    pub fn identity() -> Self {
        Self {
            kernel: vec![1.0],
            size: 1,
            is_identity: true,
        }
    }

    /// Sampled Gaussian kernel exp(-(i^2+j^2)/(2 variance)) on the integer
    /// lattice centered at 0, normalized to sum 1.
    pub fn gaussian(size: usize, variance: f64) -> Result<Self> {
        if size % 2 == 0 || size == 0 {
            return Err(Error::InvalidParam(format!(
                "gaussian kernel size must be odd and >= 1, got {size}"
            )));
        }
        if variance <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "gaussian variance must be positive, got {variance}"
            )));
        }
        let half = (size / 2) as isize;
        let mut kernel = Vec::with_capacity(size * size);
        for i in -half..=half {
            for j in -half..=half {
                kernel.push((-((i * i + j * j) as f64) / (2.0 * variance)).exp());
            }
        }
        let total: f64 = kernel.iter().sum();
        for k in kernel.iter_mut() {
            *k /= total;
        }
        Ok(Self {
            kernel,
            size,
            is_identity: size == 1,
        })
    }

    /// Build from explicit weights; must be square, odd-sized, nonnegative
    /// and sum to 1 within 1e-12.
    pub fn from_kernel(size: usize, kernel: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 || kernel.len() != size * size {
            return Err(Error::InvalidParam(format!(
                "kernel must be odd square, got size {size} with {} weights",
                kernel.len()
            )));
        }
        if kernel.iter().any(|&k| k < 0.0) {
            return Err(Error::InvalidParam("kernel weights must be nonnegative".into()));
        }
        let total: f64 = kernel.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!(
                "kernel must sum to 1 within 1e-12, got {total}"
            )));
        }
        Ok(Self {
            kernel,
            size,
            is_identity: size == 1,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.is_identity
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Apply T: convolution with reflect padding. Identity returns the
    /// input unchanged.
    pub fn apply(&self, img: &ImageGrid) -> ImageGrid {
        if self.is_identity {
            return img.clone();
        }
        let half = (self.size / 2) as isize;
        let (w, h) = (img.width(), img.height());
        ImageGrid::from_fn(w, h, |i, j| {
            let mut acc = 0.0;
            let mut k = 0;
            for di in -half..=half {
                for dj in -half..=half {
                    let ri = reflect(i as isize + di, h);
                    let rj = reflect(j as isize + dj, w);
                    acc += self.kernel[k] * img.get(ri, rj);
                    k += 1;
                }
            }
            acc
        })
    }

    /// Apply the exact adjoint T* of `apply` under the unweighted
    /// Euclidean inner product, boundary rule included.
    pub fn apply_adjoint(&self, img: &ImageGrid) -> ImageGrid {
        if self.is_identity {
            return img.clone();
        }
        let half = (self.size / 2) as isize;
        let (w, h) = (img.width(), img.height());
        let mut out = ImageGrid::zeros(w, h);
        // scatter: apply reads input at reflected (i+di, j+dj), so the
        // adjoint accumulates each output contribution there
        for i in 0..h {
            for j in 0..w {
                let v = img.get(i, j);
                let mut k = 0;
                for di in -half..=half {
                    for dj in -half..=half {
                        let ri = reflect(i as isize + di, h);
                        let rj = reflect(j as isize + dj, w);
                        let cur = out.get(ri, rj);
                        out.set(ri, rj, cur + self.kernel[k] * v);
                        k += 1;
                    }
                }
            }
        }
        out
    }
}

/// Parse a blur spec of the form `identity` or `gaussian:SIZE:VARIANCE`.
pub fn parse_blur_spec(spec: &str) -> Result<BlurOperator> {
    if spec == "identity" || spec == "none" {
        return Ok(BlurOperator::identity());
    }
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["gaussian", size, variance] => {
            let size: usize = size
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad kernel size in '{spec}'")))?;
            let variance: f64 = variance
                .parse()
                .map_err(|_| Error::InvalidParam(format!("bad variance in '{spec}'")))?;
            BlurOperator::gaussian(size, variance)
        }
        _ => Err(Error::InvalidParam(format!(
            "unrecognized blur spec '{spec}' (expected identity or gaussian:SIZE:VARIANCE)"
        ))),
    }
}
