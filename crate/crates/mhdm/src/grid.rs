//! Image raster type and the finite-difference stencil primitives shared by
//! every solver.
//!
//! All operations use replicate (Neumann) boundary handling: indices outside
//! the grid are clamped to the nearest valid pixel, so normal differences
//! across the boundary are zero. Reductions run in a fixed sequential
//! row-major order for bit-exact reproducibility.

use crate::error::{Error, Result};

/// Axis along which a finite difference is taken. `X` runs across columns,
/// `Y` down rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Finite-difference scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Forward,
    Backward,
    Centered,
}

/// Rectangular raster of real-valued intensities, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Build a grid from row-major data. Rejects empty dimensions,
    /// length mismatches and non-finite entries.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParam(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "non-finite entry {} at index {idx}",
                data[idx]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant-valued grid.
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    /// Build a grid by evaluating `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Total pixel count.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape(&self, other: &ImageGrid, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: format!("{}x{}", self.width, self.height),
                right: format!("{}x{}", other.width, other.height),
                context,
            })
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Value at a possibly out-of-range index, clamped to the grid
    /// (replicate boundary).
    #[inline]
    pub fn clamped(&self, row: isize, col: isize) -> f64 {
        let i = row.clamp(0, self.height as isize - 1) as usize;
        let j = col.clamp(0, self.width as isize - 1) as usize;
        self.data[i * self.width + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ImageGrid, f: impl Fn(f64, f64) -> f64) -> ImageGrid {
        debug_assert!(self.same_shape(other));
        ImageGrid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &ImageGrid) -> ImageGrid {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ImageGrid) -> ImageGrid {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ImageGrid) -> ImageGrid {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> ImageGrid {
        self.map(|v| v * s)
    }

    pub fn add_scalar(&self, s: f64) -> ImageGrid {
        self.map(|v| v + s)
    }

    /// Pixelwise natural log; errors on the first nonpositive pixel.
    pub fn ln_checked(&self, context: &'static str) -> Result<ImageGrid> {
        if let Some(idx) = self.data.iter().position(|&v| v <= 0.0) {
            return Err(Error::NonPositive {
                value: self.data[idx],
                index: idx,
                context,
            });
        }
        Ok(self.map(f64::ln))
    }

    pub fn exp_map(&self) -> ImageGrid {
        self.map(f64::exp)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.data.iter().all(|&v| v > 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    // Reductions: fixed sequential row-major accumulation.

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Finite difference of `img` along `axis` with the given scheme and
/// replicate-edge boundary handling, so differences normal to the boundary
/// vanish.
pub fn finite_difference(img: &ImageGrid, axis: Axis, scheme: Scheme) -> ImageGrid {
    let (di, dj) = match axis {
        Axis::X => (0isize, 1isize),
        Axis::Y => (1, 0),
    };
    ImageGrid::from_fn(img.width, img.height, |i, j| {
        let (i, j) = (i as isize, j as isize);
        match scheme {
            Scheme::Forward => img.clamped(i + di, j + dj) - img.clamped(i, j),
            Scheme::Backward => img.clamped(i, j) - img.clamped(i - di, j - dj),
            Scheme::Centered => (img.clamped(i + di, j + dj) - img.clamped(i - di, j - dj)) / 2.0,
        }
    })
}

/// Pointwise diffusivity weight d(u) = 1 / (m * sqrt(eps^2 + |D+ u|^2)),
/// with m = |u| when `with_modulus` is set and m = 1 otherwise.
pub fn stencil_weight_d(u: &ImageGrid, eps: f64, with_modulus: bool) -> Result<ImageGrid> {
    if eps <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "stencil eps must be positive, got {eps}"
        )));
    }
    if with_modulus {
        if let Some(idx) = u.data.iter().position(|&v| v == 0.0) {
            return Err(Error::DivisionHazard { index: idx });
        }
    }
    let dx = finite_difference(u, Axis::X, Scheme::Forward);
    let dy = finite_difference(u, Axis::Y, Scheme::Forward);
    let mut out = ImageGrid::zeros(u.width, u.height);
    for idx in 0..u.data.len() {
        let g = (eps * eps + dx.data[idx] * dx.data[idx] + dy.data[idx] * dy.data[idx]).sqrt();
        let m = if with_modulus { u.data[idx].abs() } else { 1.0 };
        out.data[idx] = 1.0 / (m * g);
    }
    Ok(out)
}

/// Off-diagonal neighbour sum of the semi-implicit TV stencil:
/// chi_ij = d_ij u_{i+1,j} + d_{i-1,j} u_{i-1,j} + d_ij u_{i,j+1} + d_{i,j-1} u_{i,j-1}.
pub fn stencil_chi(d: &ImageGrid, u: &ImageGrid) -> Result<ImageGrid> {
    d.check_same_shape(u, "stencil_chi")?;
    Ok(ImageGrid::from_fn(u.width, u.height, |i, j| {
        let (i, j) = (i as isize, j as isize);
        d.clamped(i, j) * u.clamped(i + 1, j)
            + d.clamped(i - 1, j) * u.clamped(i - 1, j)
            + d.clamped(i, j) * u.clamped(i, j + 1)
            + d.clamped(i, j - 1) * u.clamped(i, j - 1)
    }))
}

/// Diagonal weight of the semi-implicit TV stencil:
/// 2 d_ij + d_{i-1,j} + d_{i,j-1}.
pub fn stencil_diag(d: &ImageGrid) -> ImageGrid {
    ImageGrid::from_fn(d.width, d.height, |i, j| {
        let (i, j) = (i as isize, j as isize);
        2.0 * d.clamped(i, j) + d.clamped(i - 1, j) + d.clamped(i, j - 1)
    })
}

/// Centered-difference gradient magnitude sqrt(D0x^2 + D0y^2).
pub fn centered_gradient_magnitude(u: &ImageGrid) -> ImageGrid {
    let dx = finite_difference(u, Axis::X, Scheme::Centered);
    let dy = finite_difference(u, Axis::Y, Scheme::Centered);
    dx.zip_with(&dy, |a, b| (a * a + b * b).sqrt())
}
