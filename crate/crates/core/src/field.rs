//! Field containers in grid and coefficient representation.
//!
//! A field is either a set of real samples on the collocation grid
//! ([`GridField`]) or a set of complex Fourier coefficients over the full
//! wavenumber box ([`Spectrum`]). Coefficients are amplitude-normalized,
//! `f(x) = Σ f̂_k e^{i k·x}`, so a constant field `c` has `f̂_0 = c` and the
//! mean square of the samples equals `Σ |f̂_k|²`. Coefficients in the
//! orthonormal basis `e^{i k·x}/√|Ω|` are `√|Ω| f̂_k`; every Galerkin operator
//! in this crate is invariant under that rescaling.
//!
//! Layouts are not stored in the containers; operations take the layout (or
//! the [`Spectral`](crate::spectral::Spectral) engine) explicitly.

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn constant(len: usize, value: f64) -> Self {
        Self {
            values: vec![value; len],
        }
    }

    pub fn from_fn(layout: &crate::SpectralLayout, f: impl Fn([f64; 3]) -> f64) -> Self {
        Self {
            values: (0..layout.len()).map(|i| f(layout.position(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(len: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Real inner product `Re Σ conj(x_k) y_k`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x.re * y.re + x.im * y.im)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * alpha;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for x in &mut self.coeffs {
            *x *= alpha;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorGrid {
    pub comps: Vec<GridField>,
}

impl VectorGrid {
    pub fn zeros(dim: usize, len: usize) -> Self {
        Self {
            comps: vec![GridField::zeros(len); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    /// Largest pointwise Euclidean norm.
    pub fn max_norm(&self) -> f64 {
        let len = self.comps.first().map_or(0, GridField::len);
        (0..len)
            .map(|i| {
                self.comps
                    .iter()
                    .map(|c| c.values[i] * c.values[i])
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorSpectrum {
    pub comps: Vec<Spectrum>,
}

impl VectorSpectrum {
    pub fn zeros(dim: usize, len: usize) -> Self {
        Self {
            comps: vec![Spectrum::zeros(len); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(x, y)| x.dot(y))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (x, y) in self.comps.iter_mut().zip(&other.comps) {
            x.axpy(alpha, y);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for x in &mut self.comps {
            x.scale(alpha);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.comps.iter().all(Spectrum::all_finite)
    }
}

/// A `dim × dim` tensor field on the grid, components stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorGrid {
    dim: usize,
    pub comps: Vec<GridField>,
}

impl TensorGrid {
    pub fn zeros(dim: usize, len: usize) -> Self {
        Self {
            dim,
            comps: vec![GridField::zeros(len); dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> &GridField {
        &self.comps[row * self.dim + col]
    }

    pub fn get_mut(&mut self, row: usize, col: usize) -> &mut GridField {
        &mut self.comps[row * self.dim + col]
    }

    /// Pointwise Frobenius square `A:A` at one grid point.
    pub fn frobenius_sq_at(&self, point: usize) -> f64 {
        self.comps.iter().map(|c| c.values[point].powi(2)).sum()
    }

    /// Largest pointwise asymmetry `|A_ij - A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                for (a, b) in self.get(i, j).values.iter().zip(&self.get(j, i).values) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        worst
    }
}
