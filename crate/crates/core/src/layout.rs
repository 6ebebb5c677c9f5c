//! Periodic grid geometry and the retained Fourier mode set.

use std::f64::consts::PI;

use crate::error::LayoutError;

/// Largest per-axis resolution accepted for three-dimensional layouts.
pub const MAX_GRID_3D: usize = 32;

/// Geometry of a periodic box together with its Galerkin cutoff.
///
/// Grid points are stored row-major with axis 0 slowest. A Fourier mode with
/// integer index `n` on an axis of period `L` has physical wavenumber
/// `2π n / L`; modes with every `|n_i| <= m_cut` form the retained set. The
/// retained set is closed under negation, so real fields keep
/// conjugate-symmetric coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLayout {
    dim: usize,
    extent: [f64; 3],
    n_grid: usize,
    m_cut: usize,
    len: usize,
    wavevectors: Vec<[f64; 3]>,
    k_squared: Vec<f64>,
    retained: Vec<usize>,
    retained_mask: Vec<bool>,
    negated: Vec<usize>,
}

impl SpectralLayout {
    /// Layout on the `2π`-periodic torus.
    pub fn new(dim: usize, n_grid: usize, m_cut: usize) -> Result<Self, LayoutError> {
        Self::with_extent(dim, n_grid, m_cut, &vec![2.0 * PI; dim])
    }

    /// Layout with an explicit period per axis.
    pub fn with_extent(
        dim: usize,
        n_grid: usize,
        m_cut: usize,
        extent: &[f64],
    ) -> Result<Self, LayoutError> {
        if dim != 2 && dim != 3 {
            return Err(LayoutError::Dimension(dim));
        }
        if extent.len() != dim {
            return Err(LayoutError::ExtentCount {
                expected: dim,
                got: extent.len(),
            });
        }
        if let Some(&bad) = extent.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(LayoutError::Extent(bad));
        }
        if n_grid < 4 || !n_grid.is_multiple_of(2) {
            return Err(LayoutError::GridSize(n_grid));
        }
        if dim == 3 && n_grid > MAX_GRID_3D {
            return Err(LayoutError::TooLarge3d(n_grid));
        }
        if m_cut == 0 || n_grid <= 3 * m_cut {
            return Err(LayoutError::Aliasing { n_grid, m_cut });
        }

        let mut ext = [0.0; 3];
        ext[..dim].copy_from_slice(extent);
        let len = n_grid.pow(dim as u32);
        let mut wavevectors = Vec::with_capacity(len);
        let mut k_squared = Vec::with_capacity(len);
        let mut retained = Vec::new();
        let mut retained_mask = Vec::with_capacity(len);
        let nyquist = (n_grid / 2) as i64;
        for flat in 0..len {
            let modes = mode_of(flat, dim, n_grid);
            let mut k = [0.0; 3];
            let mut keep = true;
            for axis in 0..dim {
                let n = modes[axis];
                if n.unsigned_abs() as usize > m_cut {
                    keep = false;
                }
                // The Nyquist mode has no well-defined real derivative.
                if n != nyquist {
                    k[axis] = 2.0 * PI * n as f64 / ext[axis];
                }
            }
            k_squared.push(k.iter().map(|v| v * v).sum());
            wavevectors.push(k);
            retained_mask.push(keep);
            if keep {
                retained.push(flat);
            }
        }
        let negated = (0..len)
            .map(|flat| {
                let m = mode_of(flat, dim, n_grid);
                let n = n_grid as i64;
                (0..dim).fold(0usize, |acc, a| acc * n_grid + (-m[a]).rem_euclid(n) as usize)
            })
            .collect();
        Ok(Self {
            dim,
            extent: ext,
            n_grid,
            m_cut,
            len,
            wavevectors,
            k_squared,
            retained,
            retained_mask,
            negated,
        })
    }

    /// Largest cutoff the two-thirds rule allows on `n_grid` points.
    pub fn default_m_cut(n_grid: usize) -> usize {
        (n_grid.saturating_sub(1)) / 3
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn m_cut(&self) -> usize {
        self.m_cut
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    /// Number of collocation points (and of stored coefficients).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Measure of the periodic cell.
    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    /// Quadrature weight of a single collocation point.
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len as f64
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.n_grid as f64
    }

    /// Smallest grid spacing over all axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Integer grid coordinates of a flat index.
    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % self.n_grid;
            rest /= self.n_grid;
        }
        out
    }

    pub fn flat_index(&self, coords: &[usize]) -> usize {
        coords[..self.dim]
            .iter()
            .fold(0, |acc, &c| acc * self.n_grid + (c % self.n_grid))
    }

    /// Physical position of a collocation point.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let c = self.coords(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = c[axis] as f64 * self.spacing(axis);
        }
        x
    }

    /// Signed integer mode numbers stored at a flat coefficient index.
    pub fn mode(&self, flat: usize) -> [i64; 3] {
        mode_of(flat, self.dim, self.n_grid)
    }

    /// Flat coefficient index of an integer mode.
    pub fn flat_of_mode(&self, mode: &[i64]) -> usize {
        let n = self.n_grid as i64;
        mode[..self.dim]
            .iter()
            .fold(0usize, |acc, &m| acc * self.n_grid + m.rem_euclid(n) as usize)
    }

    /// Physical wavevector (zero component on Nyquist axes).
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        self.wavevectors[flat]
    }

    pub fn k_squared(&self, flat: usize) -> f64 {
        self.k_squared[flat]
    }

    /// Flat index of the mode `-k`.
    pub fn negated(&self, flat: usize) -> usize {
        self.negated[flat]
    }

    pub fn is_retained(&self, flat: usize) -> bool {
        self.retained_mask[flat]
    }

    /// Flat indices of the retained modes, in storage order.
    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    pub(crate) fn retained_mask(&self) -> &[bool] {
        &self.retained_mask
    }

    /// Largest `|k|^2` over the retained set.
    pub fn max_retained_k_squared(&self) -> f64 {
        self.retained
            .iter()
            .map(|&i| self.k_squared[i])
            .fold(0.0, f64::max)
    }

    /// Eigenvalue of `A = -Δ + I` for the scalar basis function at `flat`.
    pub fn shifted_laplace_eigenvalue(&self, flat: usize) -> f64 {
        self.k_squared[flat] + 1.0
    }

    /// Eigenvalue of the periodic Stokes operator for a solenoidal mode.
    pub fn stokes_eigenvalue(&self, flat: usize) -> f64 {
        self.k_squared[flat]
    }

    /// `(λ_k)` table of `-Δ + I` over the retained set, in retained order.
    pub fn shifted_laplace_table(&self) -> Vec<f64> {
        self.retained
            .iter()
            .map(|&i| self.shifted_laplace_eigenvalue(i))
            .collect()
    }
}

fn mode_of(flat: usize, dim: usize, n_grid: usize) -> [i64; 3] {
    let mut out = [0i64; 3];
    let mut rest = flat;
    let half = n_grid / 2;
    for axis in (0..dim).rev() {
        let i = rest % n_grid;
        rest /= n_grid;
        out[axis] = if i <= half {
            i as i64
        } else {
            i as i64 - n_grid as i64
        };
    }
    out
}
