//! Density transport: initial mollification and semi-Lagrangian advection
//! along backward characteristics with a clamped cubic interpolant.
//!
//! Foot points are traced in grid-index units, so a zero velocity leaves
//! every sample at an integer index and the interpolant reproduces the
//! data bit for bit.

use rayon::prelude::*;

use crate::error::{DataError, NumericError, ParameterError};
use crate::field::{GridField, VectorGrid};
use crate::layout::SpectralLayout;
use crate::spectral::Spectral;

/// Density samples together with the bounds of the mollified initial datum.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: GridField,
    initial_bounds: (f64, f64),
}

impl DensityField {
    /// Wraps strictly positive finite samples; their extrema become the
    /// recorded initial bounds.
    pub fn new(values: GridField) -> Result<Self, DataError> {
        for (index, &v) in values.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(DataError::NonFinite { index });
            }
            if v <= 0.0 {
                return Err(DataError::Negative { index, value: v });
            }
        }
        let bounds = density_bounds(&values);
        Ok(Self {
            values,
            initial_bounds: bounds,
        })
    }

    /// Samples with explicitly supplied initial bounds (checkpoint restore).
    pub fn with_bounds(values: GridField, initial_bounds: (f64, f64)) -> Self {
        Self {
            values,
            initial_bounds,
        }
    }

    /// `(min, max)` of the mollified initial datum.
    pub fn initial_bounds(&self) -> (f64, f64) {
        self.initial_bounds
    }

    pub fn bounds(&self) -> (f64, f64) {
        density_bounds(&self.values)
    }

    /// Whether the current samples lie inside the initial bounds.
    pub fn within_initial_bounds(&self) -> bool {
        let (lo, hi) = self.bounds();
        lo >= self.initial_bounds.0 && hi <= self.initial_bounds.1
    }

    /// `∫ρ dx` by the uniform collocation rule.
    pub fn mass(&self, layout: &SpectralLayout) -> f64 {
        self.values.sum() * layout.cell_volume()
    }
}

/// Exact grid extrema.
pub fn density_bounds(rho: &GridField) -> (f64, f64) {
    (rho.min(), rho.max())
}

/// Smooths a nonnegative density with the Gaussian multiplier
/// `exp(-δ²|k|²/2)` and clamps the result into `[δ, ρ*+1]`, never leaving the
/// range of the input data except to lift it up to `δ`.
pub fn mollify_initial_density(
    spectral: &Spectral,
    rho0: &GridField,
    delta: f64,
    rho_cap: f64,
) -> Result<DensityField, DataError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(ParameterError::new("delta", delta, "mollification radius must be positive").into());
    }
    if !(rho_cap.is_finite() && rho_cap > 0.0) {
        return Err(ParameterError::new("rho_cap", rho_cap, "density cap must be positive").into());
    }
    for (index, &v) in rho0.values.iter().enumerate() {
        if !v.is_finite() {
            return Err(DataError::NonFinite { index });
        }
        if v < 0.0 {
            return Err(DataError::Negative { index, value: v });
        }
        if v > rho_cap {
            return Err(DataError::AboveCap {
                index,
                value: v,
                cap: rho_cap,
            });
        }
    }
    let layout = spectral.layout();
    let mut hat = spectral.forward(rho0)?;
    for (i, c) in hat.coeffs.iter_mut().enumerate() {
        *c *= (-0.5 * delta * delta * layout.k_squared(i)).exp();
    }
    let smooth = spectral.inverse(&hat)?;
    let (lo0, hi0) = density_bounds(rho0);
    let lo = delta.max(lo0);
    let hi = lo.max(hi0.min(rho_cap + 1.0));
    let values = smooth.map(|v| v.clamp(lo, hi));
    let bounds = density_bounds(&values);
    Ok(DensityField {
        values,
        initial_bounds: bounds,
    })
}

/// Velocity evaluated at arbitrary points of the periodic cell.
pub trait VelocitySampler: Sync {
    fn sample(&self, x: [f64; 3]) -> [f64; 3];
}

/// Unclamped tensor-cubic interpolation of a grid velocity.
#[derive(Debug, Clone)]
pub struct GridVelocity<'a> {
    layout: &'a SpectralLayout,
    comps: Vec<&'a [f64]>,
    owned: Option<VectorGrid>,
}

impl<'a> GridVelocity<'a> {
    pub fn new(layout: &'a SpectralLayout, u: &'a VectorGrid) -> Self {
        Self {
            layout,
            comps: u.comps.iter().map(|c| c.values.as_slice()).collect(),
            owned: None,
        }
    }

    /// The time-centred average `½(u_old + u_new)`.
    pub fn centred(layout: &'a SpectralLayout, old: &VectorGrid, new: &VectorGrid) -> Self {
        let comps = old
            .comps
            .iter()
            .zip(&new.comps)
            .map(|(a, b)| GridField {
                values: a.values.iter().zip(&b.values).map(|(x, y)| 0.5 * (x + y)).collect(),
            })
            .collect();
        Self {
            layout,
            comps: Vec::new(),
            owned: Some(VectorGrid { comps }),
        }
    }

    fn component(&self, axis: usize) -> &[f64] {
        match &self.owned {
            Some(v) => &v.comps[axis].values,
            None => self.comps[axis],
        }
    }
}

impl VelocitySampler for GridVelocity<'_> {
    fn sample(&self, x: [f64; 3]) -> [f64; 3] {
        let layout = self.layout;
        let mut s = [0.0; 3];
        for (axis, si) in s.iter_mut().enumerate().take(layout.dim()) {
            *si = x[axis] / layout.spacing(axis);
        }
        let mut out = [0.0; 3];
        for (axis, o) in out.iter_mut().enumerate().take(layout.dim()) {
            *o = cubic_at(layout, self.component(axis), s).0;
        }
        out
    }
}

/// Velocity given by a closure of the physical position.
pub struct FnVelocity<F>(pub F);

impl<F: Fn([f64; 3]) -> [f64; 3] + Sync> VelocitySampler for FnVelocity<F> {
    fn sample(&self, x: [f64; 3]) -> [f64; 3] {
        (self.0)(x)
    }
}

/// Displacement `x - X̃` in grid-index units for the characteristic ending
/// at grid point `flat`.
fn index_displacement(
    layout: &SpectralLayout,
    velocity: &dyn VelocitySampler,
    flat: usize,
    dt: f64,
) -> Result<[f64; 3], NumericError> {
    let dim = layout.dim();
    let x = layout.position(flat);
    let u0 = velocity.sample(x);
    let mut mid = x;
    for axis in 0..dim {
        mid[axis] -= 0.5 * dt * u0[axis];
    }
    let u1 = velocity.sample(mid);
    let mut d = [0.0; 3];
    for axis in 0..dim {
        if !(u0[axis].is_finite() && u1[axis].is_finite()) {
            return Err(NumericError::NonFinite {
                what: "velocity sample",
            });
        }
        d[axis] = dt * u1[axis] / layout.spacing(axis);
    }
    Ok(d)
}

/// Foot point of the backward characteristic through grid point `flat` over
/// one step `dt`, wrapped into the periodic cell.
///
/// Midpoint rule with one fixed-point correction:
/// `X̃ = x - dt·ū(x - dt·ū(x)/2)`.
pub fn trace_characteristics(
    layout: &SpectralLayout,
    velocity: &dyn VelocitySampler,
    flat: usize,
    dt: f64,
) -> Result<[f64; 3], NumericError> {
    let d = index_displacement(layout, velocity, flat, dt)?;
    let c = layout.coords(flat);
    let n = layout.n_grid() as f64;
    let mut foot = [0.0; 3];
    for axis in 0..layout.dim() {
        let s = (c[axis] as f64 - d[axis]).rem_euclid(n);
        foot[axis] = s * layout.spacing(axis);
    }
    Ok(foot)
}

/// One semi-Lagrangian step `ρ^{n+1}(x) = ρ^n(X̃(x))`.
///
/// The interpolant is clamped to the extrema of its stencil, so the output
/// range is contained in the input range.
pub fn advect_density(
    layout: &SpectralLayout,
    rho: &DensityField,
    velocity: &dyn VelocitySampler,
    dt: f64,
) -> Result<DensityField, NumericError> {
    let src = &rho.values.values;
    let values = (0..layout.len())
        .into_par_iter()
        .map(|flat| {
            let d = index_displacement(layout, velocity, flat, dt)?;
            let c = layout.coords(flat);
            let mut s = [0.0; 3];
            for axis in 0..layout.dim() {
                s[axis] = c[axis] as f64 - d[axis];
            }
            let (v, lo, hi) = cubic_at(layout, src, s);
            Ok(v.clamp(lo, hi))
        })
        .collect::<Result<Vec<f64>, NumericError>>()?;
    Ok(DensityField {
        values: GridField { values },
        initial_bounds: rho.initial_bounds,
    })
}

/// Lagrange weights on the nodes `-1, 0, 1, 2` at offset `θ ∈ [0, 1)`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Tensor-cubic interpolation at index-space point `s`; returns the value and
/// the stencil extrema.
fn cubic_at(layout: &SpectralLayout, f: &[f64], s: [f64; 3]) -> (f64, f64, f64) {
    let dim = layout.dim();
    let n = layout.n_grid() as i64;
    let mut base = [0i64; 3];
    let mut w = [[0.0; 4]; 3];
    for axis in 0..3 {
        if axis < dim {
            let fl = s[axis].floor();
            base[axis] = fl as i64;
            w[axis] = cubic_weights(s[axis] - fl);
        } else {
            w[axis] = [0.0, 1.0, 0.0, 0.0];
        }
    }
    let reach = |axis: usize| if axis < dim { 0..4 } else { 1..2 };
    let mut value = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in reach(0) {
        let ii = (base[0] + i as i64 - 1).rem_euclid(n) as usize;
        for j in reach(1) {
            let jj = (base[1] + j as i64 - 1).rem_euclid(n) as usize;
            let wij = w[0][i] * w[1][j];
            for k in reach(2) {
                let flat = if dim == 3 {
                    let kk = (base[2] + k as i64 - 1).rem_euclid(n) as usize;
                    (ii * layout.n_grid() + jj) * layout.n_grid() + kk
                } else {
                    ii * layout.n_grid() + jj
                };
                let v = f[flat];
                value += wij * w[2][k] * v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    (value, lo, hi)
}
