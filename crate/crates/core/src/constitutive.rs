//! Pointwise material laws: double-well potential, bounded viscosity, and the
//! power-law stress `ν(φ)(1+|𝔻u|²)^{(p-2)/2} 𝔻u`.

use rayon::prelude::*;
use thiserror::Error;

use crate::error::ParameterError;
use crate::field::{GridField, TensorGrid};

/// Landau double well `Ψ(s) = ¼(s²-1)²`.
pub fn landau(s: f64) -> f64 {
    let w = s * s - 1.0;
    0.25 * w * w
}

/// `Ψ'(s) = s³ - s`.
pub fn landau_prime(s: f64) -> f64 {
    s * s * s - s
}

/// `Ψ''(s) = 3s² - 1`.
pub fn landau_second(s: f64) -> f64 {
    3.0 * s * s - 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViscosityProfile {
    /// `ν ≡ ν_*`.
    Constant,
    /// `ν(s) = ν_* + (ν^* - ν_*) σ(shape · s)` with the logistic sigmoid `σ`.
    Logistic { shape: f64 },
}

/// Concentration-dependent viscosity bounded in `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscosityLaw {
    lower: f64,
    upper: f64,
    profile: ViscosityProfile,
}

impl ViscosityLaw {
    pub fn constant(nu: f64) -> Result<Self, ParameterError> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(ParameterError::new("nu_lower", nu, "viscosity must be positive"));
        }
        Ok(Self {
            lower: nu,
            upper: nu,
            profile: ViscosityProfile::Constant,
        })
    }

    pub fn logistic(lower: f64, upper: f64, shape: f64) -> Result<Self, ParameterError> {
        if !(lower.is_finite() && lower > 0.0) {
            return Err(ParameterError::new("nu_lower", lower, "must be positive"));
        }
        if !(upper.is_finite() && upper >= lower) {
            return Err(ParameterError::new("nu_upper", upper, "must be at least nu_lower"));
        }
        if !(shape.is_finite() && shape >= 0.0) {
            return Err(ParameterError::new("nu_shape", shape, "must be finite and non-negative"));
        }
        Ok(Self {
            lower,
            upper,
            profile: ViscosityProfile::Logistic { shape },
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn profile(&self) -> ViscosityProfile {
        self.profile
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.profile {
            ViscosityProfile::Constant => self.lower,
            ViscosityProfile::Logistic { shape } => {
                let v = self.lower + (self.upper - self.lower) * sigmoid(shape * s);
                v.clamp(self.lower, self.upper)
            }
        }
    }

    /// Lipschitz constant of `s ↦ ν(s)`.
    pub fn lipschitz_bound(&self) -> f64 {
        match self.profile {
            ViscosityProfile::Constant => 0.0,
            ViscosityProfile::Logistic { shape } => 0.25 * (self.upper - self.lower) * shape,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Power-law exponent `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawExponent(f64);

impl PowerLawExponent {
    pub fn new(p: f64) -> Result<Self, ParameterError> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(ParameterError::new("p", p, "power-law exponent must satisfy p > 1"))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// `p > 5/2`: the range with global weak solutions.
    pub fn in_weak_solution_range(&self) -> bool {
        self.0 > 2.5
    }

    /// `5/2 <= p < 3`: the range with local strong solutions on the torus.
    pub fn in_strong_solution_range(&self) -> bool {
        (2.5..3.0).contains(&self.0)
    }

    /// Whether any a-priori bound is available for this exponent.
    pub fn theory_flag(&self) -> bool {
        self.in_weak_solution_range() || self.in_strong_solution_range()
    }

    /// Newtonian (`p = 2`), shear-thinning (`p < 2`) or shear-thickening.
    pub fn regime(&self) -> &'static str {
        if self.0 == 2.0 {
            "newtonian"
        } else if self.0 < 2.0 {
            "shear-thinning"
        } else {
            "shear-thickening"
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("stress factor needs |𝔻u|² >= 0, got {0}")]
pub struct DomainError(pub f64);

/// `(1 + q)^{(p-2)/2}` for `q = |𝔻u|²`.
pub fn stress_factor(q: f64, p: PowerLawExponent) -> Result<f64, DomainError> {
    if q < 0.0 || q.is_nan() {
        return Err(DomainError(q));
    }
    Ok(factor_unchecked(q, p.value()))
}

#[inline]
fn factor_unchecked(q: f64, p: f64) -> f64 {
    if p == 2.0 {
        1.0
    } else {
        (1.0 + q).powf(0.5 * (p - 2.0))
    }
}

/// Pointwise extra stress `ν(φ)(1+|𝔻u|²)^{(p-2)/2} 𝔻u`.
pub fn stress_tensor(
    du: &TensorGrid,
    phi: &GridField,
    p: PowerLawExponent,
    law: &ViscosityLaw,
) -> TensorGrid {
    let coeff = effective_viscosity(du, phi, p, law);
    let d = du.dim();
    let mut out = TensorGrid::zeros(d, phi.len());
    for i in 0..d {
        for j in i..d {
            let vals: Vec<f64> = du
                .get(i, j)
                .values
                .iter()
                .zip(&coeff)
                .map(|(a, c)| a * c)
                .collect();
            if i != j {
                out.get_mut(j, i).values = vals.clone();
            }
            out.get_mut(i, j).values = vals;
        }
    }
    out
}

/// Pointwise `ν(φ)(1+|𝔻u|²)^{(p-2)/2}`.
pub fn effective_viscosity(
    du: &TensorGrid,
    phi: &GridField,
    p: PowerLawExponent,
    law: &ViscosityLaw,
) -> Vec<f64> {
    (0..phi.len())
        .into_par_iter()
        .map(|i| law.eval(phi.values[i]) * factor_unchecked(du.frobenius_sq_at(i), p.value()))
        .collect()
}

/// Pointwise dissipation `ν(φ)(1+|𝔻u|²)^{(p-2)/2}|𝔻u|²`.
pub fn dissipation_density(
    du: &TensorGrid,
    phi: &GridField,
    p: PowerLawExponent,
    law: &ViscosityLaw,
) -> GridField {
    let values = (0..phi.len())
        .map(|i| {
            let q = du.frobenius_sq_at(i);
            law.eval(phi.values[i]) * factor_unchecked(q, p.value()) * q
        })
        .collect();
    GridField { values }
}
