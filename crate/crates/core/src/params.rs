use crate::constitutive::{PowerLawExponent, ViscosityLaw};
use crate::error::ParameterError;

/// Switches for individual terms of the coupled system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Physics {
    /// `ρΨ'(φ)` in the chemical potential and `ρ∇Ψ(φ)` in the momentum.
    pub potential: bool,
    /// Power-law viscous stress.
    pub stress: bool,
    /// `ρμ∇φ` in the momentum equation.
    pub capillary: bool,
    /// `ρ(u·∇)u` and `ρu·∇φ`.
    pub convection: bool,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            potential: true,
            stress: true,
            capillary: true,
            convection: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DensityMode {
    /// `ρ` follows the flow by semi-Lagrangian transport.
    #[default]
    Transported,
    /// `ρ` is held fixed in time.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub p: PowerLawExponent,
    pub viscosity: ViscosityLaw,
    /// Mollification radius and density floor `δ`.
    pub delta: f64,
    /// Upper density bound `ρ*` of the initial datum.
    pub rho_cap: f64,
    /// Relative residual target of the mass solves.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub physics: Physics,
    pub density_mode: DensityMode,
}

impl Params {
    pub fn new(
        p: f64,
        nu_lower: f64,
        nu_upper: f64,
        nu_shape: f64,
        delta: f64,
        rho_cap: f64,
    ) -> Result<Self, ParameterError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(ParameterError::new("delta", delta, "must be positive"));
        }
        if !(rho_cap.is_finite() && rho_cap > 0.0) {
            return Err(ParameterError::new("rho_cap", rho_cap, "must be positive"));
        }
        Ok(Self {
            p: PowerLawExponent::new(p)?,
            viscosity: ViscosityLaw::logistic(nu_lower, nu_upper, nu_shape)?,
            delta,
            rho_cap,
            cg_tol: 1e-11,
            cg_max_iter: 500,
            physics: Physics::default(),
            density_mode: DensityMode::Transported,
        })
    }
}

impl Default for Params {
    fn default() -> Self {
        Self::new(2.8, 1.0, 1.0, 1.0, 0.05, 2.0).expect("default parameters are admissible")
    }
}
