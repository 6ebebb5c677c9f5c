//! Energy balance, conservation functionals and a-priori norm tracks.
//!
//! Grid integrals use the uniform collocation weight `|Ω|/N^d`; quadratic
//! forms of band-limited fields use Plancherel, `∫|f|² = |Ω| Σ|f̂_k|²`.

use crate::constitutive::{dissipation_density, landau, landau_prime};
use crate::field::{GridField, Spectrum};
use crate::galerkin::Model;
use crate::state::SimState;

/// Energy terms and dissipation rates at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedger {
    pub t: f64,
    /// `½∫ρ|u|²`
    pub kinetic: f64,
    /// `½∫|∇φ|²`
    pub interfacial: f64,
    /// `∫ρΨ(φ)`
    pub potential: f64,
    /// `∫ρΨ'(φ)`, reported for comparison only.
    pub potential_prime: f64,
    /// `∫ν(φ)(1+|𝔻u|²)^{(p−2)/2}|𝔻u|²`
    pub viscous: f64,
    /// `∫|∇μ|²`
    pub chemical: f64,
}

impl EnergyLedger {
    pub fn total(&self) -> f64 {
        self.kinetic + self.interfacial + self.potential
    }

    pub fn dissipation(&self) -> f64 {
        self.viscous + self.chemical
    }

    pub fn is_admissible(&self) -> bool {
        [
            self.kinetic,
            self.interfacial,
            self.potential,
            self.viscous,
            self.chemical,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// `|Ω| Σ w(k)|f̂_k|²`
fn weighted_norm_sq(model: &Model, f: &Spectrum, w: impl Fn(f64) -> f64) -> f64 {
    let layout = model.layout();
    f.coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| w(layout.k_squared(i)) * c.norm_sqr())
        .sum::<f64>()
        * layout.volume()
}

pub fn energy(model: &Model, state: &SimState) -> EnergyLedger {
    let sp = model.spectral();
    let layout = sp.layout();
    let params = model.params();
    let dv = layout.cell_volume();
    let rho = &state.rho.values.values;
    let u = state.velocity(sp);
    let phi = state.phase(sp);

    let kinetic = 0.5
        * dv
        * (0..layout.len())
            .map(|i| rho[i] * u.comps.iter().map(|c| c.values[i].powi(2)).sum::<f64>())
            .sum::<f64>();
    let interfacial = 0.5 * weighted_norm_sq(model, &state.b, |k2| k2);
    let (potential, potential_prime) = if params.physics.potential {
        let (mut e, mut ep) = (0.0, 0.0);
        for (s, r) in phi.values.iter().zip(rho) {
            e += r * landau(*s);
            ep += r * landau_prime(*s);
        }
        (e * dv, ep * dv)
    } else {
        (0.0, 0.0)
    };
    let viscous = if params.physics.stress {
        let du = sp.sym_gradient(&state.a);
        dissipation_density(&du, &phi, params.p, &params.viscosity).sum() * dv
    } else {
        0.0
    };
    let chemical = weighted_norm_sq(model, &state.c, |k2| k2);
    EnergyLedger {
        t: state.t,
        kinetic,
        interfacial,
        potential,
        potential_prime,
        viscous,
        chemical,
    }
}

/// `E(curr) − E(prev) + ∫D`, with the dissipation integral taken by the
/// trapezoid rule over the two endpoint ledgers.
pub fn energy_defect(prev: &EnergyLedger, curr: &EnergyLedger) -> f64 {
    let dt = curr.t - prev.t;
    curr.total() - prev.total() + 0.5 * dt * (prev.dissipation() + curr.dissipation())
}

/// Reference values taken from the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub mass: f64,
    pub rho_phi: f64,
    /// Normalization of the `∫ρφ` drift: `∫ρ₀ · max(1, ‖φ₀‖∞)`.
    pub rho_phi_scale: f64,
    pub rho_bounds: (f64, f64),
}

impl Baseline {
    pub fn of(model: &Model, state: &SimState) -> Self {
        let phi = state.phase(model.spectral());
        let mass = state.rho.mass(model.layout());
        Self {
            mass,
            rho_phi: weighted_phase(model, &state.rho.values, &phi),
            rho_phi_scale: mass * phi.max_abs().max(1.0),
            rho_bounds: state.rho.initial_bounds(),
        }
    }
}

/// `∫ρφ` on the collocation grid.
pub fn weighted_phase(model: &Model, rho: &GridField, phi: &GridField) -> f64 {
    rho.values
        .iter()
        .zip(&phi.values)
        .map(|(r, p)| r * p)
        .sum::<f64>()
        * model.layout().cell_volume()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// `max|k·â| <= div ‖a‖`
    pub div: f64,
    pub mass: f64,
    pub rho_phi: f64,
    /// Chemical-potential residual relative to `‖Δφ‖∞ + ‖ρμ‖∞`.
    pub mu: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            div: 1e-13,
            mass: 1e-6,
            rho_phi: 1e-8,
            mu: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Divergence { mode: [i64; 3], value: f64 },
    Mass { drift: f64 },
    RhoPhi { drift: f64 },
    DensityBelow { index: usize, value: f64 },
    DensityAbove { index: usize, value: f64 },
    ChemicalPotential { residual: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Divergence { mode, value } => {
                write!(f, "divergence {value:.3e} at mode {mode:?}")
            }
            Self::Mass { drift } => write!(f, "mass drift {drift:.3e}"),
            Self::RhoPhi { drift } => write!(f, "weighted phase drift {drift:.3e}"),
            Self::DensityBelow { index, value } => {
                write!(f, "density {value} below initial bound at index {index}")
            }
            Self::DensityAbove { index, value } => {
                write!(f, "density {value} above initial bound at index {index}")
            }
            Self::ChemicalPotential { residual } => {
                write!(f, "chemical potential residual {residual:.3e}")
            }
        }
    }
}

/// Residuals of one step `prev → curr`, relative where a scale exists.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantReport {
    /// `max|k·â| / ‖a‖` (absolute when `a = 0`).
    pub div_resid: f64,
    pub mass_drift: f64,
    pub rho_phi_drift: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_bounds_ok: bool,
    pub mu_resid: f64,
    pub energy_defect: f64,
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// [`state_report`] plus the energy defect of the step `prev → curr`.
pub fn invariant_report(
    model: &Model,
    baseline: &Baseline,
    prev: &SimState,
    curr: &SimState,
    tol: &Tolerances,
) -> InvariantReport {
    let mut report = state_report(model, baseline, curr, tol);
    report.energy_defect = energy_defect(&energy(model, prev), &energy(model, curr));
    report
}

/// Residuals of a single state against the baseline; `energy_defect` is 0.
pub fn state_report(model: &Model, baseline: &Baseline, curr: &SimState, tol: &Tolerances) -> InvariantReport {
    let sp = model.spectral();
    let layout = sp.layout();
    let mut violations = Vec::new();

    let (mode_idx, worst) = sp.max_divergence_mode(&curr.a);
    let a_norm = curr.a.norm();
    let div_resid = if a_norm > 0.0 { worst / a_norm } else { worst };
    if div_resid > tol.div {
        violations.push(Violation::Divergence {
            mode: layout.mode(mode_idx),
            value: div_resid,
        });
    }

    let mass_drift = (curr.rho.mass(layout) - baseline.mass).abs() / baseline.mass;
    if mass_drift > tol.mass {
        violations.push(Violation::Mass { drift: mass_drift });
    }

    let phi = curr.phase(sp);
    let rho_phi_drift =
        (weighted_phase(model, &curr.rho.values, &phi) - baseline.rho_phi).abs() / baseline.rho_phi_scale;
    if rho_phi_drift > tol.rho_phi {
        violations.push(Violation::RhoPhi {
            drift: rho_phi_drift,
        });
    }

    let (lo, hi) = baseline.rho_bounds;
    let rho = &curr.rho.values.values;
    let (rho_min, rho_max) = curr.rho.bounds();
    if let Some((index, &value)) = rho.iter().enumerate().find(|(_, v)| **v < lo) {
        violations.push(Violation::DensityBelow { index, value });
    }
    if let Some((index, &value)) = rho.iter().enumerate().find(|(_, v)| **v > hi) {
        violations.push(Violation::DensityAbove { index, value });
    }
    let rho_bounds_ok = rho_min >= lo && rho_max <= hi;

    let (r, scale) = model.chemical_potential_residual(&curr.b, &curr.c, &curr.rho.values);
    let mu_resid = if scale > 0.0 { r / scale } else { r };
    if mu_resid > tol.mu {
        violations.push(Violation::ChemicalPotential { residual: mu_resid });
    }

    InvariantReport {
        div_resid,
        mass_drift,
        rho_phi_drift,
        rho_min,
        rho_max,
        rho_bounds_ok,
        mu_resid,
        energy_defect: 0.0,
        violations,
    }
}

/// Instantaneous norms bounded uniformly by the a-priori estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormTracks {
    /// `‖√ρ u‖₂`
    pub sqrt_rho_u: f64,
    /// `‖∇u‖_p`
    pub grad_u_p: f64,
    /// `‖∇μ‖₂`
    pub grad_mu: f64,
    /// `‖φ‖_{H²}`
    pub phi_h2: f64,
    /// `‖√ρ μ‖₂`
    pub sqrt_rho_mu: f64,
    /// `(∫ν(φ)(1+|𝔻u|²)^{(p−2)/2}|𝔻u|²)^{1/2}`
    pub stress_dissipation: f64,
}

impl NormTracks {
    pub const NAMES: [&'static str; 6] = [
        "sqrt_rho_u_l2",
        "grad_u_lp",
        "grad_mu_l2",
        "phi_h2",
        "sqrt_rho_mu_l2",
        "stress_dissipation",
    ];

    pub fn values(&self) -> [f64; 6] {
        [
            self.sqrt_rho_u,
            self.grad_u_p,
            self.grad_mu,
            self.phi_h2,
            self.sqrt_rho_mu,
            self.stress_dissipation,
        ]
    }

    pub fn named(&self) -> Vec<(&'static str, f64)> {
        Self::NAMES.iter().copied().zip(self.values()).collect()
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &Self) -> Self {
        Self {
            sqrt_rho_u: self.sqrt_rho_u.max(other.sqrt_rho_u),
            grad_u_p: self.grad_u_p.max(other.grad_u_p),
            grad_mu: self.grad_mu.max(other.grad_mu),
            phi_h2: self.phi_h2.max(other.phi_h2),
            sqrt_rho_mu: self.sqrt_rho_mu.max(other.sqrt_rho_mu),
            stress_dissipation: self.stress_dissipation.max(other.stress_dissipation),
        }
    }
}

pub fn norm_tracks(model: &Model, state: &SimState) -> NormTracks {
    let sp = model.spectral();
    let layout = sp.layout();
    let dv = layout.cell_volume();
    let p = model.params().p.value();
    let rho = &state.rho.values.values;
    let mu = state.chemical_potential(sp);
    let grad = sp.velocity_gradient(&state.a);
    let ledger = energy(model, state);

    let grad_u_p = ((0..layout.len())
        .map(|i| grad.frobenius_sq_at(i).powf(0.5 * p))
        .sum::<f64>()
        * dv)
        .powf(1.0 / p);
    let sqrt_rho_mu = ((0..layout.len()).map(|i| rho[i] * mu.values[i].powi(2)).sum::<f64>() * dv).sqrt();
    NormTracks {
        sqrt_rho_u: (2.0 * ledger.kinetic).sqrt(),
        grad_u_p,
        grad_mu: ledger.chemical.sqrt(),
        phi_h2: weighted_norm_sq(model, &state.b, |k2| 1.0 + k2 + k2 * k2).sqrt(),
        sqrt_rho_mu,
        stress_dissipation: ledger.viscous.sqrt(),
    }
}
