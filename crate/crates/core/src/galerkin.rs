//! Discrete operators of the semi-Galerkin system.
//!
//! With `w` ranging over the retained modes (solenoidal vector modes for the
//! velocity, scalar modes for `φ` and `μ`), the system solved is
//!
//! ```text
//! M₁(ρ) a' = L₁(a) + L₂(b) c − F₁(b)
//! M₂(ρ) b' = L₃(a, b) − L₄ c
//! M₂(ρ) c  = L₄ b + F₂(b)
//! ```
//!
//! with `(M₁)_{lj} = ∫ρ w_j·w_l`, `(L₄)_{lj} = ∫∇w_j·∇w_l = |k|²δ_{lj}`,
//! `F₁ = (ρ∇Ψ(φ), w)`, `F₂ = (ρΨ'(φ), w)`, `L₂c = (ρμ∇φ, w)`,
//! `L₃a = −(ρu·∇φ, w)` and `L₁` the convection and stress pairings. Every
//! pairing is a collocation product followed by truncation to the retained
//! band; with `n_grid > 3 m_cut` this is exact for products of two
//! band-limited factors. Mass matrices are applied matrix-free and inverted by
//! conjugate gradients.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::constitutive::{landau_prime, stress_tensor};
use crate::density::DensityField;
use crate::error::{LayoutError, SolverError};
use crate::field::{GridField, Spectrum, TensorGrid, VectorGrid, VectorSpectrum};
use crate::layout::SpectralLayout;
use crate::params::Params;
use crate::spectral::Spectral;
use crate::state::SimState;

/// Body forces added to the right-hand sides, for manufactured solutions.
pub trait Forcing: Send + Sync {
    fn momentum(&self, _t: f64, _x: [f64; 3], _rho: f64) -> [f64; 3] {
        [0.0; 3]
    }

    fn phase(&self, _t: f64, _x: [f64; 3], _rho: f64) -> f64 {
        0.0
    }
}

/// Time derivatives of the velocity and phase coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub a: VectorSpectrum,
    pub b: Spectrum,
}

/// Recovered pressure and the gradient field it balances.
#[derive(Debug, Clone, PartialEq)]
pub struct Pressure {
    pub p: Spectrum,
    /// `G = F − ρ∂ₜu`, the non-inertial momentum forcing; `∇P = G` in the
    /// continuum.
    pub balance: VectorSpectrum,
}

/// Vectors the conjugate-gradient solver can work on.
pub(crate) trait CgVector: Clone {
    fn dot(&self, other: &Self) -> f64;
    fn axpy(&mut self, alpha: f64, other: &Self);
    fn scale(&mut self, alpha: f64);
}

impl CgVector for Spectrum {
    fn dot(&self, other: &Self) -> f64 {
        Spectrum::dot(self, other)
    }
    fn axpy(&mut self, alpha: f64, other: &Self) {
        Spectrum::axpy(self, alpha, other)
    }
    fn scale(&mut self, alpha: f64) {
        Spectrum::scale(self, alpha)
    }
}

impl CgVector for VectorSpectrum {
    fn dot(&self, other: &Self) -> f64 {
        VectorSpectrum::dot(self, other)
    }
    fn axpy(&mut self, alpha: f64, other: &Self) {
        VectorSpectrum::axpy(self, alpha, other)
    }
    fn scale(&mut self, alpha: f64) {
        VectorSpectrum::scale(self, alpha)
    }
}

/// Preconditioned conjugate gradients with the scalar preconditioner
/// `1/scale`. Stops at `‖r‖ <= tol ‖rhs‖`.
pub(crate) fn conjugate_gradient<V: CgVector>(
    apply: impl Fn(&V) -> V,
    rhs: &V,
    guess: V,
    scale: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(V, usize), SolverError> {
    let rhs_norm = rhs.dot(rhs).sqrt();
    let mut x = guess;
    if rhs_norm == 0.0 {
        x.scale(0.0);
        return Ok((x, 0));
    }
    let mut r = rhs.clone();
    r.axpy(-1.0, &apply(&x));
    let target = tol * rhs_norm;
    let mut rr = r.dot(&r);
    if rr.sqrt() <= target {
        return Ok((x, 0));
    }
    let inv = 1.0 / scale;
    let mut z = r.clone();
    z.scale(inv);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(SolverError::NotConverged {
                iterations: it,
                residual: rr.sqrt() / rhs_norm,
            });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        rr = r.dot(&r);
        if rr.sqrt() <= target {
            return Ok((x, it));
        }
        z = r.clone();
        z.scale(inv);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.scale(beta);
        p.axpy(1.0, &z);
    }
    Err(SolverError::NotConverged {
        iterations: max_iter,
        residual: rr.sqrt() / rhs_norm,
    })
}

/// The density-weighted Gram operator on the retained band.
#[derive(Debug, Clone, Copy)]
pub struct MassOperator<'a> {
    spectral: &'a Spectral,
    rho: &'a GridField,
    mean: f64,
    tol: f64,
    max_iter: usize,
}

impl<'a> MassOperator<'a> {
    /// Fails if `ρ` is not strictly positive everywhere.
    pub fn new(
        spectral: &'a Spectral,
        rho: &'a GridField,
        tol: f64,
        max_iter: usize,
    ) -> Result<Self, SolverError> {
        if let Some((index, &value)) = rho
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(SolverError::NonPositiveDensity { index, value });
        }
        let mean = rho.sum() / rho.len() as f64;
        Ok(Self {
            spectral,
            rho,
            mean,
            tol,
            max_iter,
        })
    }

    /// `v ↦ P_m(ρ v)` on scalar coefficients (the action of `M₂`).
    pub fn apply_scalar(&self, v: &Spectrum) -> Spectrum {
        let sp = self.spectral;
        let mut grid = sp.inverse(v).expect("spectrum sized by layout");
        multiply(&mut grid, self.rho);
        let mut out = sp.forward(&grid).expect("field sized by layout");
        sp.dealias_in_place(&mut out);
        out
    }

    /// `v ↦ Leray P_m(ρ v)` on vector coefficients (the action of `M₁`).
    pub fn apply_vector(&self, v: &VectorSpectrum) -> VectorSpectrum {
        let sp = self.spectral;
        let mut grid = sp.inverse_vector(v).expect("spectrum sized by layout");
        for c in &mut grid.comps {
            multiply(c, self.rho);
        }
        let mut out = sp.forward_vector(&grid).expect("field sized by layout");
        sp.dealias_vector(&mut out);
        sp.leray_in_place(&mut out);
        out
    }

    /// Solves `M₂ x = P_m rhs`.
    pub fn solve_scalar(
        &self,
        rhs: &Spectrum,
        guess: Option<&Spectrum>,
    ) -> Result<Spectrum, SolverError> {
        let mut projected = self.spectral.dealias(rhs);
        self.spectral.symmetrize_in_place(&mut projected);
        let rhs = &projected;
        let x0 = match guess {
            Some(g) => g.clone(),
            None => {
                let mut g = rhs.clone();
                g.scale(1.0 / self.mean);
                g
            }
        };
        conjugate_gradient(
            |v| self.apply_scalar(v),
            rhs,
            x0,
            self.mean,
            self.tol,
            self.max_iter,
        )
        .map(|(x, _)| x)
    }

    /// Solves `M₁ x = Leray P_m rhs` on the solenoidal band.
    pub fn solve_vector(
        &self,
        rhs: &VectorSpectrum,
        guess: Option<&VectorSpectrum>,
    ) -> Result<VectorSpectrum, SolverError> {
        let mut projected = rhs.clone();
        self.spectral.dealias_vector(&mut projected);
        self.spectral.leray_in_place(&mut projected);
        for c in &mut projected.comps {
            self.spectral.symmetrize_in_place(c);
        }
        let rhs = &projected;
        let x0 = match guess {
            Some(g) => g.clone(),
            None => {
                let mut g = rhs.clone();
                g.scale(1.0 / self.mean);
                g
            }
        };
        conjugate_gradient(
            |v| self.apply_vector(v),
            rhs,
            x0,
            self.mean,
            self.tol,
            self.max_iter,
        )
        .map(|(x, _)| x)
    }
}

fn multiply(f: &mut GridField, rho: &GridField) {
    f.values
        .par_iter_mut()
        .zip(&rho.values)
        .for_each(|(v, r)| *v *= r);
}

/// Grid quantities shared by the right-hand sides of one state.
struct StageFields {
    u: VectorGrid,
    grad_u: TensorGrid,
    phi: GridField,
    grad_phi: VectorGrid,
    mu: GridField,
}

/// The discretized system: transform engine, parameters and optional forcing.
#[derive(Clone)]
pub struct Model {
    spectral: Spectral,
    params: Params,
    forcing: Option<Arc<dyn Forcing>>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("spectral", &self.spectral)
            .field("params", &self.params)
            .field("forced", &self.forcing.is_some())
            .finish()
    }
}

impl Model {
    pub fn new(spectral: Spectral, params: Params) -> Self {
        Self {
            spectral,
            params,
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, forcing: Arc<dyn Forcing>) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn layout(&self) -> &SpectralLayout {
        self.spectral.layout()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn mass<'a>(&'a self, rho: &'a GridField) -> Result<MassOperator<'a>, SolverError> {
        MassOperator::new(&self.spectral, rho, self.params.cg_tol, self.params.cg_max_iter)
    }

    /// Projects grid velocity and phase onto the retained band and solves the
    /// matching chemical potential.
    pub fn initial_state(
        &self,
        rho: DensityField,
        u: &VectorGrid,
        phi: &GridField,
        t: f64,
    ) -> Result<SimState, InitError> {
        let sp = &self.spectral;
        let mut a = sp.forward_vector(u)?;
        sp.dealias_vector(&mut a);
        sp.leray_in_place(&mut a);
        let mut b = sp.forward(phi)?;
        sp.dealias_in_place(&mut b);
        let c = self.chemical_potential_solve(&b, &rho.values, None)?;
        Ok(SimState { rho, a, b, c, t })
    }

    /// `F₂ = P_m(ρΨ'(φ))` from the phase samples.
    pub fn potential_load(&self, phi: &GridField, rho: &GridField) -> Spectrum {
        let g = GridField {
            values: phi
                .values
                .par_iter()
                .zip(&rho.values)
                .map(|(&s, &r)| r * landau_prime(s))
                .collect(),
        };
        let mut out = self.spectral.forward(&g).expect("field sized by layout");
        self.spectral.dealias_in_place(&mut out);
        out
    }

    /// `L₄ v = |k|² v`.
    pub fn apply_l4(&self, v: &Spectrum) -> Spectrum {
        let layout = self.layout();
        Spectrum {
            coeffs: v
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c * layout.k_squared(i))
                .collect(),
        }
    }

    /// Solves `M₂ c = L₄ b + F₂(b)`, the weak form of `ρμ = −Δφ + ρΨ'(φ)`.
    pub fn chemical_potential_solve(
        &self,
        b: &Spectrum,
        rho: &GridField,
        guess: Option<&Spectrum>,
    ) -> Result<Spectrum, SolverError> {
        let mut rhs = self.apply_l4(b);
        if self.params.physics.potential {
            let phi = self.spectral.inverse(b).expect("spectrum sized by layout");
            rhs.axpy(1.0, &self.potential_load(&phi, rho));
        }
        self.mass(rho)?.solve_scalar(&rhs, guess)
    }

    /// Grid residual of `ρμ + Δφ − ρΨ'(φ)` after truncation to the retained
    /// band, and the scale `‖Δφ‖∞ + ‖ρμ‖∞` it is measured against.
    pub fn chemical_potential_residual(
        &self,
        b: &Spectrum,
        c: &Spectrum,
        rho: &GridField,
    ) -> (f64, f64) {
        let sp = &self.spectral;
        let (phi, mu) = sp.inverse_pair(b, c);
        let lap = sp.inverse(&sp.laplacian(b)).expect("spectrum sized by layout");
        let use_pot = self.params.physics.potential;
        let resid = GridField {
            values: (0..phi.len())
                .map(|i| {
                    let pot = if use_pot { landau_prime(phi.values[i]) } else { 0.0 };
                    rho.values[i] * (mu.values[i] - pot) + lap.values[i]
                })
                .collect(),
        };
        let mut hat = sp.forward(&resid).expect("field sized by layout");
        sp.dealias_in_place(&mut hat);
        let r = sp.inverse(&hat).expect("spectrum sized by layout").max_abs();
        let rho_mu = mu
            .values
            .iter()
            .zip(&rho.values)
            .fold(0.0f64, |m, (a, b)| m.max((a * b).abs()));
        (r, lap.max_abs() + rho_mu)
    }

    /// Collocation chemical potential `μ = −Δφ/ρ + Ψ'(φ)`.
    pub fn pointwise_chemical_potential(&self, b: &Spectrum, rho: &GridField) -> GridField {
        let sp = &self.spectral;
        let (phi, lap) = sp.inverse_pair(b, &sp.laplacian(b));
        let use_pot = self.params.physics.potential;
        GridField {
            values: (0..phi.len())
                .map(|i| {
                    let pot = if use_pot { landau_prime(phi.values[i]) } else { 0.0 };
                    -lap.values[i] / rho.values[i] + pot
                })
                .collect(),
        }
    }

    /// `Leray P_m(ρμ∇φ − ρ∇Ψ(φ))` with `μ` given by its coefficients.
    pub fn capillary_force(&self, b: &Spectrum, c: &Spectrum, rho: &GridField) -> VectorSpectrum {
        let mu = self.spectral.inverse(c).expect("spectrum sized by layout");
        self.capillary_force_from_grid(b, &mu, rho)
    }

    /// `Leray P_m(ρμ∇φ − ρ∇Ψ(φ))` with `μ` given on the grid.
    pub fn capillary_force_from_grid(
        &self,
        b: &Spectrum,
        mu: &GridField,
        rho: &GridField,
    ) -> VectorSpectrum {
        let sp = &self.spectral;
        let phi = sp.inverse(b).expect("spectrum sized by layout");
        let grad_phi = sp.gradient_grid(b);
        let weight = self.capillary_weight(&phi, mu, rho);
        let force = VectorGrid {
            comps: grad_phi
                .comps
                .iter()
                .map(|g| GridField {
                    values: g.values.iter().zip(&weight).map(|(a, w)| a * w).collect(),
                })
                .collect(),
        };
        let mut hat = sp.forward_vector(&force).expect("field sized by layout");
        sp.dealias_vector(&mut hat);
        sp.leray_in_place(&mut hat);
        hat
    }

    /// `ρ(μ − Ψ'(φ))`, the coefficient of `∇φ` in the capillary force.
    fn capillary_weight(&self, phi: &GridField, mu: &GridField, rho: &GridField) -> Vec<f64> {
        let use_pot = self.params.physics.potential;
        (0..phi.len())
            .map(|i| {
                let pot = if use_pot { landau_prime(phi.values[i]) } else { 0.0 };
                rho.values[i] * (mu.values[i] - pot)
            })
            .collect()
    }

    /// `Leray P_m(−div(∇φ ⊗ ∇φ))`.
    pub fn capillary_force_divergence_form(&self, b: &Spectrum) -> VectorSpectrum {
        let sp = &self.spectral;
        let g = sp.gradient_grid(b);
        let d = sp.dim();
        let mut t = TensorGrid::zeros(d, sp.len());
        for i in 0..d {
            for j in 0..d {
                t.get_mut(i, j).values = g.comps[i]
                    .values
                    .iter()
                    .zip(&g.comps[j].values)
                    .map(|(x, y)| -x * y)
                    .collect();
            }
        }
        let mut out = sp.tensor_divergence(&t);
        sp.leray_in_place(&mut out);
        out
    }

    /// `L₂ c = Leray P_m(ρμ∇φ)` for fixed `φ`.
    pub fn apply_l2(&self, b: &Spectrum, c: &Spectrum, rho: &GridField) -> VectorSpectrum {
        let sp = &self.spectral;
        let mu = sp.inverse(c).expect("spectrum sized by layout");
        let grad_phi = sp.gradient_grid(b);
        let force = VectorGrid {
            comps: grad_phi
                .comps
                .iter()
                .map(|g| GridField {
                    values: (0..g.len())
                        .map(|i| rho.values[i] * mu.values[i] * g.values[i])
                        .collect(),
                })
                .collect(),
        };
        let mut hat = sp.forward_vector(&force).expect("field sized by layout");
        sp.dealias_vector(&mut hat);
        sp.leray_in_place(&mut hat);
        hat
    }

    /// `L₃ a = −P_m(ρu·∇φ)` for fixed `φ`.
    pub fn apply_l3(&self, b: &Spectrum, a: &VectorSpectrum, rho: &GridField) -> Spectrum {
        let sp = &self.spectral;
        let u = sp.inverse_vector(a).expect("spectrum sized by layout");
        let grad_phi = sp.gradient_grid(b);
        let mut adv = Spectral::advective_derivative(&u, &grad_phi);
        for (v, r) in adv.values.iter_mut().zip(&rho.values) {
            *v *= -r;
        }
        let mut hat = sp.forward(&adv).expect("field sized by layout");
        sp.dealias_in_place(&mut hat);
        hat
    }

    /// `F₁ = Leray P_m(ρΨ'(φ)∇φ)`, the potential part of the capillary force.
    pub fn potential_force(&self, b: &Spectrum, rho: &GridField) -> VectorSpectrum {
        let sp = &self.spectral;
        let phi = sp.inverse(b).expect("spectrum sized by layout");
        let grad_phi = sp.gradient_grid(b);
        let force = VectorGrid {
            comps: grad_phi
                .comps
                .iter()
                .map(|g| GridField {
                    values: (0..g.len())
                        .map(|i| rho.values[i] * landau_prime(phi.values[i]) * g.values[i])
                        .collect(),
                })
                .collect(),
        };
        let mut hat = sp.forward_vector(&force).expect("field sized by layout");
        sp.dealias_vector(&mut hat);
        sp.leray_in_place(&mut hat);
        hat
    }

    /// `Leray P_m div T(𝔻u)`, the stress part of `L₁`.
    pub fn stress_term(&self, a: &VectorSpectrum, b: &Spectrum) -> VectorSpectrum {
        let sp = &self.spectral;
        let du = sp.sym_gradient(a);
        let phi = sp.inverse(b).expect("spectrum sized by layout");
        let t = stress_tensor(&du, &phi, self.params.p, &self.params.viscosity);
        let mut out = sp.tensor_divergence(&t);
        sp.leray_in_place(&mut out);
        out
    }

    /// `−Leray P_m(ρ(u·∇)u)`, the convection part of `L₁`.
    pub fn convection_term(&self, a: &VectorSpectrum, rho: &GridField) -> VectorSpectrum {
        let sp = &self.spectral;
        let u = sp.inverse_vector(a).expect("spectrum sized by layout");
        let g = sp.velocity_gradient(a);
        let d = sp.dim();
        let force = VectorGrid {
            comps: (0..d)
                .map(|i| GridField {
                    values: (0..sp.len())
                        .map(|p| {
                            let conv: f64 =
                                (0..d).map(|j| u.comps[j].values[p] * g.get(i, j).values[p]).sum();
                            -rho.values[p] * conv
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut hat = sp.forward_vector(&force).expect("field sized by layout");
        sp.dealias_vector(&mut hat);
        sp.leray_in_place(&mut hat);
        hat
    }

    /// `|Ω| ⟨stress_term(a), a⟩`, which equals `−∫T(𝔻u):𝔻u`.
    pub fn stress_pairing(&self, a: &VectorSpectrum, b: &Spectrum) -> f64 {
        self.layout().volume() * self.stress_term(a, b).dot(a)
    }

    fn stage_fields(&self, state: &SimState) -> StageFields {
        let sp = &self.spectral;
        let u = state.velocity(sp);
        let grad_u = sp.velocity_gradient(&state.a);
        let (phi, mu) = sp.inverse_pair(&state.b, &state.c);
        let grad_phi = sp.gradient_grid(&state.b);
        StageFields {
            u,
            grad_u,
            phi,
            grad_phi,
            mu,
        }
    }

    /// Unprojected momentum and phase loads `P_m f_u + P_m div T` and `P_m f_φ`.
    fn loads(&self, state: &SimState, f: &StageFields) -> (VectorSpectrum, Spectrum) {
        let sp = &self.spectral;
        let layout = sp.layout();
        let d = sp.dim();
        let rho = &state.rho.values;
        let physics = self.params.physics;
        let weight = if physics.capillary {
            self.capillary_weight(&f.phi, &f.mu, rho)
        } else if physics.potential {
            // Only the potential part `−ρΨ'(φ)∇φ` remains.
            let zero = GridField::zeros(rho.len());
            self.capillary_weight(&f.phi, &zero, rho)
        } else {
            vec![0.0; rho.len()]
        };
        let forcing = self.forcing.as_deref();
        let t = state.t;
        let n = layout.len();
        let rows: Vec<([f64; 3], f64)> = (0..n)
            .into_par_iter()
            .map(|p| {
                let r = rho.values[p];
                let mut m = [0.0; 3];
                let mut adv_phi = 0.0;
                for i in 0..d {
                    let mut conv = 0.0;
                    if physics.convection {
                        for j in 0..d {
                            conv += f.u.comps[j].values[p] * f.grad_u.get(i, j).values[p];
                        }
                        adv_phi += f.u.comps[i].values[p] * f.grad_phi.comps[i].values[p];
                    }
                    m[i] = -r * conv + weight[p] * f.grad_phi.comps[i].values[p];
                }
                let mut ph = -r * adv_phi;
                if let Some(fo) = forcing {
                    let x = layout.position(p);
                    let fm = fo.momentum(t, x, r);
                    for i in 0..d {
                        m[i] += fm[i];
                    }
                    ph += fo.phase(t, x, r);
                }
                (m, ph)
            })
            .collect();
        let mut grids: Vec<GridField> = (0..=d).map(|_| GridField::zeros(n)).collect();
        for (p, (m, ph)) in rows.iter().enumerate() {
            for i in 0..d {
                grids[i].values[p] = m[i];
            }
            grids[d].values[p] = *ph;
        }
        let refs: Vec<&GridField> = grids.iter().collect();
        let mut hats = sp.forward_many(&refs);
        for h in &mut hats {
            sp.dealias_in_place(h);
        }
        let phase = hats.pop().expect("phase load present");
        let mut momentum = VectorSpectrum { comps: hats };
        if physics.stress {
            let du = crate::spectral::symmetric_part(&f.grad_u);
            let tensor = stress_tensor(&du, &f.phi, self.params.p, &self.params.viscosity);
            momentum.axpy(1.0, &sp.tensor_divergence(&tensor));
        }
        (momentum, phase)
    }

    /// `a'` and `b'` at `state`, using the stored `c`.
    pub fn rates(&self, state: &SimState, guess: Option<&Rates>) -> Result<Rates, SolverError> {
        let f = self.stage_fields(state);
        let (mut momentum, mut phase) = self.loads(state, &f);
        self.spectral.leray_in_place(&mut momentum);
        phase.axpy(-1.0, &self.apply_l4(&state.c));
        let mass = self.mass(&state.rho.values)?;
        let a = mass.solve_vector(&momentum, guess.map(|g| &g.a))?;
        let b = mass.solve_scalar(&phase, guess.map(|g| &g.b))?;
        Ok(Rates { a, b })
    }

    pub fn momentum_rhs(&self, state: &SimState) -> Result<VectorSpectrum, SolverError> {
        let f = self.stage_fields(state);
        let (mut momentum, _) = self.loads(state, &f);
        self.spectral.leray_in_place(&mut momentum);
        self.mass(&state.rho.values)?.solve_vector(&momentum, None)
    }

    pub fn phase_rhs(&self, state: &SimState) -> Result<Spectrum, SolverError> {
        let f = self.stage_fields(state);
        let (_, mut phase) = self.loads(state, &f);
        phase.axpy(-1.0, &self.apply_l4(&state.c));
        self.mass(&state.rho.values)?.solve_scalar(&phase, None)
    }

    /// Pressure from the gradient part of `G = F − ρ∂ₜu`:
    /// `P̂ = −i k·Ĝ/|k|²`, `P̂(0) = 0`.
    pub fn recover_pressure(&self, state: &SimState) -> Result<Pressure, SolverError> {
        let sp = &self.spectral;
        let f = self.stage_fields(state);
        let (loads, _) = self.loads(state, &f);
        let mut projected = loads.clone();
        sp.leray_in_place(&mut projected);
        let mass = self.mass(&state.rho.values)?;
        let a_dot = mass.solve_vector(&projected, None)?;
        let mut inertia = sp.inverse_vector(&a_dot).expect("spectrum sized by layout");
        for c in &mut inertia.comps {
            multiply(c, &state.rho.values);
        }
        let mut inertia_hat = sp.forward_vector(&inertia).expect("field sized by layout");
        sp.dealias_vector(&mut inertia_hat);
        let mut balance = loads;
        balance.axpy(-1.0, &inertia_hat);
        let layout = sp.layout();
        let mut p = Spectrum::zeros(sp.len());
        for (i, out) in p.coeffs.iter_mut().enumerate() {
            let k2 = layout.k_squared(i);
            if k2 == 0.0 {
                continue;
            }
            let k = layout.wavevector(i);
            let mut kg = Complex64::new(0.0, 0.0);
            for (axis, comp) in balance.comps.iter().enumerate() {
                kg += comp.coeffs[i] * k[axis];
            }
            *out = kg * Complex64::new(0.0, -1.0 / k2);
        }
        Ok(Pressure { p, balance })
    }

    /// `(‖G − ∇P − Leray G‖, ‖G‖)` for a recovered pressure.
    pub fn helmholtz_residual(&self, pressure: &Pressure) -> (f64, f64) {
        let sp = &self.spectral;
        let mut r = pressure.balance.clone();
        r.axpy(-1.0, &sp.gradient(&pressure.p));
        r.axpy(-1.0, &sp.leray_project(&pressure.balance));
        (r.norm(), pressure.balance.norm())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InitError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::landau_prime;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, m: usize) -> Model {
        let sp = Spectral::new(SpectralLayout::new(2, n, m).unwrap());
        Model::new(sp, Params::new(2.0, 1.0, 1.0, 1.0, 0.05, 2.0).unwrap())
    }

    /// Smooth random band-limited field with coefficients decaying in `|k|`.
    fn band(sp: &Spectral, rng: &mut ChaCha8Rng, amp: f64) -> Spectrum {
        let noise = GridField {
            values: (0..sp.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let mut hat = sp.forward(&noise).unwrap();
        sp.dealias_in_place(&mut hat);
        for (i, c) in hat.coeffs.iter_mut().enumerate() {
            *c *= amp * (-0.15 * sp.layout().k_squared(i)).exp();
        }
        hat
    }

    fn density(sp: &Spectral, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> GridField {
        let raw = sp.inverse(&band(sp, rng, 1.0)).unwrap();
        let (a, b) = (raw.min(), raw.max());
        raw.map(|v| lo + (hi - lo) * (v - a) / (b - a))
    }

    fn solenoidal(sp: &Spectral, rng: &mut ChaCha8Rng, amp: f64) -> VectorSpectrum {
        let mut v = VectorSpectrum {
            comps: (0..sp.dim()).map(|_| band(sp, rng, amp)).collect(),
        };
        sp.leray_in_place(&mut v);
        v
    }

    fn state(m: &Model, rng: &mut ChaCha8Rng) -> SimState {
        let sp = m.spectral();
        let rho = DensityField::new(density(sp, rng, 0.5, 1.5)).unwrap();
        let a = solenoidal(sp, rng, 3.0);
        let b = band(sp, rng, 3.0);
        let c = m.chemical_potential_solve(&b, &rho.values, None).unwrap();
        SimState { rho, a, b, c, t: 0.0 }
    }

    fn rel_diff(x: &Spectrum, y: &Spectrum) -> f64 {
        let mut d = x.clone();
        d.axpy(-1.0, y);
        d.norm() / y.norm().max(1e-300)
    }

    fn rel_diff_vec(x: &VectorSpectrum, y: &VectorSpectrum) -> f64 {
        let mut d = x.clone();
        d.axpy(-1.0, y);
        d.norm() / y.norm().max(1e-300)
    }

    #[test]
    fn constant_density_mass_is_scaling() {
        let m = model(16, 5);
        let sp = m.spectral();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = band(sp, &mut rng, 1.0);
        let w = solenoidal(sp, &mut rng, 1.0);
        for rho in [1.0, 2.0] {
            let g = GridField::constant(sp.len(), rho);
            let mass = m.mass(&g).unwrap();
            let mut expected = v.clone();
            expected.scale(rho);
            assert!(rel_diff(&mass.apply_scalar(&v), &expected) < 1e-14);
            let mut half = v.clone();
            half.scale(1.0 / rho);
            assert!(rel_diff(&mass.solve_scalar(&v, None).unwrap(), &half) < 1e-12);
            let mut ew = w.clone();
            ew.scale(rho);
            assert!(rel_diff_vec(&mass.apply_vector(&w), &ew) < 1e-14);
        }
    }

    #[test]
    fn mass_solve_inverts_apply() {
        let m = model(32, 10);
        let sp = m.spectral();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = density(sp, &mut rng, 0.5, 1.5);
        let mass = m.mass(&rho).unwrap();
        let v = band(sp, &mut rng, 1.0);
        let back = mass.solve_scalar(&mass.apply_scalar(&v), None).unwrap();
        assert!(rel_diff(&back, &v) < 1e-10);
        let w = solenoidal(sp, &mut rng, 1.0);
        let back = mass.solve_vector(&mass.apply_vector(&w), None).unwrap();
        assert!(rel_diff_vec(&back, &w) < 1e-10);
    }

    #[test]
    fn mass_rejects_nonpositive_density() {
        let m = model(16, 5);
        let mut rho = GridField::constant(m.layout().len(), 1.0);
        rho.values[7] = 0.0;
        assert!(matches!(
            m.mass(&rho),
            Err(SolverError::NonPositiveDensity { index: 7, .. })
        ));
    }

    #[test]
    fn mass_is_bounded_below_by_density_floor() {
        let m = model(16, 5);
        let sp = m.spectral();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let lo = 0.05;
            let rho = density(sp, &mut rng, lo, 3.0);
            let mass = m.mass(&rho).unwrap();
            let v = band(sp, &mut rng, 1.0);
            assert!(v.dot(&mass.apply_scalar(&v)) >= lo * v.dot(&v) - 1e-10);
            let w = solenoidal(sp, &mut rng, 1.0);
            assert!(w.dot(&mass.apply_vector(&w)) >= lo * w.dot(&w) - 1e-10);
        }
    }

    #[test]
    fn chemical_potential_of_pure_and_neutral_phases() {
        let m = model(16, 5);
        let sp = m.spectral();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = density(sp, &mut rng, 0.5, 1.5);
        let one = sp.forward(&GridField::constant(sp.len(), 1.0)).unwrap();
        assert!(m.chemical_potential_solve(&one, &rho, None).unwrap().max_abs() < 1e-15);
        let zero = Spectrum::zeros(sp.len());
        let unit = GridField::constant(sp.len(), 1.0);
        assert_eq!(m.chemical_potential_solve(&zero, &unit, None).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn chemical_potential_of_small_cosine() {
        // μ = -Δφ + φ³ - φ with φ = ε cos x₁: the linear part cancels at |k| = 1
        // and cos³ = (3 cos x + cos 3x)/4 leaves 3ε³/8 at k = (1, 0).
        let m = model(32, 10);
        let sp = m.spectral();
        let eps = 1e-3;
        let b = sp.forward(&GridField::from_fn(sp.layout(), |x| eps * x[0].cos())).unwrap();
        let rho = GridField::constant(sp.len(), 1.0);
        let c = m.chemical_potential_solve(&b, &rho, None).unwrap();
        let layout = sp.layout();
        let k1 = c.coeffs[layout.flat_of_mode(&[1, 0])];
        let k3 = c.coeffs[layout.flat_of_mode(&[3, 0])];
        assert!((k1.re - 3.0 * eps.powi(3) / 8.0).abs() < 1e-18);
        assert!((k3.re - eps.powi(3) / 8.0).abs() < 1e-18);
        let others = c
            .coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| layout.mode(*i)[1] != 0 || layout.mode(*i)[0].abs() % 2 == 0)
            .fold(0.0f64, |m, (_, z)| m.max(z.norm()));
        assert!(others < 1e-16);
    }

    #[test]
    fn chemical_potential_residual_is_small() {
        let m = model(32, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = state(&m, &mut rng);
        let (r, scale) = m.chemical_potential_residual(&s.b, &s.c, &s.rho.values);
        assert!(r <= 1e-9 * scale, "residual {r} scale {scale}");
    }

    #[test]
    fn capillary_force_trivial_cases() {
        let m = model(32, 10);
        let sp = m.spectral();
        let rho = GridField::constant(sp.len(), 1.0);
        let flat = sp.forward(&GridField::constant(sp.len(), 0.3)).unwrap();
        let c = m.chemical_potential_solve(&flat, &rho, None).unwrap();
        assert!(m.capillary_force(&flat, &c, &rho).norm() < 1e-15);
        let wave = sp.forward(&GridField::from_fn(sp.layout(), |x| x[0].cos())).unwrap();
        let c = m.chemical_potential_solve(&wave, &rho, None).unwrap();
        assert!(m.capillary_force(&wave, &c, &rho).norm() < 1e-14);
    }

    #[test]
    fn capillary_forms_agree_under_projection() {
        let m = model(32, 10);
        let sp = m.spectral();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(10 + seed);
            let rho = density(sp, &mut rng, 0.3, 2.0);
            let b = band(sp, &mut rng, 2.0);
            let mu = m.pointwise_chemical_potential(&b, &rho);
            let lhs = m.capillary_force_from_grid(&b, &mu, &rho);
            let rhs = m.capillary_force_divergence_form(&b);
            assert!(rel_diff_vec(&lhs, &rhs) <= 1e-9);
        }
    }

    #[test]
    fn coupling_operators_are_skew() {
        let m = model(32, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = state(&m, &mut rng);
        let l2 = m.apply_l2(&s.b, &s.c, &s.rho.values).dot(&s.a);
        let l3 = m.apply_l3(&s.b, &s.a, &s.rho.values).dot(&s.c);
        assert!((l2 + l3).abs() <= 1e-10 * l2.abs().max(1.0));
    }

    #[test]
    fn stress_pairing_is_the_dissipation() {
        let mut m = model(32, 10);
        m.params_mut().p = crate::constitutive::PowerLawExponent::new(2.8).unwrap();
        m.params_mut().viscosity = crate::constitutive::ViscosityLaw::logistic(0.5, 1.5, 2.0).unwrap();
        let sp = m.spectral().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = state(&m, &mut rng);
        let du = sp.sym_gradient(&s.a);
        let phi = sp.inverse(&s.b).unwrap();
        let diss = crate::constitutive::dissipation_density(&du, &phi, m.params().p, &m.params().viscosity);
        let integral = diss.sum() * sp.layout().cell_volume();
        let pairing = m.stress_pairing(&s.a, &s.b);
        assert!((pairing + integral).abs() <= 1e-9 * integral);
    }

    #[test]
    fn rest_state_has_zero_rates() {
        let m = model(16, 5);
        let sp = m.spectral();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for level in [1.0, -1.0] {
            let rho = DensityField::new(density(sp, &mut rng, 0.2, 2.0)).unwrap();
            let s = m
                .initial_state(
                    rho,
                    &VectorGrid::zeros(2, sp.len()),
                    &GridField::constant(sp.len(), level),
                    0.0,
                )
                .unwrap();
            let r = m.rates(&s, None).unwrap();
            assert_eq!(r.a.norm(), 0.0);
            assert!(r.b.norm() < 1e-15);
        }
    }

    #[test]
    fn taylor_green_newtonian_rhs() {
        // (u·∇)u is a gradient for this flow and div(ν𝔻u) = ½νΔu = -νu.
        let m = {
            let mut m = model(32, 10);
            m.params_mut().viscosity = crate::constitutive::ViscosityLaw::constant(1.0).unwrap();
            m
        };
        let sp = m.spectral();
        let u = VectorGrid {
            comps: vec![
                GridField::from_fn(sp.layout(), |x| x[0].sin() * x[1].cos()),
                GridField::from_fn(sp.layout(), |x| -x[0].cos() * x[1].sin()),
            ],
        };
        let rho = DensityField::new(GridField::constant(sp.len(), 1.0)).unwrap();
        let s = m.initial_state(rho, &u, &GridField::constant(sp.len(), 0.2), 0.0).unwrap();
        let a_dot = m.momentum_rhs(&s).unwrap();
        for (comp, dot) in s.a.comps.iter().zip(&a_dot.comps) {
            for (x, y) in comp.coeffs.iter().zip(&dot.coeffs) {
                assert!((x + y).norm() <= 1e-9);
            }
        }
    }

    #[test]
    fn stress_is_linear_in_viscosity() {
        let mut m = model(16, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = state(&m, &mut rng);
        m.params_mut().viscosity = crate::constitutive::ViscosityLaw::constant(0.7).unwrap();
        let one = m.stress_term(&s.a, &s.b);
        m.params_mut().viscosity = crate::constitutive::ViscosityLaw::constant(1.4).unwrap();
        let mut two = m.stress_term(&s.a, &s.b);
        two.scale(0.5);
        assert!(rel_diff_vec(&two, &one) == 0.0);
    }

    #[test]
    fn constant_density_cahn_hilliard_rhs() {
        let m = model(32, 10);
        let sp = m.spectral();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = band(sp, &mut rng, 1.0);
        let rho = DensityField::new(GridField::constant(sp.len(), 1.0)).unwrap();
        let phi = sp.inverse(&b).unwrap();
        let s = m.initial_state(rho, &VectorGrid::zeros(2, sp.len()), &phi, 0.0).unwrap();
        let b_dot = m.phase_rhs(&s).unwrap();
        // Independent: μ = -Δφ + φ³ - φ on the grid, then Δμ on the band.
        let lap = sp.inverse(&sp.laplacian(&b)).unwrap();
        let mu = GridField {
            values: (0..sp.len()).map(|i| -lap.values[i] + landau_prime(phi.values[i])).collect(),
        };
        let mut mu_hat = sp.forward(&mu).unwrap();
        sp.dealias_in_place(&mut mu_hat);
        let expected = sp.laplacian(&mu_hat);
        assert!(rel_diff(&b_dot, &expected) < 1e-10);
    }

    #[test]
    fn phase_rates_conserve_weighted_phase() {
        let m = model(32, 10);
        let sp = m.spectral();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = state(&m, &mut rng);
        let b_dot = m.phase_rhs(&s).unwrap();
        let rho = &s.rho.values;
        let phi_t = sp.inverse(&b_dot).unwrap();
        let u = s.velocity(sp);
        let adv = Spectral::advective_derivative(&u, &sp.gradient_grid(&s.b));
        let w = sp.layout().cell_volume();
        let rate: f64 = (0..sp.len()).map(|i| rho.values[i] * (phi_t.values[i] + adv.values[i])).sum::<f64>() * w;
        let scale: f64 = (0..sp.len())
            .map(|i| rho.values[i] * (phi_t.values[i].abs() + adv.values[i].abs()))
            .sum::<f64>()
            * w;
        assert!(rate.abs() <= 1e-10 * scale, "rate {rate} scale {scale}");
    }

    #[test]
    fn pressure_of_rest_state_and_gradient_forcing() {
        struct Gradient;
        impl Forcing for Gradient {
            fn momentum(&self, _t: f64, x: [f64; 3], _rho: f64) -> [f64; 3] {
                // ∇g for g = sin x₁ cos 2x₂ + 0.5
                [x[0].cos() * (2.0 * x[1]).cos(), -2.0 * x[0].sin() * (2.0 * x[1]).sin(), 0.0]
            }
        }
        let m = model(32, 10);
        let sp = m.spectral().clone();
        let rho = DensityField::new(GridField::constant(sp.len(), 1.0)).unwrap();
        let s = m
            .initial_state(rho, &VectorGrid::zeros(2, sp.len()), &GridField::constant(sp.len(), 1.0), 0.0)
            .unwrap();
        assert_eq!(m.recover_pressure(&s).unwrap().p.norm(), 0.0);
        let forced = m.clone().with_forcing(Arc::new(Gradient));
        let p = sp.inverse(&forced.recover_pressure(&s).unwrap().p).unwrap();
        let g = GridField::from_fn(sp.layout(), |x| x[0].sin() * (2.0 * x[1]).cos());
        for (a, b) in p.values.iter().zip(&g.values) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn pressure_splits_the_balance() {
        let m = model(32, 10);
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(20 + seed);
            let s = state(&m, &mut rng);
            let pressure = m.recover_pressure(&s).unwrap();
            let (r, norm) = m.helmholtz_residual(&pressure);
            assert!(r <= 1e-10 * norm);
        }
    }
}
