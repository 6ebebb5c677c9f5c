//! Initial-condition recipes and random admissible states.

use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constitutive::ViscosityProfile;
use crate::density::{mollify_initial_density, DensityField};
use crate::error::DataError;
use crate::field::{GridField, Spectrum, VectorGrid, VectorSpectrum};
use crate::galerkin::{Forcing, InitError, Model};
use crate::layout::SpectralLayout;
use crate::params::Params;
use crate::spectral::Spectral;
use crate::state::SimState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Small smooth noise in `φ` around 0, fluid at rest, a dense disk in a
    /// lighter ambient.
    Spinodal,
    /// Taylor–Green vortex in a single pure phase of unit density.
    TaylorGreen,
    /// A heavy layer over a near-vacuum layer with a perturbed interface.
    StratifiedDensity,
    /// Shear flow with a body force making [`ShearManufactured`] exact.
    Manufactured,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Spinodal,
        Preset::TaylorGreen,
        Preset::StratifiedDensity,
        Preset::Manufactured,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Spinodal => "spinodal",
            Preset::TaylorGreen => "taylor-green",
            Preset::StratifiedDensity => "stratified-density",
            Preset::Manufactured => "manufactured",
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown preset `{0}` (expected spinodal, taylor-green, stratified-density or manufactured)")]
pub struct UnknownPreset(pub String);

impl FromStr for Preset {
    type Err = UnknownPreset;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PresetError {
    #[error("initial density: {0}")]
    Density(#[from] DataError),
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("the manufactured preset needs a two-dimensional layout")]
    NeedsPlane,
}

/// Grid samples of an initial condition before projection.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    /// Raw density; mollified unless [`InitialData::smooth_density`].
    pub rho: GridField,
    pub u: VectorGrid,
    pub phi: GridField,
    /// The density is already smooth and bounded below, so it is used as is.
    pub smooth_density: bool,
}

/// Amplitude of the spinodal phase noise.
pub const SPINODAL_NOISE: f64 = 0.05;
/// Peak speed of the Taylor–Green vortex.
pub const TAYLOR_GREEN_SPEED: f64 = 1.0;

/// `½(1 + tanh(s/w))`, a smooth step of width `w`.
fn step(s: f64, w: f64) -> f64 {
    0.5 * (1.0 + (s / w).tanh())
}

/// Distance from `x` to the cell centre, componentwise periodic.
fn centre_distance(layout: &SpectralLayout, x: [f64; 3]) -> f64 {
    (0..layout.dim())
        .map(|a| {
            let l = layout.extent()[a];
            let d = (x[a] - 0.5 * l).rem_euclid(l);
            d.min(l - d).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Real band-limited field with random coefficients of size
/// `exp(−|k|²/(2σ²))`, scaled to sup-norm `amp`.
pub fn random_band_field(sp: &Spectral, rng: &mut ChaCha8Rng, sigma: f64, amp: f64) -> GridField {
    let layout = sp.layout();
    let mut hat = Spectrum::zeros(sp.len());
    for &i in layout.retained() {
        let w = (-0.5 * layout.k_squared(i) / (sigma * sigma)).exp();
        hat.coeffs[i] = num_complex::Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * w;
    }
    hat.coeffs[0] = num_complex::Complex64::new(0.0, 0.0);
    let mut g = sp.inverse(&hat).expect("spectrum sized by layout");
    // The real part of the synthesis is band-limited and conjugate-symmetric.
    let peak = g.max_abs();
    if peak > 0.0 {
        g = g.map(|v| amp * v / peak);
    }
    g
}

pub fn initial_data(preset: Preset, sp: &Spectral, params: &Params, seed: u64) -> InitialData {
    let layout = sp.layout();
    let n = layout.len();
    let d = layout.dim();
    let cap = params.rho_cap;
    match preset {
        Preset::Spinodal => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let lo = 1.0f64.min(cap);
            let radius = 0.25 * layout.extent()[0];
            let rho = GridField::from_fn(layout, |x| lo + (cap - lo) * step(radius - centre_distance(layout, x), 0.4));
            InitialData {
                rho,
                u: VectorGrid::zeros(d, n),
                phi: random_band_field(sp, &mut rng, 4.0, SPINODAL_NOISE),
                smooth_density: false,
            }
        }
        Preset::TaylorGreen => {
            let mut u = VectorGrid::zeros(d, n);
            for i in 0..n {
                let x = layout.position(i);
                let z = if d == 3 { x[2].cos() } else { 1.0 };
                u.comps[0].values[i] = TAYLOR_GREEN_SPEED * x[0].sin() * x[1].cos() * z;
                u.comps[1].values[i] = -TAYLOR_GREEN_SPEED * x[0].cos() * x[1].sin() * z;
            }
            InitialData {
                rho: GridField::constant(n, 1.0f64.min(cap)),
                u,
                phi: GridField::constant(n, 1.0),
                smooth_density: false,
            }
        }
        Preset::StratifiedDensity => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bump = random_band_field(sp, &mut rng, 2.0, 0.3);
            let mut phi = GridField::zeros(n);
            let mut rho = GridField::zeros(n);
            let mut u = VectorGrid::zeros(d, n);
            for i in 0..n {
                let x = layout.position(i);
                let s = x[1].sin() + bump.values[i];
                phi.values[i] = (s / 0.6).tanh();
                rho.values[i] = cap * step(s, 0.3);
                u.comps[0].values[i] = 0.1 * x[1].sin();
            }
            InitialData {
                rho,
                u,
                phi,
                smooth_density: false,
            }
        }
        Preset::Manufactured => {
            let mut u = VectorGrid::zeros(d, n);
            let mut phi = GridField::zeros(n);
            let mut rho = GridField::zeros(n);
            for i in 0..n {
                let x = layout.position(i)[0];
                let (uu, ph) = ShearManufactured::exact(0.0, x);
                u.comps[1].values[i] = uu;
                phi.values[i] = ph;
                rho.values[i] = ShearManufactured::density(x);
            }
            InitialData {
                rho,
                u,
                phi,
                smooth_density: true,
            }
        }
    }
}

/// Model and initial state for `preset`. The manufactured preset attaches its
/// body force to the returned model.
pub fn prepare(preset: Preset, sp: Spectral, params: Params, seed: u64) -> Result<(Model, SimState), PresetError> {
    if preset == Preset::Manufactured && sp.dim() != 2 {
        return Err(PresetError::NeedsPlane);
    }
    let data = initial_data(preset, &sp, &params, seed);
    let rho = if data.smooth_density {
        DensityField::new(data.rho)?
    } else {
        mollify_initial_density(&sp, &data.rho, params.delta, params.rho_cap)?
    };
    let mut model = Model::new(sp, params);
    if preset == Preset::Manufactured {
        let forcing = ShearManufactured::for_params(model.params());
        model = model.with_forcing(Arc::new(forcing));
    }
    let state = model.initial_state(rho, &data.u, &data.phi, 0.0)?;
    Ok((model, state))
}

/// Exact solution on the plane torus depending on `x₁` only:
///
/// ```text
/// ρ = 3/2 + (2/5) cos x₁
/// u = (0, cos t · sin x₁ / (7/4 + cos x₁))
/// φ = ½ e^{−t} (sin x₁ + ½) / (2 + cos x₁)
/// ```
///
/// Convection vanishes identically and the capillary force is a gradient, so
/// the body forces below (derived symbolically) make it an exact solution for
/// any power-law exponent and logistic viscosity. Neither field is
/// band-limited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearManufactured {
    pub p: f64,
    pub nu_lower: f64,
    pub nu_upper: f64,
    pub shape: f64,
}

impl ShearManufactured {
    pub fn for_params(params: &Params) -> Self {
        let shape = match params.viscosity.profile() {
            ViscosityProfile::Constant => 0.0,
            ViscosityProfile::Logistic { shape } => shape,
        };
        Self {
            p: params.p.value(),
            nu_lower: params.viscosity.lower(),
            nu_upper: params.viscosity.upper(),
            shape,
        }
    }

    pub fn density(x: f64) -> f64 {
        1.5 + 0.4 * x.cos()
    }

    /// `(u₂, φ)` at time `t` and abscissa `x₁`.
    pub fn exact(t: f64, x: f64) -> (f64, f64) {
        let u = t.cos() * x.sin() / (1.75 + x.cos());
        let phi = 0.5 * (-t).exp() * (x.sin() + 0.5) / (2.0 + x.cos());
        (u, phi)
    }

    // Generated by tools/manufactured.py.
    #[allow(unused_parens)]
    fn force_u(&self, t: f64, x: f64) -> f64 {
        let Self {
            p,
            nu_lower,
            nu_upper,
            shape,
        } = *self;
        let x0 = x.sin();
        let x1 = x.cos();
        let x2 = ((7.0 / 4.0) + x1);
        let x3 = x2.powi(-1);
        let x4 = (nu_upper + -nu_lower);
        let x5 = ((1.0 / 2.0) + x0);
        let x6 = (2.0 + x1);
        let x7 = (-t).exp();
        let x8 = ((1.0 / 2.0) * x7 * shape * x6.powi(-1));
        let x9 = (-x5 * x8).exp();
        let x10 = (1.0 + x9);
        let x11 = (nu_lower + (x4 * x10.powi(-1)));
        let x12 = t.cos();
        let x13 = (x12 * x3);
        let x14 = (x0 * x13);
        let x15 = (x12 * x0.powi(3) * x2.powi(-3));
        let x16 = (x12 * x2.powi(-2));
        let x17 = (x0 * x1 * x16);
        let x18 = ((x1 * x13) + (x16 * x0.powi(2)));
        let x19 = x18.powi(2);
        let x20 = (1.0 + ((1.0 / 2.0) * x19));
        let x21 = (-1.0 + ((1.0 / 2.0) * p));
        let x22 = x20.powf(x21);
        (((-1.0 / 2.0) * x11 * x22 * (-x14 + (2.0 * x15) + (3.0 * x17))) + (-x0 * x3 * ((3.0 / 2.0) + ((2.0 / 5.0) * x1)) * t.sin()) + ((1.0 / 2.0) * x18 * x22 * x4 * x9 * x10.powi(-2) * ((-x1 * x8) + ((-1.0 / 2.0) * x0 * x5 * x7 * shape * x6.powi(-2)))) + ((-1.0 / 4.0) * x11 * x19 * x21 * x22 * x20.powi(-1) * ((-2.0 * x14) + (4.0 * x15) + (6.0 * x17))))
    }

    #[allow(unused_parens)]
    fn force_phi(&self, t: f64, x: f64) -> f64 {
        let x0 = x.sin();
        let x1 = x.cos();
        let x2 = (2.0 + x1);
        let x3 = x2.powi(-1);
        let x4 = (x3 * (-t).exp());
        let x5 = (x0 * x3);
        let x6 = (x1 * x5);
        let x7 = (2.0 * x0);
        let x8 = (1.0 + x7);
        let x9 = (x3 * x8);
        let x10 = x2.powi(-2);
        let x11 = x0.powi(2);
        let x12 = (x10 * x11);
        let x13 = (-2.0 * t).exp();
        let x14 = x1.powi(2);
        let x15 = (x0 * x10);
        let x16 = x8.powi(2);
        let x17 = x2.powi(-3);
        let x18 = x8.powi(3);
        let x19 = (4.0 * x1);
        let x20 = (15.0 + x19);
        let x21 = x20.powi(-2);
        let x22 = (x19 * x3);
        let x23 = (x0 * x22);
        let x24 = (2.0 * x11);
        let x25 = (x1 + (x24 * x3));
        let x26 = (x23 + -x7 + (x25 * x9));
        let x27 = (x1 * x26);
        let x28 = (x11 * x26);
        let x29 = x20.powi(-1);
        let x30 = ((5.0 / 2.0) * x29);
        let x31 = (5.0 * x29);
        let x32 = (20.0 * x21);
        let x33 = (2.0 * x1);
        let x34 = (x25 * x3);
        let x35 = (x10 * x24);
        let x36 = (-1.0 + x22 + x35);
        let x37 = (x25 * x8);
        let x38 = (4.0 * x3);
        let x39 = ((x14 * x38) + (-x11 * x38));
        let x40 = (x39 + -x33 + (x12 * x19) + (x15 * x37) + (x33 * x34) + (x0 * x36 * x9));
        let x41 = (8.0 * x0.powi(3));
        let x42 = (x1 * x10);
        ((-x4 * (((1.0 / 2.0) * x0) + -x6 + (-x30 * (x7 + (-16.0 * x6) + (x23 * x36) + (x37 * x42) + (x9 * (x39 + -x1 + (4.0 * x17 * x0.powi(4)) + (10.0 * x11 * x42))) + (-x10 * x41) + (-x34 * x7) + (12.0 * x14 * x15) + (x1 * x17 * x41) + (x15 * x19 * x25) + (x17 * x24 * x37) + (x35 * x36 * x8))) + (-80.0 * x28 * x20.powi(-3)) + (-10.0 * x21 * x27) + ((-1.0 / 2.0) * x12 * x8) + ((-1.0 / 4.0) * x1 * x9) + (-x0 * x32 * x40) + (-x10 * x28 * x31) + (-x27 * x3 * x30) + (-x28 * x3 * x32) + (-x31 * x40 * x5) + ((-3.0 / 32.0) * x13 * x15 * x16) + ((3.0 / 8.0) * x10 * x13 * x14 * x8) + ((3.0 / 16.0) * x11 * x13 * x18 * x2.powi(-4)) + ((3.0 / 64.0) * x1 * x13 * x17 * x18) + ((9.0 / 16.0) * x0 * x1 * x13 * x16 * x17))) + ((-1.0 / 2.0) * x4 * ((1.0 / 2.0) + x0) * ((3.0 / 2.0) + ((2.0 / 5.0) * x1))))
    }
}

impl Forcing for ShearManufactured {
    fn momentum(&self, t: f64, x: [f64; 3], _rho: f64) -> [f64; 3] {
        [0.0, self.force_u(t, x[0]), 0.0]
    }

    fn phase(&self, t: f64, x: [f64; 3], _rho: f64) -> f64 {
        self.force_phi(t, x[0])
    }
}

/// Random admissible state: smooth density in `[rho_lo, rho_hi]`, solenoidal
/// velocity and phase with sup-norms `u_amp` and `phi_amp`, and the matching
/// chemical potential.
pub fn random_state(
    model: &Model,
    seed: u64,
    rho_range: (f64, f64),
    u_amp: f64,
    phi_amp: f64,
) -> Result<SimState, PresetError> {
    let sp = model.spectral();
    let layout = sp.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = rho_range;
    let r = random_band_field(sp, &mut rng, 2.0, 1.0);
    let rho = r.map(|v| lo + 0.5 * (hi - lo) * (1.0 + v));
    let mut u = VectorGrid::zeros(layout.dim(), layout.len());
    for c in &mut u.comps {
        *c = random_band_field(sp, &mut rng, 3.0, u_amp);
    }
    let phi = random_band_field(sp, &mut rng, 3.0, phi_amp);
    let rho = DensityField::new(rho)?;
    let mut state = model.initial_state(rho, &u, &phi, 0.0)?;
    // Keep the requested scale after projection.
    let peak = state.velocity(sp).max_norm();
    if peak > 0.0 {
        state.a.scale(u_amp / peak);
    }
    Ok(state)
}

/// Zero velocity coefficients for `layout`.
pub fn rest_velocity(layout: &SpectralLayout) -> VectorSpectrum {
    VectorSpectrum::zeros(layout.dim(), layout.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("vortex".parse::<Preset>().is_err());
    }

    /// Central differences of the closed-form solution.
    #[test]
    fn manufactured_forces_match_finite_differences() {
        let mf = ShearManufactured {
            p: 2.8,
            nu_lower: 0.5,
            nu_upper: 1.5,
            shape: 2.0,
        };
        let h = 1e-3;
        let u = |t: f64, x: f64| ShearManufactured::exact(t, x).0;
        let phi = |t: f64, x: f64| ShearManufactured::exact(t, x).1;
        let d = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        let law = ViscosityLawParts(mf);
        for &(t, x) in &[(0.0, 0.3), (0.1, 2.0), (0.4, 4.5), (0.05, 6.0)] {
            let rho = ShearManufactured::density(x);
            let stress = |y: f64| {
                let ux = d(&|z| u(t, z), y);
                law.nu(phi(t, y)) * (1.0 + 0.5 * ux * ux).powf(0.5 * (mf.p - 2.0)) * 0.5 * ux
            };
            let fu = rho * d(&|s| u(s, x), t) - d(&stress, x);
            let mu = |y: f64| {
                let p = phi(t, y);
                -d2(&|z| phi(t, z), y) / ShearManufactured::density(y) + p * p * p - p
            };
            let fphi = rho * d(&|s| phi(s, x), t) - d2(&mu, x);
            let scale = 1.0 + fu.abs();
            assert!((mf.force_u(t, x) - fu).abs() < 1e-4 * scale, "{} {}", mf.force_u(t, x), fu);
            let scale = 1.0 + fphi.abs();
            assert!((mf.force_phi(t, x) - fphi).abs() < 1e-3 * scale, "{} {}", mf.force_phi(t, x), fphi);
        }
    }

    struct ViscosityLawParts(ShearManufactured);

    impl ViscosityLawParts {
        fn nu(&self, s: f64) -> f64 {
            let m = self.0;
            m.nu_lower + (m.nu_upper - m.nu_lower) / (1.0 + (-m.shape * s).exp())
        }
    }

    #[test]
    fn presets_build_admissible_states() {
        for preset in Preset::ALL {
            let sp = Spectral::new(SpectralLayout::new(2, 16, 5).unwrap());
            let (model, s) = prepare(preset, sp, Params::default(), 1).unwrap();
            assert!(s.all_finite(), "{preset}");
            let (lo, hi) = s.rho.bounds();
            assert!(lo >= model.params().delta && hi <= model.params().rho_cap + 1.0);
            let (_, div) = model.spectral().max_divergence_mode(&s.a);
            assert!(div <= 1e-13 * s.a.norm().max(1.0));
        }
    }

    #[test]
    fn spinodal_is_seeded_and_at_rest() {
        let sp = Spectral::new(SpectralLayout::new(2, 16, 5).unwrap());
        let a = initial_data(Preset::Spinodal, &sp, &Params::default(), 3);
        let b = initial_data(Preset::Spinodal, &sp, &Params::default(), 3);
        let c = initial_data(Preset::Spinodal, &sp, &Params::default(), 4);
        assert_eq!(a, b);
        assert_ne!(a.phi, c.phi);
        assert!((a.phi.max_abs() - SPINODAL_NOISE).abs() < 1e-15);
        assert_eq!(a.u.max_norm(), 0.0);
    }

    #[test]
    fn manufactured_needs_a_plane() {
        let sp = Spectral::new(SpectralLayout::new(3, 10, 3).unwrap());
        assert!(matches!(
            prepare(Preset::Manufactured, sp, Params::default(), 0),
            Err(PresetError::NeedsPlane)
        ));
    }

    #[test]
    fn random_states_are_reproducible() {
        let sp = Spectral::new(SpectralLayout::new(2, 16, 5).unwrap());
        let model = Model::new(sp, Params::default());
        let a = random_state(&model, 9, (0.5, 2.0), 0.7, 0.4).unwrap();
        let b = random_state(&model, 9, (0.5, 2.0), 0.7, 0.4).unwrap();
        assert_eq!(a, b);
        assert!((a.velocity(model.spectral()).max_norm() - 0.7).abs() < 1e-12);
        let (lo, hi) = a.rho.bounds();
        assert!(lo >= 0.5 - 1e-12 && hi <= 2.0 + 1e-12);
        assert!(rest_velocity(model.layout()).norm() == 0.0);
    }
}
