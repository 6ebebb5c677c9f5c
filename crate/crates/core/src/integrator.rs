//! Explicit time stepping of the coupled system.
//!
//! One step of size `dt`:
//!
//! 1. rates `r₁` at `(ρₙ, aₙ, bₙ, cₙ)`;
//! 2. predictor `a* = aₙ + dt r₁.a`, `b* = bₙ + dt r₁.b`;
//! 3. `ρₙ₊₁` by semi-Lagrangian transport with `½(uₙ + u*)`;
//! 4. `c*` from `(b*, ρₙ₊₁)`, rates `r₂` at the predicted state;
//! 5. corrector `aₙ₊₁ = aₙ + ½dt(r₁.a + r₂.a)` and likewise for `b`;
//! 6. `cₙ₊₁` from `(bₙ₊₁, ρₙ₊₁)`.
//!
//! With splitting enabled the phase update integrates the constant-coefficient
//! part `−κ|k|⁴b`, `κ = 1/ρ_max²`, exactly and applies Heun to the remainder
//! in the transformed variable.

use crate::density::{advect_density, GridVelocity};
use crate::error::{NumericError, StepError};
use crate::field::Spectrum;
use crate::galerkin::{Model, Rates};
use crate::params::DensityMode;
use crate::state::SimState;

#[derive(Debug, Clone, PartialEq)]
pub struct StepControls {
    /// Fixed step; `None` selects [`stable_dt`] every step.
    pub dt: Option<f64>,
    pub cfl_adv: f64,
    pub cfl_diff: f64,
    pub t_end: f64,
    pub max_steps: usize,
    /// Observer calls with `tick = true` every this many steps.
    pub cadence: usize,
    pub splitting: bool,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            dt: None,
            cfl_adv: 0.5,
            cfl_diff: 0.25,
            t_end: 0.0,
            max_steps: usize::MAX,
            cadence: 1,
            splitting: false,
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<(), crate::error::ParameterError> {
        use crate::error::ParameterError;
        for (name, v) in [("cfl_adv", self.cfl_adv), ("cfl_diff", self.cfl_diff)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ParameterError::new(name, v, "safety factor must lie in (0, 1]"));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(ParameterError::new("dt", dt, "must be positive and finite"));
            }
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(ParameterError::new("t_end", self.t_end, "must be finite and non-negative"));
        }
        if self.cadence == 0 {
            return Err(ParameterError::new("cadence", 0.0, "must be at least 1"));
        }
        Ok(())
    }
}

/// Largest admissible explicit step.
///
/// `min(cfl_adv h/max|u|, cfl_diff 2ρ_min²/K², cfl_diff ρ_min/(ν_eff K))`
/// with `K` the largest retained `|k|²`, `h` the smallest spacing and
/// `ν_eff = ν^* max(1, p−1)(1 + max|𝔻u|²)^{(p−2)/2}` bounding the tangent
/// modulus of the stress. The phase bound keeps `dt |k|⁴/ρ²` inside the
/// real stability interval of Heun's method.
pub fn stable_dt(model: &Model, state: &SimState, controls: &StepControls) -> Result<f64, NumericError> {
    if !state.all_finite() {
        return Err(NumericError::NonFinite { what: "state" });
    }
    let sp = model.spectral();
    let layout = sp.layout();
    let params = model.params();
    let (rho_min, rho_max) = state.rho.bounds();
    let k_max = layout.max_retained_k_squared();
    let u = state.velocity(sp);
    let speed = u.max_norm().max(1e-12);
    let dt_adv = controls.cfl_adv * layout.min_spacing() / speed;

    let kappa = if controls.splitting { 1.0 / (rho_max * rho_max) } else { 0.0 };
    let stiff = 1.0 / (rho_min * rho_min) - kappa;
    let dt_phase = if stiff > 0.0 {
        controls.cfl_diff * 2.0 / (stiff * k_max * k_max)
    } else {
        f64::INFINITY
    };

    let dt_visc = if params.physics.stress {
        let du = sp.sym_gradient(&state.a);
        let q = (0..layout.len()).map(|i| du.frobenius_sq_at(i)).fold(0.0, f64::max);
        let p = params.p.value();
        let nu_eff = params.viscosity.upper() * (p - 1.0).max(1.0) * (1.0 + q).powf(0.5 * (p - 2.0)).max(1.0);
        controls.cfl_diff * rho_min / (nu_eff * k_max)
    } else {
        f64::INFINITY
    };
    let dt = dt_adv.min(dt_phase).min(dt_visc);
    if dt.is_finite() && dt > 0.0 {
        Ok(dt)
    } else {
        Err(NumericError::NonFinite { what: "stable time step" })
    }
}

/// Per-mode integrating factor `exp(−κ|k|⁴ dt)`.
fn decay(model: &Model, kappa: f64, dt: f64) -> Vec<f64> {
    let layout = model.layout();
    (0..layout.len())
        .map(|i| {
            let k2 = layout.k_squared(i);
            (-kappa * k2 * k2 * dt).exp()
        })
        .collect()
}

fn scale_modes(v: &Spectrum, factors: &[f64]) -> Spectrum {
    Spectrum {
        coeffs: v.coeffs.iter().zip(factors).map(|(c, f)| c * *f).collect(),
    }
}

/// Advances `state` by `dt`. `warm` carries the rates of the previous call as
/// conjugate-gradient starting guesses and is updated in place.
pub fn step(
    model: &Model,
    state: &SimState,
    dt: f64,
    splitting: bool,
    warm: &mut Option<Rates>,
) -> Result<SimState, StepError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(StepError::InvalidStep(dt));
    }
    let sp = model.spectral();
    let layout = sp.layout();

    let r1 = model.rates(state, warm.as_ref())?;
    let kappa = if splitting {
        let (_, rho_max) = state.rho.bounds();
        1.0 / (rho_max * rho_max)
    } else {
        0.0
    };
    // Remainder N(b) = f(b) + κ|k|⁴ b.
    let remainder = |rates: &Spectrum, b: &Spectrum| -> Spectrum {
        if kappa == 0.0 {
            return rates.clone();
        }
        let mut out = rates.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let k2 = layout.k_squared(i);
            *c += b.coeffs[i] * (kappa * k2 * k2);
        }
        out
    };
    let e = if kappa == 0.0 { None } else { Some(decay(model, kappa, dt)) };

    let mut a_star = state.a.clone();
    a_star.axpy(dt, &r1.a);
    let n1 = remainder(&r1.b, &state.b);
    let mut b_star = state.b.clone();
    b_star.axpy(dt, &n1);
    if let Some(e) = &e {
        b_star = scale_modes(&b_star, e);
    }

    let rho_next = match model.params().density_mode {
        DensityMode::Frozen => state.rho.clone(),
        DensityMode::Transported => {
            let u_old = sp.inverse_vector(&state.a)?;
            let u_new = sp.inverse_vector(&a_star)?;
            let centred = GridVelocity::centred(layout, &u_old, &u_new);
            advect_density(layout, &state.rho, &centred, dt)?
        }
    };

    let c_star = model.chemical_potential_solve(&b_star, &rho_next.values, Some(&state.c))?;
    let predicted = SimState {
        rho: rho_next,
        a: a_star,
        b: b_star,
        c: c_star,
        t: state.t + dt,
    };
    let r2 = model.rates(&predicted, Some(&r1))?;

    let mut a = state.a.clone();
    a.axpy(0.5 * dt, &r1.a);
    a.axpy(0.5 * dt, &r2.a);
    sp.leray_in_place(&mut a);

    let b = match &e {
        None => {
            let mut b = state.b.clone();
            b.axpy(0.5 * dt, &r1.b);
            b.axpy(0.5 * dt, &r2.b);
            b
        }
        Some(e) => {
            let n2 = remainder(&r2.b, &predicted.b);
            let mut b = state.b.clone();
            b.axpy(0.5 * dt, &n1);
            let mut b = scale_modes(&b, e);
            b.axpy(0.5 * dt, &n2);
            b
        }
    };
    let c = model.chemical_potential_solve(&b, &predicted.rho.values, Some(&predicted.c))?;
    let next = SimState {
        rho: predicted.rho,
        a,
        b,
        c,
        t: predicted.t,
    };
    *warm = Some(r2);
    if !next.all_finite() {
        return Err(NumericError::NonFinite { what: "state after step" }.into());
    }
    Ok(next)
}

/// One accepted step, as seen by an observer.
#[derive(Debug)]
pub struct StepEvent<'a> {
    /// Number of steps taken so far (1 for the first step).
    pub step: usize,
    pub dt: f64,
    pub prev: &'a SimState,
    pub curr: &'a SimState,
    /// Whether this step falls on the configured cadence.
    pub tick: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
}

/// Failure during a run, with the last state that passed every check.
#[derive(Debug, Clone)]
pub struct BlowUp {
    pub step: usize,
    pub t: f64,
    pub error: StepError,
    pub last_valid: SimState,
}

impl std::fmt::Display for BlowUp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {} at t = {:.6e} failed: {}", self.step, self.t, self.error)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SimState,
    pub log: Vec<StepRecord>,
    pub blowup: Option<BlowUp>,
}

fn halted(state: SimState, log: Vec<StepRecord>, step: usize, error: StepError) -> RunOutcome {
    let t = state.t;
    RunOutcome {
        state: state.clone(),
        log,
        blowup: Some(BlowUp {
            step,
            t,
            error,
            last_valid: state,
        }),
    }
}

/// Steps until `t_end` or `max_steps`. The observer sees every accepted step
/// and may stop the run by returning `false`.
pub fn run(
    model: &Model,
    state0: SimState,
    controls: &StepControls,
    observer: &mut dyn FnMut(&StepEvent<'_>) -> bool,
) -> Result<RunOutcome, crate::error::ParameterError> {
    controls.validate()?;
    let mut state = state0;
    let mut log = Vec::new();
    let mut warm = None;
    let t_end = controls.t_end;
    let slack = 1e-12 * t_end.abs().max(1.0);
    while state.t < t_end - slack && log.len() < controls.max_steps {
        let step_no = log.len() + 1;
        let stable = match stable_dt(model, &state, controls) {
            Ok(v) => v,
            Err(e) => return Ok(halted(state, log, step_no, e.into())),
        };
        let dt = match controls.dt {
            Some(dt) if dt > stable * (1.0 + 1e-6) => {
                return Ok(halted(state, log, step_no, StepError::TooLarge { dt, stable }));
            }
            Some(dt) => dt,
            None => stable,
        }
        .min(t_end - state.t);
        let next = match step(model, &state, dt, controls.splitting, &mut warm) {
            Ok(next) => next,
            Err(e) => return Ok(halted(state, log, step_no, e)),
        };
        log.push(StepRecord {
            step: step_no,
            t: next.t,
            dt,
        });
        let go_on = observer(&StepEvent {
            step: step_no,
            dt,
            prev: &state,
            curr: &next,
            tick: step_no % controls.cadence == 0,
        });
        state = next;
        if !go_on {
            break;
        }
    }
    Ok(RunOutcome {
        state,
        log,
        blowup: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityField;
    use crate::field::{GridField, VectorGrid};
    use crate::params::Params;
    use crate::presets::random_state;
    use crate::{Spectral, SpectralLayout};

    fn model(n: usize, m: usize, p: f64) -> Model {
        let sp = Spectral::new(SpectralLayout::new(2, n, m).unwrap());
        Model::new(sp, Params::new(p, 0.5, 1.5, 2.0, 0.1, 2.0).unwrap())
    }

    fn pure_phase(model: &Model, sign: f64) -> SimState {
        let layout = model.layout();
        let rho = GridField::from_fn(layout, |x| 1.2 + 0.5 * (x[0].sin() * x[1].cos()).powi(3));
        let rho = DensityField::new(rho).unwrap();
        let u = VectorGrid::zeros(2, layout.len());
        let phi = GridField::constant(layout.len(), sign);
        model.initial_state(rho, &u, &phi, 0.0).unwrap()
    }

    fn max_diff(a: &SimState, b: &SimState) -> f64 {
        let rho = a
            .rho
            .values
            .values
            .iter()
            .zip(&b.rho.values.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let mut d = a.a.clone();
        d.axpy(-1.0, &b.a);
        let mut db = a.b.clone();
        db.axpy(-1.0, &b.b);
        let mut dc = a.c.clone();
        dc.axpy(-1.0, &b.c);
        let a_max = d.comps.iter().map(|c| c.max_abs()).fold(0.0, f64::max);
        rho.max(a_max).max(db.max_abs()).max(dc.max_abs())
    }

    #[test]
    fn pure_phases_at_rest_are_stationary() {
        let m = model(16, 5, 2.8);
        for sign in [1.0, -1.0] {
            let s0 = pure_phase(&m, sign);
            let mut s = s0.clone();
            let mut warm = None;
            let dt = stable_dt(&m, &s, &StepControls::default()).unwrap();
            for _ in 0..20 {
                let next = step(&m, &s, dt, false, &mut warm).unwrap();
                assert!(max_diff(&next, &s) <= 1e-12);
                s = next;
            }
            assert_eq!(s.rho, s0.rho);
        }
    }

    #[test]
    fn stable_dt_diffusive_limit_scales_with_fourth_power() {
        let controls = StepControls::default();
        let coarse = model(16, 5, 2.0);
        let fine = model(32, 10, 2.0);
        let dc = stable_dt(&coarse, &pure_phase(&coarse, 1.0), &controls).unwrap();
        let df = stable_dt(&fine, &pure_phase(&fine, 1.0), &controls).unwrap();
        assert!((dc / df - 16.0).abs() < 1e-12);
        // ρ ≡ 1, K = 2·5²: the phase bound cfl_diff·2/K².
        let layout = coarse.layout();
        let rho = DensityField::new(GridField::constant(layout.len(), 1.0)).unwrap();
        let u = VectorGrid::zeros(2, layout.len());
        let s = coarse
            .initial_state(rho, &u, &GridField::constant(layout.len(), 1.0), 0.0)
            .unwrap();
        let dt = stable_dt(&coarse, &s, &controls).unwrap();
        assert!((dt - 0.25 * 2.0 / 2500.0).abs() < 1e-18);
    }

    #[test]
    fn stable_dt_advective_limit() {
        let m = model(16, 5, 2.0);
        let mut s = random_state(&m, 3, (1.0, 2.0), 1.0, 0.1).unwrap();
        let peak = s.velocity(m.spectral()).max_norm();
        s.a.scale(1e6 / peak);
        let controls = StepControls::default();
        let dt = stable_dt(&m, &s, &controls).unwrap();
        let speed = s.velocity(m.spectral()).max_norm();
        let adv = 0.5 * m.layout().min_spacing() / speed;
        assert!((dt - adv).abs() <= 1e-12 * adv);
    }

    #[test]
    fn splitting_relaxes_the_phase_bound() {
        let m = model(16, 5, 2.0);
        let s = random_state(&m, 4, (1.0, 2.0), 0.0, 0.1).unwrap();
        let plain = stable_dt(&m, &s, &StepControls::default()).unwrap();
        let split = stable_dt(
            &m,
            &s,
            &StepControls {
                splitting: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(split > plain);
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let m = model(16, 5, 2.8);
        let s0 = random_state(&m, 5, (1.0, 2.0), 0.1, 0.3).unwrap();
        let out = run(&m, s0.clone(), &StepControls::default(), &mut |_| true).unwrap();
        assert!(out.log.is_empty());
        assert!(out.blowup.is_none());
        assert_eq!(out.state, s0);
    }

    #[test]
    fn fixed_step_logs_exact_count() {
        let m = model(16, 5, 2.8);
        let s0 = random_state(&m, 6, (1.0, 2.0), 0.1, 0.3).unwrap();
        let dt = 0.5 * stable_dt(&m, &s0, &StepControls::default()).unwrap();
        let controls = StepControls {
            dt: Some(dt),
            t_end: 3.0 * dt,
            cadence: 2,
            ..Default::default()
        };
        let mut ticks = Vec::new();
        let out = run(&m, s0, &controls, &mut |ev| {
            ticks.push(ev.tick);
            true
        })
        .unwrap();
        assert_eq!(out.log.len(), 3);
        assert_eq!(ticks, [false, true, false]);
        assert!((out.state.t - 3.0 * dt).abs() < 1e-15);
    }

    #[test]
    fn oversized_step_is_reported_not_taken() {
        let m = model(16, 5, 2.8);
        let s0 = random_state(&m, 7, (1.0, 2.0), 0.1, 0.3).unwrap();
        let stable = stable_dt(&m, &s0, &StepControls::default()).unwrap();
        let controls = StepControls {
            dt: Some(2.0 * stable),
            t_end: 1.0,
            ..Default::default()
        };
        let out = run(&m, s0.clone(), &controls, &mut |_| true).unwrap();
        let blow = out.blowup.expect("oversized step must be refused");
        assert!(matches!(blow.error, StepError::TooLarge { .. }));
        assert_eq!(blow.last_valid, s0);
        assert!(out.log.is_empty());
    }

    #[test]
    fn observer_can_stop_the_run() {
        let m = model(16, 5, 2.8);
        let s0 = random_state(&m, 8, (1.0, 2.0), 0.1, 0.3).unwrap();
        let controls = StepControls {
            t_end: 1.0,
            ..Default::default()
        };
        let out = run(&m, s0, &controls, &mut |ev| ev.step < 4).unwrap();
        assert_eq!(out.log.len(), 4);
    }

    #[test]
    fn invalid_controls_are_rejected() {
        let m = model(16, 5, 2.8);
        let s0 = random_state(&m, 9, (1.0, 2.0), 0.1, 0.3).unwrap();
        for c in [
            StepControls {
                cfl_adv: 0.0,
                ..Default::default()
            },
            StepControls {
                dt: Some(-1.0),
                ..Default::default()
            },
            StepControls {
                cadence: 0,
                ..Default::default()
            },
        ] {
            assert!(run(&m, s0.clone(), &c, &mut |_| true).is_err());
        }
        assert!(matches!(
            step(&m, &s0, f64::NAN, false, &mut None),
            Err(StepError::InvalidStep(_))
        ));
    }

    /// Solution at `t_end` with `steps` equal steps.
    fn integrate(m: &Model, s0: &SimState, t_end: f64, steps: usize, splitting: bool) -> SimState {
        let dt = t_end / steps as f64;
        let mut s = s0.clone();
        let mut warm = None;
        for _ in 0..steps {
            s = step(m, &s, dt, splitting, &mut warm).unwrap();
        }
        s
    }

    fn observed_order(m: &Model, s0: &SimState, t_end: f64, steps: usize, splitting: bool) -> f64 {
        let y: Vec<SimState> = (0..3)
            .map(|l| integrate(m, s0, t_end, steps << l, splitting))
            .collect();
        let e1 = max_diff(&y[0], &y[1]);
        let e2 = max_diff(&y[1], &y[2]);
        (e1 / e2).log2()
    }

    #[test]
    fn heun_is_second_order() {
        let m = model(16, 5, 2.8);
        let s0 = random_state(&m, 10, (1.0, 2.0), 0.5, 0.5).unwrap();
        let dt = stable_dt(&m, &s0, &StepControls::default()).unwrap();
        let order = observed_order(&m, &s0, 20.0 * dt, 20, false);
        assert!(order >= 1.9, "observed order {order}");
    }

    #[test]
    fn split_stepping_is_second_order() {
        let m = model(16, 5, 2.8);
        let s0 = random_state(&m, 11, (1.0, 2.0), 0.5, 0.5).unwrap();
        let dt = stable_dt(&m, &s0, &StepControls::default()).unwrap();
        let order = observed_order(&m, &s0, 20.0 * dt, 20, true);
        assert!(order >= 1.9, "observed order {order}");
    }

    /// Forward step, velocity reversal, forward step. The fields are resolved
    /// well enough that the interpolation damping is negligible.
    #[test]
    fn reversed_pure_advection_recovers_density() {
        let mut m = model(64, 21, 2.0);
        let physics = &mut m.params_mut().physics;
        physics.potential = false;
        physics.stress = false;
        physics.capillary = false;
        let layout = m.layout();
        let rho = GridField::from_fn(layout, |x| 1.5 + 0.3 * x[0].sin() * x[1].cos());
        let mut u = VectorGrid::zeros(2, layout.len());
        u.comps[0] = GridField::from_fn(layout, |x| x[1].sin());
        u.comps[1] = GridField::from_fn(layout, |x| x[0].sin());
        let phi = GridField::from_fn(layout, |x| 0.2 * x[0].cos());
        let s0 = m.initial_state(DensityField::new(rho).unwrap(), &u, &phi, 0.0).unwrap();
        let err = |dt: f64| {
            let mut s = step(&m, &s0, dt, false, &mut None).unwrap();
            s.a.scale(-1.0);
            let back = step(&m, &s, dt, false, &mut None).unwrap();
            back.rho
                .values
                .values
                .iter()
                .zip(&s0.rho.values.values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        // Displacements well below a cell, away from grid-aligned coincidences.
        let (e1, e2) = (err(0.025), err(0.0125));
        assert!(e1 < 1e-3, "{e1}");
        assert!((e1 / e2).log2() >= 1.8, "{e1} {e2}");
    }
}
