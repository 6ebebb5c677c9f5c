//! The invariant suite behind `nsch verify`.

use nsch::checkpoint::{decode, encode};
use nsch::density::DensityField;
use nsch::diagnostics::{Baseline, Tolerances};
use nsch::integrator::{run, StepControls};
use nsch::monitor::Monitor;
use nsch::oracle::{certify, MAX_ORACLE_BAND};
use nsch::presets::{prepare, random_state, Preset};
use nsch::{GridField, Model, Params, SimState, Spectral, SpectralLayout, VectorGrid};

use crate::failure::Failure;

struct Check {
    name: String,
    passed: bool,
    detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

fn params() -> Params {
    Params::new(2.8, 0.5, 1.5, 2.0, 0.1, 2.0).expect("admissible")
}

fn model(dim: usize, n: usize, m: usize) -> Result<Model, Failure> {
    Ok(Model::new(Spectral::new(SpectralLayout::new(dim, n, m)?), params()))
}

fn preset_run(preset: Preset, dim: usize, n: usize, m: usize, steps: usize, seed: u64) -> Result<Check, Failure> {
    let sp = Spectral::new(SpectralLayout::new(dim, n, m)?);
    let (model, s0) = prepare(preset, sp, params(), seed)?;
    // Forcing of the phase equation changes ∫ρφ by ∫f_φ.
    let forced = preset == Preset::Manufactured;
    let tol = Tolerances {
        rho_phi: if forced { f64::INFINITY } else { Tolerances::default().rho_phi },
        ..Default::default()
    };
    let mut mon = Monitor::new(&model, &s0, tol);
    let controls = StepControls {
        t_end: 1.0,
        max_steps: steps,
        ..Default::default()
    };
    let out = run(&model, s0, &controls, &mut |ev| {
        mon.observe(&model, ev);
        true
    })?;
    let s = mon.summary();
    let name = format!("invariants/{preset}/{dim}d");
    if let Some(b) = out.blowup {
        return Ok(Check::new(name, false, b.to_string()));
    }
    let energy_ok = forced || s.max_energy_rise <= 1e-5 * s.initial_energy;
    let detail = format!(
        "{} steps, div {:.1e}, mass {:.1e}, rho*phi {:.1e}, mu {:.1e}, max dE {:.1e}{}",
        s.steps,
        s.max_div_resid,
        s.max_mass_drift,
        s.max_rho_phi_drift,
        s.max_mu_resid,
        s.max_energy_rise,
        s.first_violation
            .as_ref()
            .map(|(k, v)| format!(", step {k}: {v}"))
            .unwrap_or_default()
    );
    Ok(Check::new(name, s.ok() && energy_ok && s.steps == steps, detail))
}

fn pure_phases() -> Result<Check, Failure> {
    let model = model(2, 16, 5)?;
    let layout = model.layout();
    let mut worst = 0.0f64;
    for sign in [-1.0, 1.0] {
        let rho = GridField::from_fn(layout, |x| 1.0 + 0.6 * (x[0].sin() * (2.0 * x[1]).cos()).powi(2));
        let rho = DensityField::new(rho).map_err(|e| Failure::Config(e.to_string()))?;
        let u = VectorGrid::zeros(2, layout.len());
        let phi = GridField::constant(layout.len(), sign);
        let s0 = model.initial_state(rho, &u, &phi, 0.0).map_err(|e| Failure::Solver(e.to_string()))?;
        let controls = StepControls {
            t_end: 1.0,
            max_steps: 20,
            ..Default::default()
        };
        let out = run(&model, s0.clone(), &controls, &mut |_| true)?;
        worst = worst.max(state_distance(&s0, &out.state));
    }
    Ok(Check::new("pure-phases", worst <= 1e-12, format!("max change {worst:.1e} over 20 steps")))
}

fn state_distance(a: &SimState, b: &SimState) -> f64 {
    let rho = a
        .rho
        .values
        .values
        .iter()
        .zip(&b.rho.values.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let coeffs = |s: &SimState| {
        s.a.comps
            .iter()
            .chain([&s.b, &s.c])
            .flat_map(|c| c.coeffs.clone())
            .collect::<Vec<_>>()
    };
    coeffs(a)
        .iter()
        .zip(coeffs(b))
        .map(|(x, y)| (x - y).norm())
        .fold(rho, f64::max)
}

fn capillary(seed: u64) -> Result<Check, Failure> {
    let model = model(2, 32, 10)?;
    let mut worst = 0.0f64;
    for k in 0..5 {
        let s = random_state(&model, seed + k, (0.3, 2.0), 0.5, 0.9)?;
        let mu = model.pointwise_chemical_potential(&s.b, &s.rho.values);
        let mut d = model.capillary_force_from_grid(&s.b, &mu, &s.rho.values);
        let rhs = model.capillary_force_divergence_form(&s.b);
        d.axpy(-1.0, &rhs);
        worst = worst.max(d.norm() / rhs.norm().max(f64::MIN_POSITIVE));
    }
    Ok(Check::new("capillary-two-form", worst <= 1e-9, format!("max relative gap {worst:.1e}")))
}

fn pressure(seed: u64) -> Result<Vec<Check>, Failure> {
    let model = model(2, 32, 10)?;
    let mut rest = random_state(&model, seed, (0.5, 2.0), 0.0, 0.0)?;
    let phi = GridField::constant(model.layout().len(), 1.0);
    rest.b = model.spectral().forward(&phi)?;
    rest.c = model.chemical_potential_solve(&rest.b, &rest.rho.values, None)?;
    let rest_norm = model.recover_pressure(&rest)?.p.norm();
    let mut worst = 0.0f64;
    for k in 0..5 {
        let s = random_state(&model, seed + 100 + k, (0.5, 2.0), 0.8, 0.9)?;
        let (r, norm) = model.helmholtz_residual(&model.recover_pressure(&s)?);
        worst = worst.max(r / norm);
    }
    Ok(vec![
        Check::new("pressure/rest", rest_norm == 0.0, format!("|P| = {rest_norm:.1e}")),
        Check::new("pressure/helmholtz", worst <= 1e-10, format!("max relative residual {worst:.1e}")),
    ])
}

fn oracle(seed: u64) -> Result<Vec<Check>, Failure> {
    let mut checks = Vec::new();
    for band in 1..=MAX_ORACLE_BAND {
        let model = model(2, 64, band)?;
        let s = random_state(&model, seed + band as u64, (0.5, 2.0), 0.8, 0.9)?;
        let cert = certify(&model, &s).map_err(|e| Failure::Numeric(e.to_string()))?;
        let detail = cert
            .worst()
            .map(|w| format!("worst {} at {:.1e}", w.object, w.relative))
            .unwrap_or_default();
        checks.push(Check::new(format!("oracle/m={band}"), cert.passed(), detail));
    }
    Ok(checks)
}

fn checkpoint(seed: u64) -> Result<Check, Failure> {
    let model = model(2, 16, 5)?;
    let s = random_state(&model, seed, (0.5, 2.0), 0.7, 0.9)?;
    let base = Baseline::of(&model, &s);
    let back = decode(&encode(model.layout(), model.params(), &s, &base, 7))?;
    let ok = back.state == s && back.baseline == base && back.steps == 7;
    Ok(Check::new("checkpoint/round-trip", ok, String::new()))
}

pub fn execute(seed: u64) -> Result<(), Failure> {
    let mut checks = Vec::new();
    for preset in Preset::ALL {
        checks.push(preset_run(preset, 2, 16, 5, 25, seed)?);
    }
    checks.push(preset_run(Preset::Spinodal, 3, 8, 2, 10, seed)?);
    checks.push(pure_phases()?);
    checks.push(capillary(seed)?);
    checks.extend(pressure(seed)?);
    checks.extend(oracle(seed)?);
    checks.push(checkpoint(seed)?);

    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        println!("{mark}  {:width$}  {}", c.name, c.detail);
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(Failure::Verify(failed.join(", ")))
    }
}
