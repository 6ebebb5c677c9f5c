//! Dense-oracle certification sweep behind `nsch oracle`.

use nsch::integrator::{stable_dt, step, StepControls};
use nsch::oracle::{certify, dense_step, MAX_ORACLE_BAND};
use nsch::params::DensityMode;
use nsch::presets::random_state;
use nsch::{Model, Params, SimState, Spectral, SpectralLayout};

use crate::failure::Failure;

/// Local orders of one fast step against dense RK4 below this fail the sweep.
pub const MIN_LOCAL_ORDER: f64 = 2.9;

fn numeric(e: impl std::fmt::Display) -> Failure {
    Failure::Numeric(e.to_string())
}

fn local_order(seed: u64) -> Result<f64, Failure> {
    let mut params = Params::new(2.8, 0.5, 1.5, 2.0, 0.1, 2.0)?;
    params.density_mode = DensityMode::Frozen;
    let model = Model::new(Spectral::new(SpectralLayout::new(2, 32, 2)?), params);
    let s0 = random_state(&model, seed, (0.7, 1.8), 0.8, 0.8)?;
    let gap = |dt: f64| -> Result<f64, Failure> {
        let fast: SimState = step(&model, &s0, dt, false, &mut None)?;
        let dense = dense_step(&model, &s0, dt).map_err(numeric)?;
        let mut d = fast.b.clone();
        d.axpy(-1.0, &dense.b);
        let mut da = fast.a.clone();
        da.axpy(-1.0, &dense.a);
        Ok(d.norm() + da.norm())
    };
    let dt = stable_dt(&model, &s0, &StepControls::default()).map_err(numeric)?;
    Ok((gap(dt)? / gap(dt / 2.0)?).log2())
}

pub fn execute(n_grid: usize, samples: u64, seed: u64) -> Result<(), Failure> {
    let mut ok = true;
    println!("certification on {n_grid}^2, {samples} random state(s) per band");
    for band in 1..=MAX_ORACLE_BAND {
        let model = Model::new(
            Spectral::new(SpectralLayout::new(2, n_grid, band)?),
            Params::new(2.8, 0.5, 1.5, 2.0, 0.1, 2.0)?,
        );
        for k in 0..samples {
            let s = random_state(&model, seed + 1000 * band as u64 + k, (0.5, 2.0), 0.8, 0.9)?;
            let cert = certify(&model, &s).map_err(numeric)?;
            ok &= cert.passed();
            println!("m_cut {band} sample {k}: {}", if cert.passed() { "pass" } else { "FAIL" });
            for d in &cert.entries {
                println!("    {:<11} {:.3e}", d.object, d.relative);
            }
        }
    }
    let order = local_order(seed)?;
    let order_ok = order >= MIN_LOCAL_ORDER;
    println!(
        "local order of one fast step against dense RK4: {order:.3} ({})",
        if order_ok { "pass" } else { "FAIL" }
    );
    if ok && order_ok {
        Ok(())
    } else {
        Err(Failure::Verify("dense oracle disagrees with the fast operators".into()))
    }
}
