//! Refinement studies behind `nsch converge`.

use nsch::integrator::{run, stable_dt, StepControls};
use nsch::presets::{prepare, Preset, ShearManufactured};
use nsch::{Model, Params, SimState, Spectral, SpectralLayout};

use crate::failure::Failure;

/// Time orders below this count as a failed study.
pub const MIN_TIME_ORDER: f64 = 1.9;
/// Each spatial refinement must shrink the error at least this much.
pub const MIN_SPACE_DROP: f64 = 10.0;

fn advance(model: &Model, s0: &SimState, dt: f64, steps: usize, splitting: bool) -> Result<SimState, Failure> {
    let controls = StepControls {
        dt: Some(dt),
        t_end: dt * steps as f64,
        splitting,
        ..Default::default()
    };
    let out = run(model, s0.clone(), &controls, &mut |_| true)?;
    match out.blowup {
        Some(b) => Err(Failure::from(b.error)),
        None => Ok(out.state),
    }
}

/// `‖b₁ − b₂‖ + ‖a₁ − a₂‖` over the coefficient boxes.
fn distance(x: &SimState, y: &SimState) -> f64 {
    let mut db = x.b.clone();
    db.axpy(-1.0, &y.b);
    let mut da = x.a.clone();
    da.axpy(-1.0, &y.a);
    db.norm() + da.norm()
}

/// Successive-difference orders `log₂(e_k / e_{k+1})` of a dt-halving sweep.
fn time_study(levels: usize, seed: u64) -> Result<Vec<f64>, Failure> {
    let sp = Spectral::new(SpectralLayout::new(2, 16, 5)?);
    let params = Params::new(2.8, 0.5, 1.5, 2.0, 0.1, 2.0)?;
    let (model, s0) = prepare(Preset::Spinodal, sp, params, seed)?;
    let dt0 = 0.5 * stable_dt(&model, &s0, &StepControls::default()).map_err(|e| Failure::Numeric(e.to_string()))?;
    let base_steps = 20;
    println!("time refinement: spinodal 16^2, m_cut 5, T = {:.3e}", dt0 * base_steps as f64);
    let mut states = Vec::new();
    for k in 0..levels {
        let f = 1 << k;
        states.push(advance(&model, &s0, dt0 / f as f64, base_steps * f, false)?);
    }
    let diffs: Vec<f64> = states.windows(2).map(|w| distance(&w[0], &w[1])).collect();
    let mut orders = Vec::new();
    for (k, d) in diffs.iter().enumerate() {
        let order = (k > 0).then(|| (diffs[k - 1] / d).log2());
        println!(
            "  dt/{:<4} vs dt/{:<4} difference {d:.3e}{}",
            1 << k,
            1 << (k + 1),
            order.map(|o| format!("  order {o:.3}")).unwrap_or_default()
        );
        orders.extend(order);
    }
    Ok(orders)
}

/// `L²` error of `φ` against the manufactured solution at each resolution.
fn space_study(levels: usize) -> Result<Vec<(usize, f64)>, Failure> {
    let params = Params::new(2.8, 0.5, 1.5, 2.0, 0.1, 2.0)?;
    let (t_end, dt): (f64, f64) = (0.02, 2e-5);
    println!("spatial refinement: manufactured shear flow, T = {t_end}, dt = {dt:e}, split phase step");
    let mut errors = Vec::new();
    for k in 0..levels {
        let n = 8 << k;
        let sp = Spectral::new(SpectralLayout::new(2, n, SpectralLayout::default_m_cut(n))?);
        let (model, s0) = prepare(Preset::Manufactured, sp, params.clone(), 0)?;
        let steps = (t_end / dt).round() as usize;
        let s = advance(&model, &s0, dt, steps, true)?;
        let layout = model.layout();
        let phi = s.phase(model.spectral());
        let err = (0..layout.len())
            .map(|i| {
                let x = layout.position(i);
                (phi.values[i] - ShearManufactured::exact(s.t, x[0]).1).powi(2)
            })
            .sum::<f64>()
            * layout.cell_volume();
        let err = err.sqrt();
        let drop = errors.last().map(|(_, e): &(usize, f64)| e / err);
        println!(
            "  n_grid {n:<3} m_cut {:<2} error {err:.3e}{}",
            layout.m_cut(),
            drop.map(|d| format!("  drop {d:.1}x")).unwrap_or_default()
        );
        errors.push((n, err));
    }
    Ok(errors)
}

pub fn execute(dt_levels: usize, m_levels: usize, seed: u64) -> Result<(), Failure> {
    if dt_levels < 3 {
        return Err(Failure::Config("--dt-levels must be at least 3 to observe an order".into()));
    }
    if !(2..=3).contains(&m_levels) {
        return Err(Failure::Config("--m-levels must be 2 or 3".into()));
    }
    let orders = time_study(dt_levels, seed)?;
    let errors = space_study(m_levels)?;
    let time_ok = orders.iter().all(|o| *o >= MIN_TIME_ORDER);
    let space_ok = errors.windows(2).all(|w| w[0].1 >= MIN_SPACE_DROP * w[1].1 || w[1].1 < 1e-12);
    println!(
        "time orders {}: {}",
        if time_ok { "ok" } else { "LOW" },
        orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")
    );
    println!("spatial drop {}", if space_ok { "ok" } else { "INSUFFICIENT" });
    if time_ok && space_ok {
        Ok(())
    } else {
        Err(Failure::Verify("refinement study below the expected rates".into()))
    }
}
