//! Pressure recovery from a checkpoint behind `nsch pressure`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nsch::checkpoint::read_checkpoint;
use nsch::io::write_atomic;
use nsch::{Model, Params, Spectral, SpectralLayout};

use crate::failure::Failure;
use crate::run::{model_for, Overrides};

#[derive(Debug, clap::Args)]
pub struct PressureArgs {
    /// Checkpoint to analyse.
    #[arg(value_name = "CHECKPOINT")]
    pub checkpoint: PathBuf,
    /// Configuration of the run that wrote the checkpoint; without it the
    /// default parameters apply, with `p` and `delta` taken from the header.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Also write the pressure samples as `x y [z] P` columns to DIR/pressure.txt.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// Integrability exponent `2p/(3p − 4)` of the pressure gradient, finite for
/// `p > 4/3`.
pub fn gradient_exponent(p: f64) -> Option<f64> {
    (3.0 * p > 4.0).then(|| 2.0 * p / (3.0 * p - 4.0))
}

pub fn execute(args: &PressureArgs) -> Result<(), Failure> {
    let ck = read_checkpoint(&args.checkpoint)
        .map_err(|e| Failure::Checkpoint(format!("{}: {e}", args.checkpoint.display())))?;
    let h = &ck.header;
    let model = match &args.config {
        Some(_) => {
            let cfg = Overrides {
                config: args.config.clone(),
                ..Default::default()
            }
            .load()?;
            model_for(&cfg)?.0
        }
        None => {
            let defaults = Params::default();
            let params = Params::new(
                h.p,
                defaults.viscosity.lower(),
                defaults.viscosity.upper(),
                1.0,
                h.delta,
                defaults.rho_cap,
            )?;
            Model::new(Spectral::new(SpectralLayout::new(h.dim, h.n_grid, h.m_cut)?), params)
        }
    };
    ck.check_against(model.layout(), model.params())?;

    let pressure = model.recover_pressure(&ck.state)?;
    let (resid, scale) = model.helmholtz_residual(&pressure);
    let sp = model.spectral();
    let layout = sp.layout();
    let dv = layout.cell_volume();
    let p_grid = sp.inverse(&pressure.p)?;
    let grad = sp.gradient_grid(&pressure.p);
    let l2 = (p_grid.values.iter().map(|v| v * v).sum::<f64>() * dv).sqrt();
    let norm_at = |i: usize| grad.comps.iter().map(|c| c.values[i].powi(2)).sum::<f64>().sqrt();
    let grad_l2 = ((0..layout.len()).map(|i| norm_at(i).powi(2)).sum::<f64>() * dv).sqrt();

    println!("checkpoint         {} (t = {:.6e})", args.checkpoint.display(), h.t);
    println!("|P|_2              {l2:.6e}");
    println!("|P|_inf            {:.6e}", p_grid.max_abs());
    println!("|grad P|_2         {grad_l2:.6e}");
    match gradient_exponent(h.p) {
        Some(q) => {
            let lq = ((0..layout.len()).map(|i| norm_at(i).powf(q)).sum::<f64>() * dv).powf(1.0 / q);
            println!("|grad P|_q         {lq:.6e} (q = {q:.4})");
        }
        None => println!("|grad P|_q         undefined for p <= 4/3"),
    }
    let rel = if scale > 0.0 { resid / scale } else { resid };
    println!("helmholtz residual {rel:.3e}");
    if l2 == 0.0 {
        println!("P is identically zero");
    }
    if let Some(dir) = &args.out {
        write_field(dir, &model, &p_grid.values)?;
    }
    Ok(())
}

fn write_field(dir: &Path, model: &Model, values: &[f64]) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let layout = model.layout();
    let axes = ["x", "y", "z"];
    let mut out = format!("# {} P\n", axes[..layout.dim()].join(" "));
    for (i, v) in values.iter().enumerate() {
        let x = layout.position(i);
        for c in &x[..layout.dim()] {
            write!(out, "{c:e} ").expect("writing to a String");
        }
        writeln!(out, "{v:e}").expect("writing to a String");
    }
    let path = dir.join("pressure.txt");
    write_atomic(&path, out.as_bytes())?;
    println!("wrote              {}", path.display());
    Ok(())
}
