use std::path::{Path, PathBuf};

use nsch::checkpoint::{read_checkpoint, write_checkpoint};
use nsch::config::{parse_config, RunConfig};
use nsch::diagnostics::Tolerances;
use nsch::integrator::run;
use nsch::io::write_atomic;
use nsch::monitor::Monitor;
use nsch::presets::prepare;
use nsch::{Model, SimState, Spectral};

use crate::failure::Failure;

/// Flags shared by every simulation-driven subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Configuration file (`key = value` lines); defaults apply otherwise.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed of the initial-condition generator.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn load(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()
            .map_err(|e| Failure::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Write a checkpoint every N steps (0: only the final state).
    #[arg(long, value_name = "N")]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long, value_name = "PATH")]
    pub resume: Option<PathBuf>,
}

pub fn model_for(cfg: &RunConfig) -> Result<(Model, SimState), Failure> {
    let sp = Spectral::new(cfg.layout()?);
    Ok(prepare(cfg.preset, sp, cfg.params()?, cfg.seed)?)
}

fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("checkpoint_{step:08}.nsch"))
}

pub fn execute(args: &RunArgs) -> Result<(), Failure> {
    let mut cfg = args.overrides.load()?;
    if let Some(every) = args.checkpoint_every {
        cfg.checkpoint_every = every;
    }
    let (model, fresh) = model_for(&cfg)?;
    let (state0, baseline, offset) = match &args.resume {
        Some(path) => {
            let ck = read_checkpoint(path).map_err(|e| Failure::Checkpoint(format!("{}: {e}", path.display())))?;
            ck.check_against(model.layout(), model.params())?;
            (ck.state, Some(ck.baseline), ck.steps)
        }
        None => (fresh, None, 0),
    };

    let out = cfg.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
    write_atomic(&out.join("config.txt"), cfg.to_text().as_bytes())?;

    let tol = Tolerances::default();
    let mut monitor = match baseline {
        Some(b) => Monitor::with_baseline(&model, &state0, b, tol),
        None => Monitor::new(&model, &state0, tol),
    };
    let mut controls = cfg.controls();
    controls.max_steps = controls.max_steps.saturating_sub(offset as usize);
    let every = cfg.checkpoint_every as u64;
    let mut io_error = None;
    let outcome = run(&model, state0, &controls, &mut |ev| {
        monitor.observe(&model, ev);
        let global = offset + ev.step as u64;
        if every > 0 && global.is_multiple_of(every) {
            let path = checkpoint_path(&out, global);
            if let Err(e) = write_checkpoint(&path, model.layout(), model.params(), ev.curr, monitor.baseline(), global) {
                io_error = Some(e);
                return false;
            }
        }
        true
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }

    let steps = offset + outcome.log.len() as u64;
    let final_state = match &outcome.blowup {
        Some(b) => &b.last_valid,
        None => &outcome.state,
    };
    write_checkpoint(
        &out.join("final.nsch"),
        model.layout(),
        model.params(),
        final_state,
        monitor.baseline(),
        steps,
    )?;
    write_atomic(&out.join("diagnostics.csv"), monitor.csv().as_bytes())?;

    let s = monitor.summary();
    let last = monitor.last_row();
    println!("preset        {}", cfg.preset);
    println!("steps         {steps}");
    println!("t             {:.6e}", final_state.t);
    println!("energy        {:.6e} -> {:.6e}", s.initial_energy, last.energy.total());
    println!("max |defect|  {:.3e}", s.max_abs_defect);
    println!("mass drift    {:.3e}", s.max_mass_drift);
    println!("rho*phi drift {:.3e}", s.max_rho_phi_drift);
    println!("density       [{:.6e}, {:.6e}]", s.rho_min, s.rho_max);
    match &s.first_violation {
        None => println!("invariants    ok"),
        Some((step, v)) => println!("invariants    {} violation(s), first at step {step}: {v}", s.violation_count),
    }
    println!("output        {}", out.display());
    match outcome.blowup {
        Some(b) => Err(Failure::from(b.error.clone()).with_context(&b.to_string())),
        None => Ok(()),
    }
}

impl Failure {
    fn with_context(self, ctx: &str) -> Self {
        match self {
            Self::Numeric(_) => Self::Numeric(ctx.to_string()),
            Self::Solver(_) => Self::Solver(ctx.to_string()),
            other => other,
        }
    }
}
