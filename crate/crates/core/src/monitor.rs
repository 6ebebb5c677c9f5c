//! Running diagnostics over a simulation.
//!
//! A [`Monitor`] consumes every accepted step, keeps the cumulative energy
//! defect `E(t) − E(0) + ∫₀ᵗ D` (trapezoid rule over all steps) and the worst
//! invariant residuals, and records one [`Row`] per cadence tick.

use std::fmt::Write as _;

use crate::diagnostics::{
    energy, norm_tracks, state_report, Baseline, EnergyLedger, InvariantReport, NormTracks, Tolerances, Violation,
};
use crate::galerkin::Model;
use crate::integrator::StepEvent;
use crate::state::SimState;

/// CSV columns ahead of the norm tracks.
pub const BASE_COLUMNS: [&str; 15] = [
    "t",
    "dt",
    "E_kin",
    "E_int",
    "E_pot",
    "E_total",
    "D_visc",
    "D_chem",
    "energy_defect",
    "mass_drift",
    "rho_phi_drift",
    "rho_min",
    "rho_max",
    "div_resid",
    "mu_resid",
];

/// Every CSV column in order.
pub fn columns() -> Vec<&'static str> {
    BASE_COLUMNS.iter().chain(NormTracks::NAMES.iter()).copied().collect()
}

/// The fixed CSV header line, without a trailing newline.
pub fn csv_header() -> String {
    columns().join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub step: usize,
    pub dt: f64,
    pub energy: EnergyLedger,
    /// Cumulative, signed.
    pub energy_defect: f64,
    pub mass_drift: f64,
    pub rho_phi_drift: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub div_resid: f64,
    pub mu_resid: f64,
    pub norms: NormTracks,
}

impl Row {
    fn new(step: usize, dt: f64, energy: EnergyLedger, defect: f64, report: &InvariantReport, norms: NormTracks) -> Self {
        Self {
            step,
            dt,
            energy,
            energy_defect: defect,
            mass_drift: report.mass_drift,
            rho_phi_drift: report.rho_phi_drift,
            rho_min: report.rho_min,
            rho_max: report.rho_max,
            div_resid: report.div_resid,
            mu_resid: report.mu_resid,
            norms,
        }
    }

    pub fn t(&self) -> f64 {
        self.energy.t
    }

    /// Values in [`columns`] order.
    pub fn values(&self) -> Vec<f64> {
        let e = &self.energy;
        let mut v = vec![
            e.t,
            self.dt,
            e.kinetic,
            e.interfacial,
            e.potential,
            e.total(),
            e.viscous,
            e.chemical,
            self.energy_defect,
            self.mass_drift,
            self.rho_phi_drift,
            self.rho_min,
            self.rho_max,
            self.div_resid,
            self.mu_resid,
        ];
        v.extend(self.norms.values());
        v
    }

    /// Shortest round-trip formatting, so equal rows give equal bytes.
    pub fn csv_line(&self) -> String {
        let mut line = String::new();
        for (i, v) in self.values().iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            write!(line, "{v:e}").expect("writing to a String");
        }
        line
    }
}

/// Worst values seen over all observed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub steps: usize,
    pub initial_energy: f64,
    /// Largest `E(tₙ₊₁) − E(tₙ)` over single steps; negative when `E` falls
    /// every step.
    pub max_energy_rise: f64,
    pub max_abs_defect: f64,
    pub max_div_resid: f64,
    pub max_mass_drift: f64,
    pub max_rho_phi_drift: f64,
    pub max_mu_resid: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub bounds_ok: bool,
    /// Componentwise maximum of the norm tracks over all steps.
    pub norm_ceiling: NormTracks,
    pub first_violation: Option<(usize, Violation)>,
    pub violation_count: usize,
}

impl Summary {
    pub fn ok(&self) -> bool {
        self.violation_count == 0
    }
}

#[derive(Debug, Clone)]
pub struct Monitor {
    baseline: Baseline,
    tol: Tolerances,
    prev_energy: EnergyLedger,
    dissipated: f64,
    track_norms_every_step: bool,
    summary: Summary,
    rows: Vec<Row>,
}

impl Monitor {
    /// Starts from `state`, which also supplies the baseline, and records its
    /// row.
    pub fn new(model: &Model, state: &SimState, tol: Tolerances) -> Self {
        Self::with_baseline(model, state, Baseline::of(model, state), tol)
    }

    /// Starts from `state` with drifts measured against an earlier baseline
    /// (a resumed run). The energy defect restarts at zero.
    pub fn with_baseline(model: &Model, state: &SimState, baseline: Baseline, tol: Tolerances) -> Self {
        let e = energy(model, state);
        let report = state_report(model, &baseline, state, &tol);
        let norms = norm_tracks(model, state);
        let summary = Summary {
            steps: 0,
            initial_energy: e.total(),
            max_energy_rise: f64::NEG_INFINITY,
            max_abs_defect: 0.0,
            max_div_resid: report.div_resid,
            max_mass_drift: report.mass_drift,
            max_rho_phi_drift: report.rho_phi_drift,
            max_mu_resid: report.mu_resid,
            rho_min: report.rho_min,
            rho_max: report.rho_max,
            bounds_ok: report.rho_bounds_ok,
            norm_ceiling: norms,
            first_violation: report.violations.first().cloned().map(|v| (0, v)),
            violation_count: report.violations.len(),
        };
        Self {
            baseline,
            tol,
            prev_energy: e,
            dissipated: 0.0,
            track_norms_every_step: false,
            rows: vec![Row::new(0, 0.0, e, 0.0, &report, norms)],
            summary,
        }
    }

    /// Evaluates the norm tracks at every step rather than only on ticks, so
    /// the ceiling covers the whole trajectory.
    pub fn track_norms_every_step(mut self, on: bool) -> Self {
        self.track_norms_every_step = on;
        self
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn summary(&self) -> &Summary {
        &self.summary
    }

    pub fn last_row(&self) -> &Row {
        self.rows.last().expect("the initial row is always present")
    }

    /// Folds one accepted step in and returns its residual report.
    pub fn observe(&mut self, model: &Model, event: &StepEvent<'_>) -> InvariantReport {
        let curr = event.curr;
        let e = energy(model, curr);
        let dt = e.t - self.prev_energy.t;
        self.dissipated += 0.5 * dt * (self.prev_energy.dissipation() + e.dissipation());
        let defect = e.total() - self.summary.initial_energy + self.dissipated;
        let mut report = state_report(model, &self.baseline, curr, &self.tol);
        report.energy_defect = defect;

        let s = &mut self.summary;
        s.steps += 1;
        s.max_energy_rise = s.max_energy_rise.max(e.total() - self.prev_energy.total());
        s.max_abs_defect = s.max_abs_defect.max(defect.abs());
        s.max_div_resid = s.max_div_resid.max(report.div_resid);
        s.max_mass_drift = s.max_mass_drift.max(report.mass_drift);
        s.max_rho_phi_drift = s.max_rho_phi_drift.max(report.rho_phi_drift);
        s.max_mu_resid = s.max_mu_resid.max(report.mu_resid);
        s.rho_min = s.rho_min.min(report.rho_min);
        s.rho_max = s.rho_max.max(report.rho_max);
        s.bounds_ok &= report.rho_bounds_ok;
        if s.first_violation.is_none() {
            s.first_violation = report.violations.first().cloned().map(|v| (event.step, v));
        }
        s.violation_count += report.violations.len();

        if event.tick || self.track_norms_every_step {
            let norms = norm_tracks(model, curr);
            s.norm_ceiling = s.norm_ceiling.max(&norms);
            if event.tick {
                self.rows.push(Row::new(event.step, event.dt, e, defect, &report, norms));
            }
        }
        self.prev_energy = e;
        report
    }

    /// Header plus one line per recorded row.
    pub fn csv(&self) -> String {
        let mut out = csv_header();
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{run, StepControls};
    use crate::params::Params;
    use crate::presets::{prepare, Preset};
    use crate::{Spectral, SpectralLayout};

    fn spinodal(n: usize, m: usize) -> (Model, SimState) {
        let sp = Spectral::new(SpectralLayout::new(2, n, m).unwrap());
        let params = Params::new(2.8, 0.5, 1.5, 2.0, 0.1, 2.0).unwrap();
        prepare(Preset::Spinodal, sp, params, 3).unwrap()
    }

    #[test]
    fn zero_step_run_has_header_and_initial_row() {
        let (m, s) = spinodal(16, 5);
        let mon = Monitor::new(&m, &s, Tolerances::default());
        let csv = mon.csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], csv_header());
        assert_eq!(lines[0].split(',').count(), 21);
        assert!(lines[1].starts_with("0e0,0e0,"));
    }

    #[test]
    fn energy_columns_sum_to_total() {
        let (m, s) = spinodal(16, 5);
        let mut mon = Monitor::new(&m, &s, Tolerances::default());
        let controls = StepControls {
            t_end: 1e-3,
            cadence: 2,
            ..Default::default()
        };
        run(&m, s, &controls, &mut |ev| {
            mon.observe(&m, ev);
            true
        })
        .unwrap();
        assert!(mon.rows().len() > 2);
        for line in mon.csv().lines().skip(1) {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            let sum = v[2] + v[3] + v[4];
            assert!((sum - v[5]).abs() <= 1e-14 * v[5].abs());
        }
    }

    #[test]
    fn spinodal_energy_decreases_and_invariants_hold() {
        let (m, s) = spinodal(16, 5);
        let mut mon = Monitor::new(&m, &s, Tolerances::default()).track_norms_every_step(true);
        let controls = StepControls {
            t_end: 5e-3,
            ..Default::default()
        };
        let out = run(&m, s, &controls, &mut |ev| {
            mon.observe(&m, ev);
            true
        })
        .unwrap();
        assert!(out.blowup.is_none());
        let sum = mon.summary();
        assert_eq!(sum.steps, out.log.len());
        assert!(sum.ok(), "{:?}", sum.first_violation);
        assert!(sum.max_energy_rise <= 1e-5 * sum.initial_energy);
        let energies: Vec<f64> = mon.rows().iter().map(|r| r.energy.total()).collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-5 * sum.initial_energy));
        assert!(sum.max_abs_defect <= 1e-4 * sum.initial_energy);
    }

    #[test]
    fn csv_is_deterministic() {
        let go = || {
            let (m, s) = spinodal(16, 5);
            let mut mon = Monitor::new(&m, &s, Tolerances::default());
            let controls = StepControls {
                t_end: 5e-4,
                ..Default::default()
            };
            run(&m, s, &controls, &mut |ev| {
                mon.observe(&m, ev);
                true
            })
            .unwrap();
            mon.csv()
        };
        assert_eq!(go(), go());
    }
}
