//! Run configuration in a line-based `key = value` text format.
//!
//! `#` starts a comment that runs to the end of the line. Every key is
//! optional, may appear at most once and defaults as listed in
//! [`RunConfig::default`]. `m_cut = auto` picks the largest cutoff the
//! two-thirds rule allows, `dt = auto` selects the stable step every step and
//! `max_steps = none` removes the step cap.
//!
//! ```text
//! # spinodal decomposition, 32² grid
//! n_grid = 32
//! m_cut = 10
//! nu_lower = 0.5
//! nu_upper = 1.5
//! delta = 0.1
//! t_end = 0.05
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::error::ParameterError;
use crate::integrator::StepControls;
use crate::layout::SpectralLayout;
use crate::params::{DensityMode, Params, Physics};
use crate::presets::Preset;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n_grid: usize,
    /// `None` is the largest dealiased cutoff for `n_grid`.
    pub m_cut: Option<usize>,
    pub p: f64,
    pub nu_lower: f64,
    pub nu_upper: f64,
    pub nu_shape: f64,
    pub delta: f64,
    pub rho_cap: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub potential: bool,
    pub stress: bool,
    pub capillary: bool,
    pub convection: bool,
    pub density_mode: DensityMode,
    pub preset: Preset,
    pub seed: u64,
    pub t_end: f64,
    /// `None` selects the stable step every step.
    pub dt: Option<f64>,
    pub cfl_adv: f64,
    pub cfl_diff: f64,
    pub max_steps: Option<usize>,
    pub splitting: bool,
    /// One CSV row every this many steps.
    pub output_every: usize,
    /// A checkpoint every this many steps; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            n_grid: 64,
            m_cut: None,
            p: 2.8,
            nu_lower: 1.0,
            nu_upper: 1.0,
            nu_shape: 1.0,
            delta: 0.05,
            rho_cap: 2.0,
            cg_tol: 1e-11,
            cg_max_iter: 500,
            potential: true,
            stress: true,
            capillary: true,
            convection: true,
            density_mode: DensityMode::Transported,
            preset: Preset::Spinodal,
            seed: 0,
            t_end: 0.01,
            dt: None,
            cfl_adv: 0.5,
            cfl_diff: 0.25,
            max_steps: None,
            splitting: false,
            output_every: 10,
            checkpoint_every: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Every key in serialization order.
pub const KEYS: [&str; 27] = [
    "dim",
    "n_grid",
    "m_cut",
    "p",
    "nu_lower",
    "nu_upper",
    "nu_shape",
    "delta",
    "rho_cap",
    "cg_tol",
    "cg_max_iter",
    "potential",
    "stress",
    "capillary",
    "convection",
    "density_mode",
    "preset",
    "seed",
    "t_end",
    "dt",
    "cfl_adv",
    "cfl_diff",
    "max_steps",
    "splitting",
    "output_every",
    "checkpoint_every",
    "out_dir",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigErrorKind {
    #[error("expected `key = value`")]
    Syntax,
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("{key}: cannot parse `{value}` as {expected}")]
    Value {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("{key} = {value}: {requirement}")]
    Range {
        key: String,
        value: String,
        requirement: String,
    },
}

/// A rejected configuration, with the 1-based line at fault when the
/// offending key was given explicitly.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub kind: ConfigErrorKind,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.kind),
            None => write!(f, "{} (default value)", self.kind),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<T, ConfigErrorKind> {
    value.parse().map_err(|_| ConfigErrorKind::Value {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigErrorKind> {
    let v: f64 = parse_value(key, value, "a number")?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigErrorKind::Value {
            key: key.to_string(),
            value: value.to_string(),
            expected: "a finite number",
        })
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigErrorKind> {
    parse_value(key, value, "true or false")
}

fn parse_optional<T: FromStr>(
    key: &str,
    value: &str,
    none: &str,
    expected: &'static str,
) -> Result<Option<T>, ConfigErrorKind> {
    if value == none {
        Ok(None)
    } else {
        parse_value(key, value, expected).map(Some)
    }
}

fn density_mode_name(mode: DensityMode) -> &'static str {
    match mode {
        DensityMode::Transported => "transported",
        DensityMode::Frozen => "frozen",
    }
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigErrorKind> {
        match key {
            "dim" => self.dim = parse_value(key, value, "2 or 3")?,
            "n_grid" => self.n_grid = parse_value(key, value, "an integer")?,
            "m_cut" => self.m_cut = parse_optional(key, value, "auto", "an integer or `auto`")?,
            "p" => self.p = parse_f64(key, value)?,
            "nu_lower" => self.nu_lower = parse_f64(key, value)?,
            "nu_upper" => self.nu_upper = parse_f64(key, value)?,
            "nu_shape" => self.nu_shape = parse_f64(key, value)?,
            "delta" => self.delta = parse_f64(key, value)?,
            "rho_cap" => self.rho_cap = parse_f64(key, value)?,
            "cg_tol" => self.cg_tol = parse_f64(key, value)?,
            "cg_max_iter" => self.cg_max_iter = parse_value(key, value, "an integer")?,
            "potential" => self.potential = parse_bool(key, value)?,
            "stress" => self.stress = parse_bool(key, value)?,
            "capillary" => self.capillary = parse_bool(key, value)?,
            "convection" => self.convection = parse_bool(key, value)?,
            "density_mode" => {
                self.density_mode = match value {
                    "transported" => DensityMode::Transported,
                    "frozen" => DensityMode::Frozen,
                    _ => {
                        return Err(ConfigErrorKind::Value {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "`transported` or `frozen`",
                        })
                    }
                }
            }
            "preset" => self.preset = parse_value(key, value, "a preset name")?,
            "seed" => self.seed = parse_value(key, value, "an unsigned integer")?,
            "t_end" => self.t_end = parse_f64(key, value)?,
            "dt" => {
                self.dt = if value == "auto" {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                }
            }
            "cfl_adv" => self.cfl_adv = parse_f64(key, value)?,
            "cfl_diff" => self.cfl_diff = parse_f64(key, value)?,
            "max_steps" => self.max_steps = parse_optional(key, value, "none", "an integer or `none`")?,
            "splitting" => self.splitting = parse_bool(key, value)?,
            "output_every" => self.output_every = parse_value(key, value, "an integer")?,
            "checkpoint_every" => self.checkpoint_every = parse_value(key, value, "an integer")?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(ConfigErrorKind::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Range checks; the error names the key at fault.
    pub fn validate(&self) -> Result<(), ConfigErrorKind> {
        fn range(key: &str, value: impl fmt::Display, requirement: impl Into<String>) -> ConfigErrorKind {
            ConfigErrorKind::Range {
                key: key.to_string(),
                value: value.to_string(),
                requirement: requirement.into(),
            }
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(range("dim", self.dim, "must be 2 or 3"));
        }
        if self.p <= 1.0 {
            return Err(range("p", self.p, "requires p > 1"));
        }
        if self.delta <= 0.0 {
            return Err(range("delta", self.delta, "requires delta > 0"));
        }
        if self.nu_lower <= 0.0 {
            return Err(range("nu_lower", self.nu_lower, "requires nu_lower > 0"));
        }
        if self.nu_upper < self.nu_lower {
            return Err(range("nu_upper", self.nu_upper, "requires nu_upper >= nu_lower"));
        }
        if self.nu_shape <= 0.0 {
            return Err(range("nu_shape", self.nu_shape, "requires nu_shape > 0"));
        }
        if self.rho_cap <= 0.0 {
            return Err(range("rho_cap", self.rho_cap, "requires rho_cap > 0"));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(range("cg_tol", self.cg_tol, "must lie in (0, 1)"));
        }
        if self.cg_max_iter == 0 {
            return Err(range("cg_max_iter", 0, "must be at least 1"));
        }
        if self.t_end < 0.0 {
            return Err(range("t_end", self.t_end, "must be non-negative"));
        }
        if let Some(dt) = self.dt {
            if dt <= 0.0 {
                return Err(range("dt", dt, "must be positive"));
            }
        }
        for (key, v) in [("cfl_adv", self.cfl_adv), ("cfl_diff", self.cfl_diff)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(range(key, v, "must lie in (0, 1]"));
            }
        }
        if self.output_every == 0 {
            return Err(range("output_every", 0, "must be at least 1"));
        }
        let out = self.out_dir.to_string_lossy();
        if out.is_empty() || out.contains('#') || out.trim() != out || out.contains('\n') {
            return Err(range(
                "out_dir",
                &out,
                "must be non-empty, without `#`, newlines or surrounding blanks",
            ));
        }
        if let Err(e) = self.layout() {
            let key = if self.m_cut.is_some() && !matches!(e, crate::error::LayoutError::TooLarge3d(_)) {
                "m_cut"
            } else {
                "n_grid"
            };
            let value = if key == "m_cut" {
                self.m_cut.map_or("auto".to_string(), |m| m.to_string())
            } else {
                self.n_grid.to_string()
            };
            return Err(range(key, value, e.to_string()));
        }
        if self.preset == Preset::Manufactured && self.dim != 2 {
            return Err(range("preset", self.preset, "the manufactured preset needs dim = 2"));
        }
        Ok(())
    }

    pub fn effective_m_cut(&self) -> usize {
        self.m_cut.unwrap_or_else(|| SpectralLayout::default_m_cut(self.n_grid))
    }

    pub fn layout(&self) -> Result<SpectralLayout, crate::error::LayoutError> {
        SpectralLayout::new(self.dim, self.n_grid, self.effective_m_cut())
    }

    pub fn params(&self) -> Result<Params, ParameterError> {
        let mut params = Params::new(self.p, self.nu_lower, self.nu_upper, self.nu_shape, self.delta, self.rho_cap)?;
        params.cg_tol = self.cg_tol;
        params.cg_max_iter = self.cg_max_iter;
        params.physics = Physics {
            potential: self.potential,
            stress: self.stress,
            capillary: self.capillary,
            convection: self.convection,
        };
        params.density_mode = self.density_mode;
        Ok(params)
    }

    pub fn controls(&self) -> StepControls {
        StepControls {
            dt: self.dt,
            cfl_adv: self.cfl_adv,
            cfl_diff: self.cfl_diff,
            t_end: self.t_end,
            max_steps: self.max_steps.unwrap_or(usize::MAX),
            cadence: self.output_every,
            splitting: self.splitting,
        }
    }

    /// Every key, one per line, in [`KEYS`] order. Values round-trip exactly.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>, none: &str| v.unwrap_or_else(|| none.to_string());
        let values: [(&str, String); 27] = [
            ("dim", self.dim.to_string()),
            ("n_grid", self.n_grid.to_string()),
            ("m_cut", opt(self.m_cut.map(|m| m.to_string()), "auto")),
            ("p", number(self.p)),
            ("nu_lower", number(self.nu_lower)),
            ("nu_upper", number(self.nu_upper)),
            ("nu_shape", number(self.nu_shape)),
            ("delta", number(self.delta)),
            ("rho_cap", number(self.rho_cap)),
            ("cg_tol", number(self.cg_tol)),
            ("cg_max_iter", self.cg_max_iter.to_string()),
            ("potential", self.potential.to_string()),
            ("stress", self.stress.to_string()),
            ("capillary", self.capillary.to_string()),
            ("convection", self.convection.to_string()),
            ("density_mode", density_mode_name(self.density_mode).to_string()),
            ("preset", self.preset.to_string()),
            ("seed", self.seed.to_string()),
            ("t_end", number(self.t_end)),
            ("dt", opt(self.dt.map(number), "auto")),
            ("cfl_adv", number(self.cfl_adv)),
            ("cfl_diff", number(self.cfl_diff)),
            ("max_steps", opt(self.max_steps.map(|v| v.to_string()), "none")),
            ("splitting", self.splitting.to_string()),
            ("output_every", self.output_every.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("out_dir", self.out_dir.to_string_lossy().into_owned()),
        ];
        values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Shortest round-trip form, scientific outside `[1e-4, 1e6)`.
fn number(v: f64) -> String {
    if v == 0.0 || (1e-4..1e6).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |kind| ConfigError { line: Some(line), kind };
        let (key, value) = content.split_once('=').ok_or_else(|| err(ConfigErrorKind::Syntax))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(err(ConfigErrorKind::Syntax));
        }
        if seen.insert(key.to_string(), line).is_some() {
            return Err(err(ConfigErrorKind::Duplicate(key.to_string())));
        }
        cfg.set(key, value).map_err(err)?;
    }
    cfg.validate().map_err(|kind| {
        let line = match &kind {
            ConfigErrorKind::Range { key, .. } => seen.get(key).copied(),
            _ => None,
        };
        ConfigError { line, kind }
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.dim, 2);
        assert_eq!(cfg.n_grid, 64);
        assert_eq!(cfg.p, 2.8);
        assert_eq!(cfg.delta, 0.05);
        assert_eq!((cfg.nu_lower, cfg.nu_upper), (1.0, 1.0));
        assert_eq!(cfg.effective_m_cut(), 21);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let cfg = parse_config("# header\n\n  n_grid = 32   # trailing\nm_cut=10\n").unwrap();
        assert_eq!((cfg.n_grid, cfg.m_cut), (32, Some(10)));
    }

    #[test]
    fn range_error_cites_the_line() {
        let err = parse_config("n_grid = 32\np = 0.5\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let msg = err.to_string();
        assert!(msg.starts_with("line 2:"), "{msg}");
        assert!(msg.contains("p > 1"), "{msg}");
    }

    #[test]
    fn unknown_duplicate_and_malformed_lines_are_rejected() {
        let e = parse_config("n_grid = 32\nviscosity = 2\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(matches!(e.kind, ConfigErrorKind::UnknownKey(ref k) if k == "viscosity"));
        let e = parse_config("p = 2\np = 3\n").unwrap_err();
        assert_eq!((e.line, e.kind), (Some(2), ConfigErrorKind::Duplicate("p".into())));
        let e = parse_config("\n\njust words\n").unwrap_err();
        assert_eq!((e.line, e.kind), (Some(3), ConfigErrorKind::Syntax));
        let e = parse_config("delta = small\n").unwrap_err();
        assert!(matches!(e.kind, ConfigErrorKind::Value { .. }));
        let e = parse_config("delta = nan\n").unwrap_err();
        assert!(matches!(e.kind, ConfigErrorKind::Value { .. }));
    }

    #[test]
    fn physical_ranges_are_enforced() {
        for (text, key) in [
            ("delta = 0", "delta"),
            ("nu_lower = -1", "nu_lower"),
            ("rho_cap = 0", "rho_cap"),
            ("n_grid = 16\nm_cut = 6", "m_cut"),
            ("dim = 3\nn_grid = 64", "n_grid"),
            ("dim = 4", "dim"),
            ("dim = 3\nn_grid = 16\npreset = manufactured", "preset"),
        ] {
            let e = parse_config(text).unwrap_err();
            assert!(
                matches!(e.kind, ConfigErrorKind::Range { key: ref k, .. } if k == key),
                "{text}: {e}"
            );
            assert!(e.line.is_some(), "{text}: {e}");
        }
    }

    #[test]
    fn conversions_carry_every_setting() {
        let cfg = parse_config("n_grid = 32\nm_cut = 8\nstress = false\ndensity_mode = frozen\ndt = 1e-4\n").unwrap();
        assert_eq!(cfg.layout().unwrap().m_cut(), 8);
        let params = cfg.params().unwrap();
        assert!(!params.physics.stress);
        assert_eq!(params.density_mode, DensityMode::Frozen);
        assert_eq!(cfg.controls().dt, Some(1e-4));
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        let grid = (prop_oneof![Just(2usize), Just(3)], 2usize..=8)
            .prop_flat_map(|(dim, half)| (Just(dim), Just(2 * half), prop::option::of(1..=(2 * half - 1) / 3)));
        let physics = (1.0001f64..6.0, 1e-3f64..10.0, 0.0f64..5.0, 1e-3f64..10.0, 1e-6f64..1.0, 1e-3f64..100.0);
        let flags = prop::array::uniform4(any::<bool>());
        let run = (
            0usize..4,
            any::<u64>(),
            0.0f64..10.0,
            prop::option::of(1e-9f64..1.0),
            1e-3f64..=1.0,
            1e-3f64..=1.0,
            prop::option::of(0usize..100_000),
            any::<bool>(),
            1usize..1000,
            0usize..1000,
            "[a-z][a-z0-9_/.]{0,12}",
        );
        (grid, physics, flags, any::<bool>(), 1e-14f64..0.5, 1usize..2000, run).prop_map(
            |((dim, n_grid, m_cut), (p, nl, nd, shape, delta, cap), f, frozen, cg_tol, cg_max, r)| {
                let preset = Preset::ALL[r.0];
                RunConfig {
                    dim,
                    n_grid,
                    m_cut,
                    p,
                    nu_lower: nl,
                    nu_upper: nl + nd,
                    nu_shape: shape,
                    delta,
                    rho_cap: cap,
                    cg_tol,
                    cg_max_iter: cg_max,
                    potential: f[0],
                    stress: f[1],
                    capillary: f[2],
                    convection: f[3],
                    density_mode: if frozen { DensityMode::Frozen } else { DensityMode::Transported },
                    preset: if dim == 3 && preset == Preset::Manufactured { Preset::Spinodal } else { preset },
                    seed: r.1,
                    t_end: r.2,
                    dt: r.3,
                    cfl_adv: r.4,
                    cfl_diff: r.5,
                    max_steps: r.6,
                    splitting: r.7,
                    output_every: r.8,
                    checkpoint_every: r.9,
                    out_dir: PathBuf::from(r.10),
                }
            },
        )
    }

    proptest! {
        #[test]
        fn serialization_round_trips(cfg in arb_config()) {
            let text = cfg.to_text();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_text(), text);
        }

        #[test]
        fn arbitrary_text_never_panics(text in "[ -~\n]{0,200}") {
            let _ = parse_config(&text);
        }
    }
}
