//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `NSCH1` | 5 bytes |
//! | format version | u32 |
//! | dim, n_grid, m_cut | u32 each |
//! | t, p, δ | f64 each |
//! | initial density bounds (lo, hi) | f64 each |
//! | baseline ∫ρ, ∫ρφ, drift scale | f64 each |
//! | steps taken | u64 |
//! | ρ grid | `n_grid^dim` f64 |
//! | a, then b, then c | full coefficient boxes, re/im interleaved; `a` component-major |
//! | CRC-64/XZ of every preceding byte | u64 |
//!
//! The baseline lets a resumed run keep measuring drift against the original
//! initial state.

use std::io;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use num_complex::Complex64;
use thiserror::Error;

use crate::density::DensityField;
use crate::diagnostics::Baseline;
use crate::field::{GridField, Spectrum, VectorSpectrum};
use crate::layout::SpectralLayout;
use crate::params::Params;
use crate::state::SimState;

pub const MAGIC: &[u8; 5] = b"NSCH1";
pub const VERSION: u32 = 1;

const CRC: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
const HEADER_LEN: usize = 5 + 4 * 4 + 8 * 8 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic bytes)")]
    Magic,
    #[error("checkpoint format version {found} is not supported (expected {VERSION})")]
    Version { found: u32 },
    #[error("checkpoint is truncated or corrupt (checksum mismatch)")]
    Checksum,
    #[error("checkpoint header {field} = {found} does not match the run ({expected})")]
    Mismatch {
        field: &'static str,
        found: String,
        expected: String,
    },
    #[error("checkpoint holds an invalid layout: {0}")]
    Layout(#[from] crate::error::LayoutError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub version: u32,
    pub dim: usize,
    pub n_grid: usize,
    pub m_cut: usize,
    pub t: f64,
    pub p: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub state: SimState,
    pub baseline: Baseline,
    pub steps: u64,
}

impl Checkpoint {
    /// Refuses a checkpoint whose header disagrees with the restoring run.
    pub fn check_against(&self, layout: &SpectralLayout, params: &Params) -> Result<(), CheckpointError> {
        let h = &self.header;
        let ints = [
            ("dim", h.dim, layout.dim()),
            ("n_grid", h.n_grid, layout.n_grid()),
            ("m_cut", h.m_cut, layout.m_cut()),
        ];
        for (field, found, expected) in ints {
            if found != expected {
                return Err(CheckpointError::Mismatch {
                    field,
                    found: found.to_string(),
                    expected: expected.to_string(),
                });
            }
        }
        for (field, found, expected) in [("p", h.p, params.p.value()), ("delta", h.delta, params.delta)] {
            if found.to_bits() != expected.to_bits() {
                return Err(CheckpointError::Mismatch {
                    field,
                    found: found.to_string(),
                    expected: expected.to_string(),
                });
            }
        }
        Ok(())
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn spectrum(&mut self, s: &Spectrum) {
        for c in &s.coeffs {
            self.f64(c.re);
            self.f64(c.im);
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        head.try_into().expect("split at N")
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
    fn spectrum(&mut self, len: usize) -> Spectrum {
        Spectrum {
            coeffs: (0..len)
                .map(|_| {
                    let re = self.f64();
                    Complex64::new(re, self.f64())
                })
                .collect(),
        }
    }
}

/// Serializes a state; `baseline` and `steps` ride along for resumption.
pub fn encode(
    layout: &SpectralLayout,
    params: &Params,
    state: &SimState,
    baseline: &Baseline,
    steps: u64,
) -> Vec<u8> {
    let len = layout.len();
    let mut w = Writer(Vec::with_capacity(HEADER_LEN + 8 * len * (1 + 2 * (layout.dim() + 2)) + 8));
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    for v in [layout.dim(), layout.n_grid(), layout.m_cut()] {
        w.u32(v as u32);
    }
    for v in [state.t, params.p.value(), params.delta] {
        w.f64(v);
    }
    let (lo, hi) = state.rho.initial_bounds();
    for v in [lo, hi, baseline.mass, baseline.rho_phi, baseline.rho_phi_scale] {
        w.f64(v);
    }
    w.u64(steps);
    for &v in &state.rho.values.values {
        w.f64(v);
    }
    for comp in &state.a.comps {
        w.spectrum(comp);
    }
    w.spectrum(&state.b);
    w.spectrum(&state.c);
    let sum = CRC.checksum(&w.0);
    w.u64(sum);
    w.0
}

/// Inverse of [`encode`]; nothing is returned unless the checksum and
/// sizes agree.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::Magic);
    }
    if bytes.len() < HEADER_LEN + 8 {
        return Err(CheckpointError::Checksum);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if CRC.checksum(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
        return Err(CheckpointError::Checksum);
    }
    let mut r = Reader(&body[MAGIC.len()..]);
    let version = r.u32();
    if version != VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let (dim, n_grid, m_cut) = (r.u32() as usize, r.u32() as usize, r.u32() as usize);
    let layout = SpectralLayout::new(dim, n_grid, m_cut)?;
    let (t, p, delta) = (r.f64(), r.f64(), r.f64());
    let bounds = (r.f64(), r.f64());
    let baseline = Baseline {
        mass: r.f64(),
        rho_phi: r.f64(),
        rho_phi_scale: r.f64(),
        rho_bounds: bounds,
    };
    let steps = r.u64();
    let len = layout.len();
    if r.0.len() != 8 * len * (1 + 2 * (dim + 2)) {
        return Err(CheckpointError::Checksum);
    }
    let rho = GridField {
        values: (0..len).map(|_| r.f64()).collect(),
    };
    let a = VectorSpectrum {
        comps: (0..dim).map(|_| r.spectrum(len)).collect(),
    };
    let b = r.spectrum(len);
    let c = r.spectrum(len);
    Ok(Checkpoint {
        header: Header {
            version,
            dim,
            n_grid,
            m_cut,
            t,
            p,
            delta,
        },
        state: SimState {
            rho: DensityField::with_bounds(rho, bounds),
            a,
            b,
            c,
            t,
        },
        baseline,
        steps,
    })
}

pub fn write_checkpoint(
    path: &Path,
    layout: &SpectralLayout,
    params: &Params,
    state: &SimState,
    baseline: &Baseline,
    steps: u64,
) -> Result<(), CheckpointError> {
    crate::io::write_atomic(path, &encode(layout, params, state, baseline, steps))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}
