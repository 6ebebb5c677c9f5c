// Index loops mirror the math over axes; negated comparisons reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod constitutive;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod galerkin;
pub mod integrator;
pub mod io;
pub mod layout;
pub mod monitor;
pub mod oracle;
pub mod params;
pub mod presets;
pub mod spectral;
pub mod state;


pub use error::{DataError, LayoutError, NumericError, ParameterError, SolverError, StepError};
pub use field::{GridField, Spectrum, TensorGrid, VectorGrid, VectorSpectrum};
pub use galerkin::Model;
pub use layout::SpectralLayout;
pub use params::Params;
pub use spectral::Spectral;
pub use state::SimState;
