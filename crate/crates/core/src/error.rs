use thiserror::Error;

use crate::layout::MAX_GRID_3D;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("expected {expected} periods, got {got}")]
    ExtentCount { expected: usize, got: usize },
    #[error("period must be positive and finite, got {0}")]
    Extent(f64),
    #[error("grid size must be even and at least 4, got {0}")]
    GridSize(usize),
    #[error("3-D grids are limited to {MAX_GRID_3D} points per axis, got {0}")]
    TooLarge3d(usize),
    #[error("n_grid = {n_grid} cannot dealias m_cut = {m_cut}: need m_cut >= 1 and n_grid > 3 m_cut")]
    Aliasing { n_grid: usize, m_cut: usize },
    #[error("field holds {got} values, layout expects {expected}")]
    Size { expected: usize, got: usize },
    #[error("field holds {got} components, layout expects {expected}")]
    Components { expected: usize, got: usize },
}

/// A physical parameter outside its admissible range.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{name} = {value}: {requirement}")]
pub struct ParameterError {
    pub name: &'static str,
    pub value: f64,
    pub requirement: &'static str,
}

impl ParameterError {
    pub(crate) fn new(name: &'static str, value: f64, requirement: &'static str) -> Self {
        Self {
            name,
            value,
            requirement,
        }
    }
}

/// Rejected input data (initial fields, samples).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("negative value {value} at grid index {index}")]
    Negative { index: usize, value: f64 },
    #[error("non-finite value at grid index {index}")]
    NonFinite { index: usize },
    #[error("value {value} at grid index {index} exceeds the density cap {cap}")]
    AboveCap { index: usize, value: f64, cap: f64 },
    #[error(transparent)]
    Parameter(#[from] ParameterError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("density {value} at grid index {index} is not strictly positive")]
    NonPositiveDensity { index: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("time step {dt:.3e} exceeds the stability limit {stable:.3e}")]
    TooLarge { dt: f64, stable: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}
