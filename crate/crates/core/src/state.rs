use crate::density::DensityField;
use crate::field::{GridField, Spectrum, VectorGrid, VectorSpectrum};
use crate::spectral::Spectral;

/// Density on the grid plus the retained-band coefficients of `u`, `φ`, `μ`.
///
/// `a` is solenoidal and `c` is the chemical potential solved from `(b, ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub rho: DensityField,
    pub a: VectorSpectrum,
    pub b: Spectrum,
    pub c: Spectrum,
    pub t: f64,
}

impl SimState {
    pub fn velocity(&self, spectral: &Spectral) -> VectorGrid {
        spectral.inverse_vector(&self.a).expect("state sized by layout")
    }

    pub fn phase(&self, spectral: &Spectral) -> GridField {
        spectral.inverse(&self.b).expect("state sized by layout")
    }

    pub fn chemical_potential(&self, spectral: &Spectral) -> GridField {
        spectral.inverse(&self.c).expect("state sized by layout")
    }

    pub fn all_finite(&self) -> bool {
        self.rho.values.all_finite()
            && self.a.all_finite()
            && self.b.all_finite()
            && self.c.all_finite()
            && self.t.is_finite()
    }
}
