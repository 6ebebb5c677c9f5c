//! Dense reference assembly of the Galerkin system for tiny bands.
//!
//! Every matrix entry and load is a direct sum over an independent
//! quadrature grid of `Q^d` points, with no transforms involved. The basis is
//! `e_k = e^{ik·x}` for scalars and `w_{k,s} = e^{ik·x} ê_s(k)` for velocities,
//! `ê_s(k)` an orthonormal frame of `k^⊥` (all of `ℝ^d` at `k = 0`), so each
//! matrix is Hermitian and pairings carry the factor `1/|Ω|` of the
//! amplitude-normalized coefficients.
//!
//! The density enters through its trigonometric interpolant (band `N/2`,
//! Nyquist terms split symmetrically). Integrands of the mass, coupling and
//! potential terms then have band at most `N/2 + 5m`, so any
//! `Q > N/2 + 5m` integrates them exactly. The power-law stress has no
//! finite band; its quadrature is refined by doubling `Q` until two levels
//! agree to [`STRESS_AGREEMENT`].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::constitutive::{landau_prime, stress_tensor};
use crate::field::{GridField, Spectrum, TensorGrid, VectorSpectrum};
use crate::galerkin::Model;
use crate::layout::SpectralLayout;
use crate::params::DensityMode;
use crate::state::SimState;

/// Largest band the oracle accepts.
pub const MAX_ORACLE_BAND: usize = 3;
/// Relative agreement between successive stress quadrature levels.
pub const STRESS_AGREEMENT: f64 = 1e-12;
/// Certification threshold for fast-versus-dense discrepancies.
pub const CERTIFICATION_TOL: f64 = 1e-10;
const MAX_STRESS_QUAD: usize = 1024;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);
const I: C = C::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("band {m} exceeds the oracle limit {MAX_ORACLE_BAND}")]
    BandTooLarge { m: usize },
    #[error("quadrature grid {quad_n} too coarse for exact integration; need at least {required}")]
    Quadrature { quad_n: usize, required: usize },
    #[error("stress quadrature did not settle below {MAX_STRESS_QUAD} points per axis")]
    StressQuadrature,
    #[error("mass matrix is not positive definite")]
    Singular,
    #[error("the dense stepper requires a frozen density")]
    TransportedDensity,
}

/// Retained modes and velocity frames in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBasis {
    dim: usize,
    extent: [f64; 3],
    /// Scalar modes `n` (integer wavenumbers).
    pub scalar: Vec<[i64; 3]>,
    /// Velocity basis: mode and unit polarization.
    pub vector: Vec<([i64; 3], [f64; 3])>,
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl DenseBasis {
    pub fn new(layout: &SpectralLayout) -> Result<Self, OracleError> {
        let m = layout.m_cut();
        if m > MAX_ORACLE_BAND {
            return Err(OracleError::BandTooLarge { m });
        }
        let dim = layout.dim();
        let mut extent = [1.0; 3];
        extent[..dim].copy_from_slice(layout.extent());
        let r = m as i64;
        let span = |axis: usize| if axis < dim { -r..=r } else { 0..=0 };
        let mut scalar = Vec::new();
        for a in span(0) {
            for b in span(1) {
                for c in span(2) {
                    scalar.push([a, b, c]);
                }
            }
        }
        let mut vector = Vec::new();
        for &n in &scalar {
            let mut k = [0.0; 3];
            for axis in 0..dim {
                k[axis] = 2.0 * std::f64::consts::PI * n[axis] as f64 / extent[axis];
            }
            if n == [0, 0, 0] {
                for axis in 0..dim {
                    let mut e = [0.0; 3];
                    e[axis] = 1.0;
                    vector.push((n, e));
                }
            } else if dim == 2 {
                vector.push((n, normalize([-k[1], k[0], 0.0])));
            } else {
                let helper = if n[0] == 0 && n[1] == 0 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
                let e1 = normalize(cross(k, helper));
                let e2 = normalize(cross(normalize(k), e1));
                vector.push((n, e1));
                vector.push((n, e2));
            }
        }
        Ok(Self {
            dim,
            extent,
            scalar,
            vector,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn wavevector(&self, n: [i64; 3]) -> [f64; 3] {
        let mut k = [0.0; 3];
        for axis in 0..self.dim {
            k[axis] = 2.0 * std::f64::consts::PI * n[axis] as f64 / self.extent[axis];
        }
        k
    }

    fn k_squared(&self, n: [i64; 3]) -> f64 {
        self.wavevector(n).iter().map(|k| k * k).sum()
    }

    /// Scalar coefficients in basis order.
    pub fn scalar_coords(&self, layout: &SpectralLayout, f: &Spectrum) -> DVector<C> {
        DVector::from_iterator(
            self.scalar.len(),
            self.scalar
                .iter()
                .map(|n| f.coeffs[layout.flat_of_mode(&n[..self.dim])]),
        )
    }

    pub fn scalar_spectrum(&self, layout: &SpectralLayout, x: &DVector<C>) -> Spectrum {
        let mut out = Spectrum::zeros(layout.len());
        for (n, v) in self.scalar.iter().zip(x.iter()) {
            out.coeffs[layout.flat_of_mode(&n[..self.dim])] = *v;
        }
        out
    }

    /// Velocity coordinates `α = û(k)·ê`.
    pub fn vector_coords(&self, layout: &SpectralLayout, v: &VectorSpectrum) -> DVector<C> {
        DVector::from_iterator(
            self.vector.len(),
            self.vector.iter().map(|(n, e)| {
                let flat = layout.flat_of_mode(&n[..self.dim]);
                (0..self.dim).map(|c| v.comps[c].coeffs[flat] * e[c]).sum::<C>()
            }),
        )
    }

    pub fn vector_spectrum(&self, layout: &SpectralLayout, x: &DVector<C>) -> VectorSpectrum {
        let mut out = VectorSpectrum::zeros(self.dim, layout.len());
        for ((n, e), v) in self.vector.iter().zip(x.iter()) {
            let flat = layout.flat_of_mode(&n[..self.dim]);
            for c in 0..self.dim {
                out.comps[c].coeffs[flat] += *v * e[c];
            }
        }
        out
    }
}

/// Quadrature nodes with the exponentials `e^{2πi t/Q}`.
struct Quadrature {
    q: usize,
    dim: usize,
    twiddle: Vec<C>,
}

impl Quadrature {
    fn new(q: usize, dim: usize) -> Self {
        let twiddle = (0..q)
            .map(|t| C::from_polar(1.0, 2.0 * std::f64::consts::PI * t as f64 / q as f64))
            .collect();
        Self { q, dim, twiddle }
    }

    fn points(&self) -> usize {
        self.q.pow(self.dim as u32)
    }

    fn index(&self, p: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        let mut rest = p;
        for axis in (0..self.dim).rev() {
            idx[axis] = rest % self.q;
            rest /= self.q;
        }
        idx
    }

    /// `e^{i n·x}` at node `idx`.
    fn wave(&self, n: [i64; 3], idx: [usize; 3]) -> C {
        let q = self.q as i64;
        let mut out = C::new(1.0, 0.0);
        for axis in 0..self.dim {
            let t = (n[axis] * idx[axis] as i64).rem_euclid(q) as usize;
            out *= self.twiddle[t];
        }
        out
    }

    fn weight(&self) -> f64 {
        1.0 / self.points() as f64
    }
}

/// Trigonometric interpolant of grid samples as a list of modes.
fn interpolant(layout: &SpectralLayout, f: &GridField) -> Vec<([i64; 3], C)> {
    let n = layout.n_grid() as i64;
    let dim = layout.dim();
    let len = layout.len();
    let mut out = Vec::new();
    for flat in 0..len {
        let mode = layout.mode(flat);
        // Direct DFT, independent of the fast transforms.
        let mut c = ZERO;
        for (p, v) in f.values.iter().enumerate() {
            let idx = layout.coords(p);
            let mut t = 0i64;
            for axis in 0..dim {
                t += mode[axis] * idx[axis] as i64;
            }
            let ang = -2.0 * std::f64::consts::PI * (t.rem_euclid(n)) as f64 / n as f64;
            c += C::from_polar(*v, ang);
        }
        c /= len as f64;
        let nyq: Vec<usize> = (0..dim).filter(|&a| mode[a].abs() * 2 == n).collect();
        let copies = 1usize << nyq.len();
        for mask in 0..copies {
            let mut m = mode;
            for (bit, &a) in nyq.iter().enumerate() {
                let s = n / 2;
                m[a] = if mask >> bit & 1 == 1 { -s } else { s };
            }
            out.push((m, c / copies as f64));
        }
    }
    out
}

/// Point values of the state's fields on a quadrature grid.
struct Samples {
    rho: Vec<f64>,
    phi: Vec<f64>,
    grad_phi: Vec<[f64; 3]>,
    u: Vec<[f64; 3]>,
    grad_u: Vec<[[f64; 3]; 3]>,
}

/// The interpolated density at the quadrature nodes.
fn density_samples(quad: &Quadrature, rho_modes: &[([i64; 3], C)]) -> Vec<f64> {
    (0..quad.points())
        .map(|p| {
            let idx = quad.index(p);
            rho_modes.iter().map(|(m, c)| (c * quad.wave(*m, idx)).re).sum()
        })
        .collect()
}

fn synthesize(basis: &DenseBasis, quad: &Quadrature, rho: Vec<f64>, b: &DVector<C>, a: &DVector<C>) -> Samples {
    let n = quad.points();
    let d = basis.dim;
    let mut s = Samples {
        rho,
        phi: vec![0.0; n],
        grad_phi: vec![[0.0; 3]; n],
        u: vec![[0.0; 3]; n],
        grad_u: vec![[[0.0; 3]; 3]; n],
    };
    for p in 0..n {
        let idx = quad.index(p);
        for (m, c) in basis.scalar.iter().zip(b.iter()) {
            let w = c * quad.wave(*m, idx);
            let k = basis.wavevector(*m);
            s.phi[p] += w.re;
            for axis in 0..d {
                s.grad_phi[p][axis] += (I * k[axis] * w).re;
            }
        }
        for ((m, e), c) in basis.vector.iter().zip(a.iter()) {
            let w = c * quad.wave(*m, idx);
            let k = basis.wavevector(*m);
            for i in 0..d {
                s.u[p][i] += (w * e[i]).re;
                for j in 0..d {
                    s.grad_u[p][i][j] += (I * k[j] * w * e[i]).re;
                }
            }
        }
    }
    s
}

/// Assembled objects at one state, all in [`DenseBasis`] coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSystem {
    pub basis: DenseBasis,
    pub quad_n: usize,
    pub stress_quad_n: usize,
    /// `(M₁)_{lj} = ⟨ρ w_j, w_l⟩`
    pub m1: DMatrix<C>,
    /// `(M₂)_{lj} = ⟨ρ e_j, e_l⟩`
    pub m2: DMatrix<C>,
    /// `(L₂)_{lj} = ⟨ρ e_j ∇φ, w_l⟩`
    pub l2: DMatrix<C>,
    /// `(L₃)_{lj} = −⟨ρ w_j·∇φ, e_l⟩`
    pub l3: DMatrix<C>,
    /// `(L₄)_{lj} = |k_j|² δ_{lj}`
    pub l4: DMatrix<C>,
    /// `⟨ρΨ'(φ)∇φ, w_l⟩`
    pub f1: DVector<C>,
    /// `⟨ρΨ'(φ), e_l⟩`
    pub f2: DVector<C>,
    /// `−⟨T(𝔻u), ∇w_l⟩`
    pub stress: DVector<C>,
    /// `−⟨ρ(u·∇)u, w_l⟩`
    pub convection: DVector<C>,
}

/// Smallest quadrature grid integrating the polynomial terms exactly.
pub fn required_quadrature(layout: &SpectralLayout) -> usize {
    let m = layout.m_cut();
    (layout.n_grid() / 2 + 5 * m + 1).max(8 * m + 2)
}

/// Assembles every object of the system at `state` by direct quadrature.
pub fn dense_assemble(model: &Model, state: &SimState, quad_n: usize) -> Result<DenseSystem, OracleError> {
    let layout = model.layout();
    let basis = DenseBasis::new(layout)?;
    let required = required_quadrature(layout);
    if quad_n < required {
        return Err(OracleError::Quadrature { quad_n, required });
    }
    let rho = density_samples(&Quadrature::new(quad_n, basis.dim), &interpolant(layout, &state.rho.values));
    let b = basis.scalar_coords(layout, &state.b);
    let a = basis.vector_coords(layout, &state.a);
    let mut sys = assemble_polynomial(&basis, quad_n, &rho, &b, &a);
    let (stress, stress_quad_n) = stress_load(model, &basis, quad_n, &b, &a)?;
    sys.stress = stress;
    sys.stress_quad_n = stress_quad_n;
    Ok(sys)
}

/// Everything but the stress, with `rho` sampled on the `quad_n` grid.
fn assemble_polynomial(basis: &DenseBasis, quad_n: usize, rho: &[f64], b: &DVector<C>, a: &DVector<C>) -> DenseSystem {
    let quad = Quadrature::new(quad_n, basis.dim);
    let s = synthesize(basis, &quad, rho.to_vec(), b, a);
    let d = basis.dim;
    let (ns, nv) = (basis.scalar.len(), basis.vector.len());
    let mut m1 = DMatrix::zeros(nv, nv);
    let mut m2 = DMatrix::zeros(ns, ns);
    let mut l2 = DMatrix::zeros(nv, ns);
    let mut l3 = DMatrix::zeros(ns, nv);
    let mut f1 = DVector::zeros(nv);
    let mut f2 = DVector::zeros(ns);
    let mut convection = DVector::zeros(nv);
    let mut es = vec![ZERO; ns];
    let mut ev = vec![ZERO; nv];
    for p in 0..quad.points() {
        let idx = quad.index(p);
        for (e, n) in es.iter_mut().zip(&basis.scalar) {
            *e = quad.wave(*n, idx);
        }
        for (e, (n, _)) in ev.iter_mut().zip(&basis.vector) {
            *e = quad.wave(*n, idx);
        }
        let rho = s.rho[p];
        let pot = rho * landau_prime(s.phi[p]);
        let gp = s.grad_phi[p];
        let u = s.u[p];
        let mut conv = [0.0; 3];
        for (i, c) in conv.iter_mut().enumerate().take(d) {
            *c = -rho * (0..d).map(|j| u[j] * s.grad_u[p][i][j]).sum::<f64>();
        }
        // Velocity test functions dotted with the fixed vector fields.
        let dot = |e: &[f64; 3], v: &[f64; 3]| (0..d).map(|i| e[i] * v[i]).sum::<f64>();
        for l in 0..nv {
            let (_, el) = &basis.vector[l];
            let wl = ev[l].conj();
            for j in 0..nv {
                let (_, ej) = &basis.vector[j];
                m1[(l, j)] += wl * ev[j] * (rho * dot(el, ej));
            }
            let el_gp = dot(el, &gp);
            for j in 0..ns {
                l2[(l, j)] += wl * es[j] * (rho * el_gp);
            }
            f1[l] += wl * (pot * el_gp);
            convection[l] += wl * dot(el, &conv);
        }
        for l in 0..ns {
            let el = es[l].conj();
            for j in 0..ns {
                m2[(l, j)] += el * es[j] * rho;
            }
            for j in 0..nv {
                let (_, ej) = &basis.vector[j];
                l3[(l, j)] -= el * ev[j] * (rho * dot(ej, &gp));
            }
            f2[l] += el * pot;
        }
    }
    let w = quad.weight();
    for m in [&mut m1, &mut m2, &mut l2, &mut l3] {
        *m *= C::new(w, 0.0);
    }
    for v in [&mut f1, &mut f2, &mut convection] {
        *v *= C::new(w, 0.0);
    }
    let l4 = DMatrix::from_diagonal(&DVector::from_iterator(
        ns,
        basis.scalar.iter().map(|n| C::new(basis.k_squared(*n), 0.0)),
    ));
    DenseSystem {
        basis: basis.clone(),
        quad_n,
        stress_quad_n: 0,
        m1,
        m2,
        l2,
        l3,
        l4,
        f1,
        f2,
        stress: DVector::zeros(nv),
        convection,
    }
}

/// `−⟨T(𝔻u), ∇w_l⟩` on a `q`-point grid.
fn stress_at(model: &Model, basis: &DenseBasis, q: usize, b: &DVector<C>, a: &DVector<C>) -> DVector<C> {
    let quad = Quadrature::new(q, basis.dim);
    let s = synthesize(basis, &quad, vec![0.0; quad.points()], b, a);
    let d = basis.dim;
    let n = quad.points();
    let mut du = TensorGrid::zeros(d, n);
    for p in 0..n {
        for i in 0..d {
            for j in 0..d {
                du.get_mut(i, j).values[p] = 0.5 * (s.grad_u[p][i][j] + s.grad_u[p][j][i]);
            }
        }
    }
    let phi = GridField { values: s.phi };
    let params = model.params();
    let t = stress_tensor(&du, &phi, params.p, &params.viscosity);
    let mut out = DVector::zeros(basis.vector.len());
    for p in 0..n {
        let idx = quad.index(p);
        for (l, (m, e)) in basis.vector.iter().enumerate() {
            let k = basis.wavevector(*m);
            // ∇ conj(w_l) = −i conj(w_l) ê ⊗ k
            let mut contraction = 0.0;
            for i in 0..d {
                for j in 0..d {
                    contraction += t.get(i, j).values[p] * e[i] * k[j];
                }
            }
            out[l] += quad.wave(*m, idx).conj() * (I * contraction);
        }
    }
    out * C::new(quad.weight(), 0.0)
}

fn stress_load(
    model: &Model,
    basis: &DenseBasis,
    quad_n: usize,
    b: &DVector<C>,
    a: &DVector<C>,
) -> Result<(DVector<C>, usize), OracleError> {
    let mut q = quad_n;
    let mut prev = stress_at(model, basis, q, b, a);
    while 2 * q <= MAX_STRESS_QUAD {
        q *= 2;
        let next = stress_at(model, basis, q, b, a);
        let scale = next.camax().max(f64::MIN_POSITIVE);
        if (&next - &prev).camax() <= STRESS_AGREEMENT * scale {
            return Ok((next, q));
        }
        prev = next;
    }
    Err(OracleError::StressQuadrature)
}

/// The same objects computed by the fast matrix-free path, column by column.
///
/// The fast operators act on real fields, so the image of a complex basis
/// element `e` is assembled from the real combinations `e + ē` and `i(e − ē)`.
pub fn fast_system(model: &Model, state: &SimState) -> Result<DenseSystem, OracleError> {
    let layout = model.layout();
    let basis = DenseBasis::new(layout)?;
    let sp = model.spectral();
    let rho = &state.rho.values;
    let mass = model.mass(rho).map_err(|_| OracleError::Singular)?;
    let (ns, nv) = (basis.scalar.len(), basis.vector.len());
    let d = basis.dim;

    let scalar_unit = |j: usize| -> [Spectrum; 2] {
        let flat = layout.flat_of_mode(&basis.scalar[j][..d]);
        let neg = layout.negated(flat);
        let mut re = Spectrum::zeros(layout.len());
        let mut im = Spectrum::zeros(layout.len());
        re.coeffs[flat] += 1.0;
        re.coeffs[neg] += 1.0;
        im.coeffs[flat] += I;
        im.coeffs[neg] -= I;
        [re, im]
    };
    let vector_unit = |j: usize| -> [VectorSpectrum; 2] {
        let (n, e) = basis.vector[j];
        let flat = layout.flat_of_mode(&n[..d]);
        let neg = layout.negated(flat);
        let mut re = VectorSpectrum::zeros(d, layout.len());
        let mut im = VectorSpectrum::zeros(d, layout.len());
        for c in 0..d {
            re.comps[c].coeffs[flat] += e[c];
            re.comps[c].coeffs[neg] += e[c];
            im.comps[c].coeffs[flat] += I * e[c];
            im.comps[c].coeffs[neg] -= I * e[c];
        }
        [re, im]
    };
    // A(e) = ½(A(e + ē) − i A(i(e − ē))); the zero mode has ē = e.
    let combine = |re: DVector<C>, im: DVector<C>, self_conjugate: bool| {
        if self_conjugate {
            re * C::new(0.5, 0.0)
        } else {
            (re - im * I) * C::new(0.5, 0.0)
        }
    };
    let is_zero = |n: [i64; 3]| n == [0, 0, 0];

    let mut m1 = DMatrix::zeros(nv, nv);
    let mut l3 = DMatrix::zeros(ns, nv);
    for j in 0..nv {
        let [re, im] = vector_unit(j);
        let zero = is_zero(basis.vector[j].0);
        let col = combine(
            basis.vector_coords(layout, &mass.apply_vector(&re)),
            basis.vector_coords(layout, &mass.apply_vector(&im)),
            zero,
        );
        m1.set_column(j, &col);
        let col = combine(
            basis.scalar_coords(layout, &model.apply_l3(&state.b, &re, rho)),
            basis.scalar_coords(layout, &model.apply_l3(&state.b, &im, rho)),
            zero,
        );
        l3.set_column(j, &col);
    }
    let mut m2 = DMatrix::zeros(ns, ns);
    let mut l2 = DMatrix::zeros(nv, ns);
    let mut l4 = DMatrix::zeros(ns, ns);
    for j in 0..ns {
        let [re, im] = scalar_unit(j);
        let zero = is_zero(basis.scalar[j]);
        let col = combine(
            basis.scalar_coords(layout, &mass.apply_scalar(&re)),
            basis.scalar_coords(layout, &mass.apply_scalar(&im)),
            zero,
        );
        m2.set_column(j, &col);
        let col = combine(
            basis.vector_coords(layout, &model.apply_l2(&state.b, &re, rho)),
            basis.vector_coords(layout, &model.apply_l2(&state.b, &im, rho)),
            zero,
        );
        l2.set_column(j, &col);
        let col = combine(
            basis.scalar_coords(layout, &model.apply_l4(&re)),
            basis.scalar_coords(layout, &model.apply_l4(&im)),
            zero,
        );
        l4.set_column(j, &col);
    }
    let phi = sp.inverse(&state.b).expect("state sized by layout");
    Ok(DenseSystem {
        basis: basis.clone(),
        quad_n: layout.n_grid(),
        stress_quad_n: layout.n_grid(),
        m1,
        m2,
        l2,
        l3,
        l4,
        f1: basis.vector_coords(layout, &model.potential_force(&state.b, rho)),
        f2: basis.scalar_coords(layout, &model.potential_load(&phi, rho)),
        stress: basis.vector_coords(layout, &model.stress_term(&state.a, &state.b)),
        convection: basis.vector_coords(layout, &model.convection_term(&state.a, rho)),
    })
}

/// Discrepancy of one assembled object.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancy {
    pub object: &'static str,
    /// `max|fast − dense| / max|dense|`, absolute when the dense object is 0.
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub entries: Vec<Discrepancy>,
    pub threshold: f64,
}

impl Certification {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.relative <= self.threshold)
    }

    pub fn worst(&self) -> Option<&Discrepancy> {
        self.entries
            .iter()
            .max_by(|a, b| a.relative.total_cmp(&b.relative))
    }
}

fn relative(fast: &DMatrix<C>, dense: &DMatrix<C>) -> f64 {
    let diff = (fast - dense).camax();
    let scale = dense.camax();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Per-object discrepancy between two assemblies in the same basis.
pub fn compare(fast: &DenseSystem, dense: &DenseSystem) -> Certification {
    let col = |v: &DVector<C>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
    let entries = vec![
        Discrepancy {
            object: "M1",
            relative: relative(&fast.m1, &dense.m1),
        },
        Discrepancy {
            object: "M2",
            relative: relative(&fast.m2, &dense.m2),
        },
        Discrepancy {
            object: "L2",
            relative: relative(&fast.l2, &dense.l2),
        },
        Discrepancy {
            object: "L3",
            relative: relative(&fast.l3, &dense.l3),
        },
        Discrepancy {
            object: "L4",
            relative: relative(&fast.l4, &dense.l4),
        },
        Discrepancy {
            object: "F1",
            relative: relative(&col(&fast.f1), &col(&dense.f1)),
        },
        Discrepancy {
            object: "F2",
            relative: relative(&col(&fast.f2), &col(&dense.f2)),
        },
        Discrepancy {
            object: "stress",
            relative: relative(&col(&fast.stress), &col(&dense.stress)),
        },
        Discrepancy {
            object: "convection",
            relative: relative(&col(&fast.convection), &col(&dense.convection)),
        },
    ];
    Certification {
        entries,
        threshold: CERTIFICATION_TOL,
    }
}

/// Dense assembly at the smallest exact quadrature, compared with the fast path.
pub fn certify(model: &Model, state: &SimState) -> Result<Certification, OracleError> {
    let dense = dense_assemble(model, state, required_quadrature(model.layout()))?;
    let fast = fast_system(model, state)?;
    Ok(compare(&fast, &dense))
}

/// Hermitian positive-definite solve.
fn solve(m: &DMatrix<C>, rhs: &DVector<C>) -> Result<DVector<C>, OracleError> {
    m.clone()
        .cholesky()
        .map(|c| c.solve(rhs))
        .ok_or(OracleError::Singular)
}

/// Dense reference stepper: classical RK4 on the velocity and phase
/// coordinates with the density held fixed.
pub struct DenseStepper<'a> {
    model: &'a Model,
    basis: DenseBasis,
    quad_n: usize,
    rho: Vec<f64>,
    m1: DMatrix<C>,
    m2: DMatrix<C>,
}

impl<'a> DenseStepper<'a> {
    pub fn new(model: &'a Model, rho: &GridField) -> Result<Self, OracleError> {
        if model.params().density_mode != DensityMode::Frozen {
            return Err(OracleError::TransportedDensity);
        }
        let layout = model.layout();
        let basis = DenseBasis::new(layout)?;
        let quad_n = required_quadrature(layout);
        let rho = density_samples(&Quadrature::new(quad_n, basis.dim), &interpolant(layout, rho));
        let zero_b = DVector::zeros(basis.scalar.len());
        let zero_a = DVector::zeros(basis.vector.len());
        let sys = assemble_polynomial(&basis, quad_n, &rho, &zero_b, &zero_a);
        Ok(Self {
            model,
            basis,
            quad_n,
            rho,
            m1: sys.m1,
            m2: sys.m2,
        })
    }

    pub fn basis(&self) -> &DenseBasis {
        &self.basis
    }

    /// `c` from `M₂c = L₄b + F₂`.
    pub fn chemical_potential(&self, sys: &DenseSystem, b: &DVector<C>) -> Result<DVector<C>, OracleError> {
        let mut rhs = &sys.l4 * b;
        if self.model.params().physics.potential {
            rhs += &sys.f2;
        }
        solve(&self.m2, &rhs)
    }

    /// `(a', b')` at the coordinates `(a, b)`.
    pub fn rates(&self, a: &DVector<C>, b: &DVector<C>) -> Result<(DVector<C>, DVector<C>), OracleError> {
        let mut sys = assemble_polynomial(&self.basis, self.quad_n, &self.rho, b, a);
        let physics = self.model.params().physics;
        let c = self.chemical_potential(&sys, b)?;
        let mut ra = DVector::zeros(self.basis.vector.len());
        if physics.convection {
            ra += &sys.convection;
        }
        if physics.stress {
            sys.stress = stress_load(self.model, &self.basis, self.quad_n, b, a)?.0;
            ra += &sys.stress;
        }
        if physics.capillary {
            ra += &sys.l2 * &c;
        }
        if physics.potential {
            ra -= &sys.f1;
        }
        let mut rb = -(&sys.l4 * &c);
        if physics.convection {
            rb += &sys.l3 * a;
        }
        Ok((solve(&self.m1, &ra)?, solve(&self.m2, &rb)?))
    }

    /// One RK4 step of size `dt` from `state`.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState, OracleError> {
        let layout = self.model.layout();
        let a0 = self.basis.vector_coords(layout, &state.a);
        let b0 = self.basis.scalar_coords(layout, &state.b);
        let h = C::new(dt, 0.0);
        let half = C::new(0.5 * dt, 0.0);
        let (ka1, kb1) = self.rates(&a0, &b0)?;
        let (ka2, kb2) = self.rates(&(&a0 + &ka1 * half), &(&b0 + &kb1 * half))?;
        let (ka3, kb3) = self.rates(&(&a0 + &ka2 * half), &(&b0 + &kb2 * half))?;
        let (ka4, kb4) = self.rates(&(&a0 + &ka3 * h), &(&b0 + &kb3 * h))?;
        let sixth = C::new(dt / 6.0, 0.0);
        let two = C::new(2.0, 0.0);
        let a1 = &a0 + (&ka1 + &ka2 * two + &ka3 * two + &ka4) * sixth;
        let b1 = &b0 + (&kb1 + &kb2 * two + &kb3 * two + &kb4) * sixth;
        let sys = assemble_polynomial(&self.basis, self.quad_n, &self.rho, &b1, &a1);
        let c1 = self.chemical_potential(&sys, &b1)?;
        Ok(SimState {
            rho: state.rho.clone(),
            a: self.basis.vector_spectrum(layout, &a1),
            b: self.basis.scalar_spectrum(layout, &b1),
            c: self.basis.scalar_spectrum(layout, &c1),
            t: state.t + dt,
        })
    }
}

/// One dense RK4 step; the model must hold the density fixed.
pub fn dense_step(model: &Model, state: &SimState, dt: f64) -> Result<SimState, OracleError> {
    DenseStepper::new(model, &state.rho.values)?.step(state, dt)
}
