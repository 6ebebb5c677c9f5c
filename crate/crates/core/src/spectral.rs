//! Grid/coefficient transforms and the Fourier-diagonal operators.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::LayoutError;
use crate::field::{GridField, Spectrum, TensorGrid, VectorGrid, VectorSpectrum};
use crate::layout::SpectralLayout;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Transform engine bound to one [`SpectralLayout`].
///
/// All methods are pure; the engine is cheap to clone and can be shared
/// across threads.
#[derive(Clone)]
pub struct Spectral {
    layout: Arc<SpectralLayout>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("layout", &self.layout)
            .finish_non_exhaustive()
    }
}

impl Spectral {
    pub fn new(layout: SpectralLayout) -> Self {
        Self::from_shared(Arc::new(layout))
    }

    pub fn from_shared(layout: Arc<SpectralLayout>) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(layout.n_grid());
        let inverse = planner.plan_fft_inverse(layout.n_grid());
        Self {
            layout,
            forward,
            inverse,
        }
    }

    pub fn layout(&self) -> &SpectralLayout {
        &self.layout
    }

    pub fn shared_layout(&self) -> Arc<SpectralLayout> {
        Arc::clone(&self.layout)
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn len(&self) -> usize {
        self.layout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layout.is_empty()
    }

    fn check_len(&self, got: usize) -> Result<(), LayoutError> {
        if got == self.len() {
            Ok(())
        } else {
            Err(LayoutError::Size {
                expected: self.len(),
                got,
            })
        }
    }

    /// In-place multidimensional FFT with the given 1-D plan.
    fn transform(&self, buf: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.layout.n_grid();
        let dim = self.layout.dim();
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        // Last axis is contiguous.
        plan.process_with_scratch(buf, &mut scratch);
        if dim == 1 {
            return;
        }
        let len = buf.len();
        let mut lines = vec![ZERO; len];
        for axis in 0..dim - 1 {
            let stride = n.pow((dim - 1 - axis) as u32);
            let outer = len / (n * stride);
            for o in 0..outer {
                for r in 0..stride {
                    let line = (o * stride + r) * n;
                    let base = o * n * stride + r;
                    for t in 0..n {
                        lines[line + t] = buf[base + t * stride];
                    }
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            for o in 0..outer {
                for r in 0..stride {
                    let line = (o * stride + r) * n;
                    let base = o * n * stride + r;
                    for t in 0..n {
                        buf[base + t * stride] = lines[line + t];
                    }
                }
            }
        }
    }

    /// Grid samples to amplitude-normalized coefficients.
    pub fn forward(&self, f: &GridField) -> Result<Spectrum, LayoutError> {
        self.check_len(f.len())?;
        let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        let scale = 1.0 / self.len() as f64;
        for c in &mut buf {
            *c *= scale;
        }
        Ok(Spectrum { coeffs: buf })
    }

    /// Coefficients to grid samples (real part).
    pub fn inverse(&self, f: &Spectrum) -> Result<GridField, LayoutError> {
        self.check_len(f.len())?;
        let mut buf = f.coeffs.clone();
        self.transform(&mut buf, &self.inverse);
        Ok(GridField {
            values: buf.into_iter().map(|c| c.re).collect(),
        })
    }

    /// Transforms two real fields with one complex FFT.
    pub(crate) fn forward_pair(&self, f: &GridField, g: &GridField) -> (Spectrum, Spectrum) {
        let len = self.len();
        let mut buf: Vec<Complex64> = f
            .values
            .iter()
            .zip(&g.values)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        self.transform(&mut buf, &self.forward);
        let scale = 0.5 / len as f64;
        let layout = &self.layout;
        let mut fs = Spectrum::zeros(len);
        let mut gs = Spectrum::zeros(len);
        for i in 0..len {
            let j = layout.negated(i);
            let z = buf[i];
            let zc = buf[j].conj();
            fs.coeffs[i] = (z + zc) * scale;
            gs.coeffs[i] = (z - zc) * Complex64::new(0.0, -scale);
        }
        (fs, gs)
    }

    /// Inverse transform of two spectra of real fields with one complex FFT.
    pub(crate) fn inverse_pair(&self, f: &Spectrum, g: &Spectrum) -> (GridField, GridField) {
        let mut buf: Vec<Complex64> = f
            .coeffs
            .iter()
            .zip(&g.coeffs)
            .map(|(a, b)| a + Complex64::new(-b.im, b.re))
            .collect();
        self.transform(&mut buf, &self.inverse);
        let (re, im) = buf.iter().map(|c| (c.re, c.im)).unzip();
        (GridField { values: re }, GridField { values: im })
    }

    pub(crate) fn inverse_many(&self, spectra: &[&Spectrum]) -> Vec<GridField> {
        let mut out = Vec::with_capacity(spectra.len());
        for chunk in spectra.chunks(2) {
            if let [f, g] = chunk {
                let (a, b) = self.inverse_pair(f, g);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.inverse(chunk[0]).expect("spectrum sized by layout"));
            }
        }
        out
    }

    pub(crate) fn forward_many(&self, fields: &[&GridField]) -> Vec<Spectrum> {
        let mut out = Vec::with_capacity(fields.len());
        for chunk in fields.chunks(2) {
            if let [f, g] = chunk {
                let (a, b) = self.forward_pair(f, g);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.forward(chunk[0]).expect("field sized by layout"));
            }
        }
        out
    }

    pub fn forward_vector(&self, v: &VectorGrid) -> Result<VectorSpectrum, LayoutError> {
        self.check_components(v.dim())?;
        for c in &v.comps {
            self.check_len(c.len())?;
        }
        let refs: Vec<&GridField> = v.comps.iter().collect();
        Ok(VectorSpectrum {
            comps: self.forward_many(&refs),
        })
    }

    pub fn inverse_vector(&self, v: &VectorSpectrum) -> Result<VectorGrid, LayoutError> {
        self.check_components(v.dim())?;
        for c in &v.comps {
            self.check_len(c.len())?;
        }
        let refs: Vec<&Spectrum> = v.comps.iter().collect();
        Ok(VectorGrid {
            comps: self.inverse_many(&refs),
        })
    }

    fn check_components(&self, got: usize) -> Result<(), LayoutError> {
        if got == self.dim() {
            Ok(())
        } else {
            Err(LayoutError::Components {
                expected: self.dim(),
                got,
            })
        }
    }

    /// `∂_axis f` in coefficient space.
    pub fn partial(&self, f: &Spectrum, axis: usize) -> Spectrum {
        let coeffs = f
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * Complex64::new(0.0, self.layout.wavevector(i)[axis]))
            .collect();
        Spectrum { coeffs }
    }

    pub fn gradient(&self, f: &Spectrum) -> VectorSpectrum {
        VectorSpectrum {
            comps: (0..self.dim()).map(|a| self.partial(f, a)).collect(),
        }
    }

    pub fn divergence(&self, v: &VectorSpectrum) -> Spectrum {
        let mut out = Spectrum::zeros(self.len());
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let k = self.layout.wavevector(i);
            for (axis, comp) in v.comps.iter().enumerate() {
                *c += comp.coeffs[i] * Complex64::new(0.0, k[axis]);
            }
        }
        out
    }

    pub fn laplacian(&self, f: &Spectrum) -> Spectrum {
        let coeffs = f
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * -self.layout.k_squared(i))
            .collect();
        Spectrum { coeffs }
    }

    /// Velocity gradient `G_ij = ∂_j u_i` on the grid.
    pub fn velocity_gradient(&self, u: &VectorSpectrum) -> TensorGrid {
        let d = self.dim();
        let partials: Vec<Spectrum> = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| self.partial(&u.comps[i], j))
            .collect();
        let refs: Vec<&Spectrum> = partials.iter().collect();
        let mut out = TensorGrid::zeros(d, self.len());
        out.comps = self.inverse_many(&refs);
        out
    }

    /// Symmetric gradient `𝔻u = ½(∇u + ∇uᵗ)` on the grid.
    pub fn sym_gradient(&self, u: &VectorSpectrum) -> TensorGrid {
        symmetric_part(&self.velocity_gradient(u))
    }

    /// Orthogonal projection onto divergence-free fields, mode by mode.
    pub fn leray_project(&self, v: &VectorSpectrum) -> VectorSpectrum {
        let mut out = v.clone();
        self.leray_in_place(&mut out);
        out
    }

    pub fn leray_in_place(&self, v: &mut VectorSpectrum) {
        let d = self.dim();
        for i in 0..self.len() {
            let k2 = self.layout.k_squared(i);
            if k2 == 0.0 {
                continue;
            }
            let k = self.layout.wavevector(i);
            let mut kv = ZERO;
            for a in 0..d {
                kv += v.comps[a].coeffs[i] * k[a];
            }
            let s = kv / k2;
            for a in 0..d {
                v.comps[a].coeffs[i] -= s * k[a];
            }
        }
    }

    /// Zeroes every mode outside the retained band.
    pub fn dealias(&self, f: &Spectrum) -> Spectrum {
        let mut out = f.clone();
        self.dealias_in_place(&mut out);
        out
    }

    pub fn dealias_in_place(&self, f: &mut Spectrum) {
        for (c, keep) in f.coeffs.iter_mut().zip(self.layout.retained_mask()) {
            if !keep {
                *c = ZERO;
            }
        }
    }

    /// Replaces `f̂(k)` by `½(f̂(k) + conj f̂(-k))`, the coefficients of the
    /// real part of the represented field.
    pub fn symmetrize_in_place(&self, f: &mut Spectrum) {
        let layout = &self.layout;
        for i in 0..f.len() {
            let j = layout.negated(i);
            if j < i {
                continue;
            }
            let avg = 0.5 * (f.coeffs[i] + f.coeffs[j].conj());
            f.coeffs[i] = avg;
            f.coeffs[j] = avg.conj();
        }
    }

    pub fn dealias_vector(&self, v: &mut VectorSpectrum) {
        for c in &mut v.comps {
            self.dealias_in_place(c);
        }
    }

    /// `max_k |k·v̂(k)|`.
    pub fn max_divergence_mode(&self, v: &VectorSpectrum) -> (usize, f64) {
        let mut worst = (0, 0.0);
        for i in 0..self.len() {
            let k = self.layout.wavevector(i);
            let mut kv = ZERO;
            for (a, comp) in v.comps.iter().enumerate() {
                kv += comp.coeffs[i] * k[a];
            }
            if kv.norm() > worst.1 {
                worst = (i, kv.norm());
            }
        }
        worst
    }

    /// Dealiased divergence of a grid tensor, `(div T)_i = ∂_j T_ij`.
    pub fn tensor_divergence(&self, t: &TensorGrid) -> VectorSpectrum {
        let d = self.dim();
        let refs: Vec<&GridField> = t.comps.iter().collect();
        let mut hats = self.forward_many(&refs);
        for h in &mut hats {
            self.dealias_in_place(h);
        }
        let mut out = VectorSpectrum::zeros(d, self.len());
        for i in 0..d {
            for j in 0..d {
                let dj = self.partial(&hats[i * d + j], j);
                out.comps[i].axpy(1.0, &dj);
            }
        }
        out
    }

    /// Pointwise `Σ_j v_j ∂_j f` on the grid, with `∇f` supplied.
    pub fn advective_derivative(v: &VectorGrid, grad_f: &VectorGrid) -> GridField {
        let len = v.comps[0].len();
        let mut out = GridField::zeros(len);
        for (vc, gc) in v.comps.iter().zip(&grad_f.comps) {
            for ((o, a), b) in out.values.iter_mut().zip(&vc.values).zip(&gc.values) {
                *o += a * b;
            }
        }
        out
    }

    pub fn gradient_grid(&self, f: &Spectrum) -> VectorGrid {
        let parts: Vec<Spectrum> = (0..self.dim()).map(|a| self.partial(f, a)).collect();
        let refs: Vec<&Spectrum> = parts.iter().collect();
        VectorGrid {
            comps: self.inverse_many(&refs),
        }
    }
}

/// Pointwise symmetric part of a square tensor field.
pub fn symmetric_part(g: &TensorGrid) -> TensorGrid {
    let d = g.dim();
    let len = g.comps[0].len();
    let mut out = TensorGrid::zeros(d, len);
    for i in 0..d {
        *out.get_mut(i, i) = g.get(i, i).clone();
        for j in (i + 1)..d {
            let vals: Vec<f64> = g
                .get(i, j)
                .values
                .iter()
                .zip(&g.get(j, i).values)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            out.get_mut(i, j).values = vals.clone();
            out.get_mut(j, i).values = vals;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn engine(dim: usize, n: usize, m: usize) -> Spectral {
        Spectral::new(SpectralLayout::new(dim, n, m).unwrap())
    }

    fn random_band(sp: &Spectral, rng: &mut ChaCha8Rng) -> GridField {
        let mut s = Spectrum::zeros(sp.len());
        for &i in sp.layout().retained() {
            s.coeffs[i] = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        // Symmetrize through a real round trip.
        let g = sp.inverse(&s).unwrap();
        let mut h = sp.forward(&g).unwrap();
        sp.dealias_in_place(&mut h);
        sp.inverse(&h).unwrap()
    }

    #[test]
    fn constant_and_cosine_coefficients() {
        let sp = engine(2, 16, 5);
        let one = sp.forward(&GridField::constant(sp.len(), 1.0)).unwrap();
        assert!((one.coeffs[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(one.coeffs[1..].iter().all(|c| c.norm() < 1e-15));

        let cos = GridField::from_fn(sp.layout(), |x| x[0].cos());
        let c = sp.forward(&cos).unwrap();
        for i in 0..sp.len() {
            let m = sp.layout().mode(i);
            let expected = if m[0].abs() == 1 && m[1] == 0 { 0.5 } else { 0.0 };
            assert!((c.coeffs[i] - Complex64::new(expected, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn size_mismatch_is_reported() {
        let sp = engine(2, 8, 2);
        assert_eq!(
            sp.forward(&GridField::zeros(10)),
            Err(LayoutError::Size {
                expected: 64,
                got: 10
            })
        );
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (dim, n, m) in [(2, 32, 10), (3, 16, 5)] {
            let sp = engine(dim, n, m);
            let f = random_band(&sp, &mut rng);
            let back = sp.inverse(&sp.forward(&f).unwrap()).unwrap();
            let err = f
                .values
                .iter()
                .zip(&back.values)
                .fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
            assert!(err <= 1e-13 * f.max_abs(), "round trip error {err}");
            let mean_sq = f.values.iter().map(|v| v * v).sum::<f64>() / f.len() as f64;
            let coeff_sq = sp.forward(&f).unwrap().dot(&sp.forward(&f).unwrap());
            assert!((mean_sq - coeff_sq).abs() <= 1e-12 * mean_sq);
        }
    }

    #[test]
    fn paired_transforms_match_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sp = engine(2, 16, 5);
        let f = GridField {
            values: (0..sp.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let g = GridField {
            values: (0..sp.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let (fs, gs) = sp.forward_pair(&f, &g);
        let fs1 = sp.forward(&f).unwrap();
        let gs1 = sp.forward(&g).unwrap();
        for i in 0..sp.len() {
            assert!((fs.coeffs[i] - fs1.coeffs[i]).norm() < 1e-14);
            assert!((gs.coeffs[i] - gs1.coeffs[i]).norm() < 1e-14);
        }
        let (f2, g2) = sp.inverse_pair(&fs1, &gs1);
        for i in 0..sp.len() {
            assert!((f2.values[i] - f.values[i]).abs() < 1e-13);
            assert!((g2.values[i] - g.values[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn derivatives_of_cosine() {
        let sp = engine(2, 16, 5);
        let c = sp.forward(&GridField::from_fn(sp.layout(), |x| x[0].cos())).unwrap();
        let grad = sp.gradient_grid(&c);
        let lap = sp.inverse(&sp.laplacian(&c)).unwrap();
        for i in 0..sp.len() {
            let x = sp.layout().position(i);
            assert!((grad.comps[0].values[i] + x[0].sin()).abs() < 1e-14);
            assert!(grad.comps[1].values[i].abs() < 1e-14);
            assert!((lap.values[i] + x[0].cos()).abs() < 1e-14);
        }
        let konst = sp.forward(&GridField::constant(sp.len(), 3.0)).unwrap();
        assert!(sp.gradient(&konst).norm() < 1e-15);
    }

    #[test]
    fn laplacian_is_div_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sp = engine(2, 32, 10);
        let f = sp.forward(&random_band(&sp, &mut rng)).unwrap();
        let a = sp.laplacian(&f);
        let b = sp.divergence(&sp.gradient(&f));
        let mut d = a.clone();
        d.axpy(-1.0, &b);
        assert!(d.max_abs() <= 1e-13 * a.max_abs().max(1.0));
    }

    #[test]
    fn shear_symmetric_gradient() {
        let sp = engine(2, 16, 5);
        let u = VectorGrid {
            comps: vec![
                GridField::from_fn(sp.layout(), |x| x[1].sin()),
                GridField::zeros(sp.len()),
            ],
        };
        let d = sp.sym_gradient(&sp.forward_vector(&u).unwrap());
        for i in 0..sp.len() {
            let x = sp.layout().position(i);
            assert!(d.get(0, 0).values[i].abs() < 1e-14);
            assert!(d.get(1, 1).values[i].abs() < 1e-14);
            assert!((d.get(0, 1).values[i] - 0.5 * x[1].cos()).abs() < 1e-14);
        }
        assert_eq!(d.max_asymmetry(), 0.0);

        let konst = VectorGrid {
            comps: vec![GridField::constant(sp.len(), 2.0), GridField::constant(sp.len(), -1.0)],
        };
        let dk = sp.sym_gradient(&sp.forward_vector(&konst).unwrap());
        assert!(dk.comps.iter().all(|c| c.max_abs() < 1e-15));
    }

    #[test]
    fn leray_annihilates_gradients_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (dim, n, m) in [(2, 32, 10), (3, 16, 5)] {
            let sp = engine(dim, n, m);
            let g = sp.forward(&random_band(&sp, &mut rng)).unwrap();
            let grad = sp.gradient(&g);
            assert!(sp.leray_project(&grad).norm() <= 1e-14 * grad.norm());

            let v = VectorSpectrum {
                comps: (0..dim)
                    .map(|_| sp.forward(&random_band(&sp, &mut rng)).unwrap())
                    .collect(),
            };
            let p1 = sp.leray_project(&v);
            let p2 = sp.leray_project(&p1);
            let mut diff = p2.clone();
            diff.axpy(-1.0, &p1);
            assert!(diff.norm() <= 1e-13 * v.norm());
            let (_, worst) = sp.max_divergence_mode(&p1);
            assert!(worst <= 1e-13 * v.norm());
            assert!(sp.divergence(&p1).max_abs() <= 1e-13 * v.norm());
        }
    }

    #[test]
    fn dealias_cuts_above_band() {
        let sp = engine(2, 32, 10);
        let inside = sp.forward(&GridField::from_fn(sp.layout(), |x| (10.0 * x[0]).cos())).unwrap();
        let mut diff = sp.dealias(&inside);
        diff.axpy(-1.0, &inside);
        assert!(diff.max_abs() <= 1e-15);
        let outside = sp.forward(&GridField::from_fn(sp.layout(), |x| (11.0 * x[1]).sin())).unwrap();
        assert!(sp.dealias(&outside).max_abs() <= 1e-15);
    }

    #[test]
    fn dealiased_product_matches_dense_quadrature() {
        // cos(m x)^2 = 1/2 + cos(2 m x)/2; only the mean survives the cutoff.
        let sp = engine(2, 32, 10);
        let m = 10.0;
        let prod = GridField::from_fn(sp.layout(), |x| (m * x[0]).cos() * (m * x[0]).cos());
        let kept = sp.inverse(&sp.dealias(&sp.forward(&prod).unwrap())).unwrap();

        // Reference: retained-band projection by direct quadrature on a fine grid.
        let fine = 256;
        let h = 2.0 * std::f64::consts::PI / fine as f64;
        for &flat in sp.layout().retained() {
            let mode = sp.layout().mode(flat);
            if mode[1] != 0 {
                continue;
            }
            let k = mode[0] as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..fine {
                let x = j as f64 * h;
                acc += Complex64::from_polar(1.0, -k * x) * ((m * x).cos() * (m * x).cos());
            }
            acc /= fine as f64;
            let fast = sp.forward(&kept).unwrap().coeffs[flat];
            assert!((fast - acc).norm() <= 1e-12, "mode {mode:?}");
        }
    }
}
