use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::cg::conjugate_gradient;
use super::fft::Fft2;
use super::image::ComplexImage;
use super::mask::MaskSpec;
use crate::error::{dim_err, param_err, Result};

/// Relative residual target for the inner Q-solve.
pub const CG_TOLERANCE: f64 = 1e-12;
/// Iteration cap for the inner Q-solve.
pub const CG_MAX_ITER: usize = 200;
/// Default number of synthetic receive coils.
pub const DEFAULT_COILS: usize = 4;

/// Shape of a measurement vector: `coils` blocks of `locations` samples,
/// stored coil-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementLayout {
    pub coils: usize,
    pub locations: usize,
}

impl MeasurementLayout {
    pub fn len(&self) -> usize {
        self.coils * self.locations
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Observed data `b = A(f) + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    data: Vec<Complex64>,
    layout: MeasurementLayout,
}

impl Measurement {
    pub fn new(data: Vec<Complex64>, layout: MeasurementLayout) -> Result<Self> {
        if data.len() != layout.len() {
            return dim_err(format!(
                "measurement has {} entries, layout expects {}x{}",
                data.len(),
                layout.coils,
                layout.locations
            ));
        }
        Ok(Self { data, layout })
    }

    pub fn zeros(layout: MeasurementLayout) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); layout.len()],
            layout,
        }
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn layout(&self) -> MeasurementLayout {
        self.layout
    }

    pub fn inner(&self, other: &Measurement) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Measurement) -> Measurement {
        Measurement {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            layout: self.layout,
        }
    }

    pub fn add(&self, other: &Measurement) -> Measurement {
        Measurement {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
            layout: self.layout,
        }
    }

    /// Adds i.i.d. complex Gaussian noise with per-component deviation `sigma`.
    pub fn add_noise<R: Rng + ?Sized>(&mut self, sigma: f64, rng: &mut R) {
        if sigma == 0.0 {
            return;
        }
        for z in &mut self.data {
            let n = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            *z += n * sigma;
        }
    }

    /// Views the measurement as a `coils x locations` complex image.
    pub fn to_image(&self) -> Result<ComplexImage> {
        ComplexImage::from_vec(self.layout.coils, self.layout.locations, self.data.clone())
    }

    pub fn from_image(img: &ComplexImage) -> Self {
        Self {
            data: img.data().to_vec(),
            layout: MeasurementLayout {
                coils: img.height(),
                locations: img.width(),
            },
        }
    }
}

/// The forward model family.
#[derive(Debug, Clone)]
pub enum OperatorVariant {
    Identity,
    MaskedFourier(MaskSpec),
    /// Dense complex Gaussian matrix, `rows x (H*W)` row-major.
    DenseGaussian {
        rows: usize,
        matrix: Vec<Complex64>,
        seed: u64,
    },
    MultiCoilMaskedFourier {
        mask: MaskSpec,
        coils: Vec<ComplexImage>,
    },
}

/// A linear forward model `A` with a scalar normalization, acting on
/// `height x width` images.
#[derive(Debug, Clone)]
pub struct LinearOperatorSpec {
    height: usize,
    width: usize,
    variant: OperatorVariant,
    normalization: f64,
    fft: Option<Fft2>,
    sampled: Vec<usize>,
}

impl LinearOperatorSpec {
    pub fn identity(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            variant: OperatorVariant::Identity,
            normalization: 1.0,
            fft: None,
            sampled: Vec::new(),
        }
    }

    pub fn masked_fourier(mask: MaskSpec) -> Self {
        let (h, w) = (mask.height, mask.width);
        let sampled = mask.sampled_indices();
        Self {
            height: h,
            width: w,
            variant: OperatorVariant::MaskedFourier(mask),
            normalization: 1.0,
            fft: Some(Fft2::new(h, w)),
            sampled,
        }
    }

    /// Dense operator with i.i.d. complex Gaussian entries of variance `1/rows`.
    pub fn dense_gaussian(height: usize, width: usize, rows: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0.5 / rows as f64).sqrt();
        let matrix = (0..rows * height * width)
            .map(|_| {
                Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * s
            })
            .collect();
        Self {
            height,
            width,
            variant: OperatorVariant::DenseGaussian { rows, matrix, seed },
            normalization: 1.0,
            fft: None,
            sampled: Vec::new(),
        }
    }

    pub fn multi_coil(mask: MaskSpec, coils: Vec<ComplexImage>) -> Result<Self> {
        let (h, w) = (mask.height, mask.width);
        if coils.is_empty() {
            return param_err("multi-coil operator needs at least one coil");
        }
        if coils.iter().any(|c| c.shape() != (h, w)) {
            return dim_err("coil sensitivity shape does not match mask");
        }
        let sampled = mask.sampled_indices();
        Ok(Self {
            height: h,
            width: w,
            variant: OperatorVariant::MultiCoilMaskedFourier { mask, coils },
            normalization: 1.0,
            fft: Some(Fft2::new(h, w)),
            sampled,
        })
    }

    pub fn with_normalization(mut self, normalization: f64) -> Self {
        self.normalization = normalization;
        self
    }

    /// Rescales so that the power-iteration estimate of `||A||` equals one.
    /// Zero operators are left untouched.
    pub fn normalized(self, iters: usize, seed: u64) -> Self {
        let est = spectral_norm_estimate(&self, iters, seed);
        if est > 0.0 {
            let s = self.normalization / est;
            self.with_normalization(s)
        } else {
            self
        }
    }

    pub fn variant(&self) -> &OperatorVariant {
        &self.variant
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn mask(&self) -> Option<&MaskSpec> {
        match &self.variant {
            OperatorVariant::MaskedFourier(m) => Some(m),
            OperatorVariant::MultiCoilMaskedFourier { mask, .. } => Some(mask),
            _ => None,
        }
    }

    pub fn layout(&self) -> MeasurementLayout {
        let n = self.height * self.width;
        match &self.variant {
            OperatorVariant::Identity => MeasurementLayout {
                coils: 1,
                locations: n,
            },
            OperatorVariant::MaskedFourier(_) => MeasurementLayout {
                coils: 1,
                locations: self.sampled.len(),
            },
            OperatorVariant::DenseGaussian { rows, .. } => MeasurementLayout {
                coils: 1,
                locations: *rows,
            },
            OperatorVariant::MultiCoilMaskedFourier { coils, .. } => MeasurementLayout {
                coils: coils.len(),
                locations: self.sampled.len(),
            },
        }
    }

    fn check_domain(&self, x: &ComplexImage) -> Result<()> {
        if x.shape() != (self.height, self.width) {
            return dim_err(format!(
                "operator domain is {}x{}, image is {}x{}",
                self.height,
                self.width,
                x.height(),
                x.width()
            ));
        }
        Ok(())
    }

    fn fft(&self) -> &Fft2 {
        self.fft.as_ref().expect("Fourier operator without FFT plan")
    }

    /// `A(x)`.
    pub fn apply_forward(&self, x: &ComplexImage) -> Result<Measurement> {
        self.check_domain(x)?;
        let s = self.normalization;
        let data = match &self.variant {
            OperatorVariant::Identity => x.data().iter().map(|z| z * s).collect(),
            OperatorVariant::MaskedFourier(_) => {
                let mut buf = x.data().to_vec();
                self.fft().forward(&mut buf);
                self.sampled.iter().map(|&i| buf[i] * s).collect()
            }
            OperatorVariant::DenseGaussian { rows, matrix, .. } => {
                let n = x.len();
                (0..*rows)
                    .map(|r| {
                        let row = &matrix[r * n..(r + 1) * n];
                        row.iter().zip(x.data()).map(|(a, b)| a * b).sum::<Complex64>() * s
                    })
                    .collect()
            }
            OperatorVariant::MultiCoilMaskedFourier { coils, .. } => {
                let mut out = Vec::with_capacity(coils.len() * self.sampled.len());
                let mut buf = vec![Complex64::new(0.0, 0.0); x.len()];
                for coil in coils {
                    for ((b, c), v) in buf.iter_mut().zip(coil.data()).zip(x.data()) {
                        *b = c * v;
                    }
                    self.fft().forward(&mut buf);
                    out.extend(self.sampled.iter().map(|&i| buf[i] * s));
                }
                out
            }
        };
        Measurement::new(data, self.layout())
    }

    /// `A^H(y)`.
    pub fn apply_adjoint(&self, y: &Measurement) -> Result<ComplexImage> {
        if y.layout() != self.layout() {
            return dim_err(format!(
                "measurement layout {:?} does not match operator range {:?}",
                y.layout(),
                self.layout()
            ));
        }
        let (h, w) = (self.height, self.width);
        let n = h * w;
        let s = self.normalization;
        let zero = Complex64::new(0.0, 0.0);
        let data = match &self.variant {
            OperatorVariant::Identity => y.data().iter().map(|z| z * s).collect(),
            OperatorVariant::MaskedFourier(_) => {
                let mut buf = vec![zero; n];
                for (&i, v) in self.sampled.iter().zip(y.data()) {
                    buf[i] = v * s;
                }
                self.fft().inverse(&mut buf);
                buf
            }
            OperatorVariant::DenseGaussian { rows, matrix, .. } => {
                let mut out = vec![zero; n];
                for r in 0..*rows {
                    let yr = y.data()[r] * s;
                    for (o, a) in out.iter_mut().zip(&matrix[r * n..(r + 1) * n]) {
                        *o += a.conj() * yr;
                    }
                }
                out
            }
            OperatorVariant::MultiCoilMaskedFourier { coils, .. } => {
                let m = self.sampled.len();
                let mut out = vec![zero; n];
                let mut buf = vec![zero; n];
                for (c, coil) in coils.iter().enumerate() {
                    buf.iter_mut().for_each(|b| *b = zero);
                    for (&i, v) in self.sampled.iter().zip(&y.data()[c * m..(c + 1) * m]) {
                        buf[i] = v * s;
                    }
                    self.fft().inverse(&mut buf);
                    for ((o, b), sens) in out.iter_mut().zip(&buf).zip(coil.data()) {
                        *o += sens.conj() * b;
                    }
                }
                out
            }
        };
        ComplexImage::from_vec(h, w, data)
    }

    /// `A^H A x`.
    pub fn gram(&self, x: &ComplexImage) -> Result<ComplexImage> {
        self.check_domain(x)?;
        match &self.variant {
            OperatorVariant::Identity => Ok(x.scaled(self.normalization * self.normalization)),
            OperatorVariant::MaskedFourier(mask) => {
                let s2 = self.normalization * self.normalization;
                let mut buf = x.data().to_vec();
                self.fft().forward(&mut buf);
                for (b, &keep) in buf.iter_mut().zip(&mask.pattern) {
                    *b = if keep { *b * s2 } else { Complex64::new(0.0, 0.0) };
                }
                self.fft().inverse(&mut buf);
                ComplexImage::from_vec(self.height, self.width, buf)
            }
            _ => self.apply_adjoint(&self.apply_forward(x)?),
        }
    }

    /// Solves `(I + alpha * lambda * A^H A) z = y`.
    ///
    /// Identity and single-coil masked Fourier operators are diagonal in the
    /// pixel or Fourier basis and use a closed form; other variants use
    /// conjugate gradients.
    pub fn solve_q(&self, y: &ComplexImage, alpha: f64, lambda: f64) -> Result<ComplexImage> {
        self.check_domain(y)?;
        if !(alpha >= 0.0) || !(lambda >= 0.0) {
            return param_err(format!("alpha and lambda must be non-negative (alpha={alpha}, lambda={lambda})"));
        }
        let c = alpha * lambda;
        if c == 0.0 {
            return Ok(y.clone());
        }
        let s2 = self.normalization * self.normalization;
        match &self.variant {
            OperatorVariant::Identity => Ok(y.scaled(1.0 / (1.0 + c * s2))),
            OperatorVariant::MaskedFourier(mask) => {
                let mut buf = y.data().to_vec();
                self.fft().forward(&mut buf);
                let d = 1.0 / (1.0 + c * s2);
                for (b, &keep) in buf.iter_mut().zip(&mask.pattern) {
                    if keep {
                        *b *= d;
                    }
                }
                self.fft().inverse(&mut buf);
                ComplexImage::from_vec(self.height, self.width, buf)
            }
            _ => {
                let apply = |v: &ComplexImage| {
                    let mut out = self.gram(v).expect("shape checked");
                    out.scale(c);
                    out.axpy(1.0, v);
                    out
                };
                conjugate_gradient(apply, y, CG_TOLERANCE, CG_MAX_ITER).map(|o| o.solution)
            }
        }
    }

    /// Applies `Q = I + alpha * lambda * A^H A`.
    pub fn apply_q(&self, x: &ComplexImage, alpha: f64, lambda: f64) -> Result<ComplexImage> {
        let mut out = self.gram(x)?;
        out.scale(alpha * lambda);
        out.axpy(1.0, x);
        Ok(out)
    }
}

/// Power-iteration estimate of `||A||_2` from a seeded random start.
///
/// The Rayleigh quotient of a PSD operator is nondecreasing under power
/// iteration, so for a fixed seed the estimate grows (up to round-off) with
/// `iters`. Returns 0 for the zero operator.
pub fn spectral_norm_estimate(op: &LinearOperatorSpec, iters: usize, seed: u64) -> f64 {
    let (h, w) = op.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = ComplexImage::random_normal(h, w, &mut rng);
    let n0 = v.norm();
    v.scale(1.0 / n0);
    for _ in 0..iters.max(1) {
        let g = op.gram(&v).expect("shape matches by construction");
        let gn = g.norm();
        if gn == 0.0 || !gn.is_finite() {
            return 0.0;
        }
        v = g;
        v.scale(1.0 / gn);
    }
    op.apply_forward(&v).expect("shape matches").norm()
}

/// Smooth Gaussian-bump coil sensitivities, normalized so that
/// `sum_c |s_c|^2 = 1` at every pixel.
pub fn synthetic_coil_maps(height: usize, width: usize, coils: usize) -> Vec<ComplexImage> {
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let radius = 0.5 * height.max(width) as f64;
    let sigma = 0.6 * height.max(width) as f64;
    let mut maps: Vec<ComplexImage> = (0..coils)
        .map(|c| {
            let theta = 2.0 * std::f64::consts::PI * c as f64 / coils as f64;
            let (py, px) = (cy + radius * theta.sin(), cx + radius * theta.cos());
            ComplexImage::from_fn(height, width, |r, col| {
                let (dy, dx) = (r as f64 - py, col as f64 - px);
                let mag = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
                let phase = theta + 0.5 * (dy + dx) / height.max(width) as f64;
                Complex64::from_polar(mag, phase)
            })
        })
        .collect();
    let n = height * width;
    for i in 0..n {
        let total: f64 = maps.iter().map(|m| m.data()[i].norm_sqr()).sum::<f64>().sqrt();
        for m in &mut maps {
            m.data_mut()[i] /= total;
        }
    }
    maps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::make_mask;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn identity_forward_is_flatten() {
        let x = ComplexImage::random_normal(3, 4, &mut rng(1));
        let op = LinearOperatorSpec::identity(3, 4);
        let y = op.apply_forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
        assert_eq!(op.apply_adjoint(&y).unwrap(), x);
    }

    #[test]
    fn fully_sampled_fourier_of_impulse_is_flat() {
        let op = LinearOperatorSpec::masked_fourier(MaskSpec::full(8, 8));
        let mut x = ComplexImage::zeros(8, 8);
        x.data_mut()[0] = Complex64::new(1.0, 0.0);
        let y = op.apply_forward(&x).unwrap();
        for z in y.data() {
            assert!((z.norm() - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_mask_is_zero_operator() {
        let op = LinearOperatorSpec::masked_fourier(MaskSpec::empty(8, 8));
        let x = ComplexImage::random_normal(8, 8, &mut rng(2));
        assert_eq!(op.layout().len(), 0);
        assert_eq!(op.gram(&x).unwrap().norm(), 0.0);
        let z = op.apply_adjoint(&Measurement::zeros(op.layout())).unwrap();
        assert_eq!(z.norm(), 0.0);
        assert_eq!(spectral_norm_estimate(&op, 10, 0), 0.0);
    }

    #[test]
    fn fully_sampled_gram_is_identity() {
        let op = LinearOperatorSpec::masked_fourier(MaskSpec::full(6, 10));
        let x = ComplexImage::random_normal(6, 10, &mut rng(3));
        assert!(crate::linops::relative_error(&op.gram(&x).unwrap(), &x) < 1e-13);
        assert!((spectral_norm_estimate(&op, 5, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solve_q_closed_forms() {
        let op = LinearOperatorSpec::masked_fourier(MaskSpec::full(8, 8));
        let y = ComplexImage::random_normal(8, 8, &mut rng(4));
        assert_eq!(op.solve_q(&y, 0.0, 3.0).unwrap(), y);
        let z = op.solve_q(&y, 0.5, 2.0).unwrap();
        assert!(crate::linops::relative_error(&z, &y.scaled(0.5)) < 1e-13);
        assert!(op.solve_q(&y, -1.0, 1.0).is_err());
    }

    #[test]
    fn multi_coil_q_solve_residual() {
        let mask = make_mask((16, 16), 4.0, 2.0, 7).unwrap();
        let op = LinearOperatorSpec::multi_coil(mask, synthetic_coil_maps(16, 16, 4))
            .unwrap()
            .normalized(100, 1);
        let y = ComplexImage::random_normal(16, 16, &mut rng(5));
        let z = op.solve_q(&y, 0.7, 1.3).unwrap();
        let back = op.apply_q(&z, 0.7, 1.3).unwrap();
        assert!(crate::linops::relative_error(&back, &y) < 1e-9);
    }

    #[test]
    fn coil_maps_have_unit_sum_of_squares() {
        let maps = synthetic_coil_maps(12, 9, DEFAULT_COILS);
        for i in 0..12 * 9 {
            let s: f64 = maps.iter().map(|m| m.data()[i].norm_sqr()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let op = LinearOperatorSpec::identity(4, 4);
        let x = ComplexImage::zeros(4, 5);
        assert!(op.apply_forward(&x).is_err());
        let bad = Measurement::zeros(MeasurementLayout { coils: 2, locations: 16 });
        assert!(op.apply_adjoint(&bad).is_err());
        assert!(Measurement::new(vec![], MeasurementLayout { coils: 1, locations: 2 }).is_err());
    }
}
