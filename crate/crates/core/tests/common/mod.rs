//! Dense-matrix oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use mol::linops::{ComplexImage, LinearOperatorSpec, Measurement, OperatorVariant};
use mol::net::{NetworkConfig, NetworkWeights};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Complex matrix of `A`, built from the textbook DFT / coil formulas.
pub fn complex_matrix(op: &LinearOperatorSpec) -> DMatrix<Complex64> {
    let (h, w) = op.shape();
    let n = h * w;
    let s = op.normalization();
    let dft_row = |k: usize| {
        let (kr, kc) = (k / w, k % w);
        DVector::from_fn(n, |p, _| {
            let (r, c) = (p / w, p % w);
            let phase = -2.0 * PI * ((kr * r) as f64 / h as f64 + (kc * c) as f64 / w as f64);
            Complex64::from_polar(1.0 / (n as f64).sqrt(), phase)
        })
    };
    match op.variant() {
        OperatorVariant::Identity => DMatrix::identity(n, n) * Complex64::new(s, 0.0),
        OperatorVariant::MaskedFourier(mask) => {
            let idx = mask.sampled_indices();
            DMatrix::from_fn(idx.len(), n, |i, p| dft_row(idx[i])[p] * s)
        }
        OperatorVariant::DenseGaussian { rows, matrix, .. } => {
            DMatrix::from_row_slice(*rows, n, matrix) * Complex64::new(s, 0.0)
        }
        OperatorVariant::MultiCoilMaskedFourier { mask, coils } => {
            let idx = mask.sampled_indices();
            let m = idx.len();
            DMatrix::from_fn(coils.len() * m, n, |i, p| {
                let (c, j) = (i / m, i % m);
                dft_row(idx[j])[p] * coils[c].data()[p] * s
            })
        }
    }
}

/// Real `2r x 2n` representation acting on `[re; im]` stacks.
pub fn realify(a: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, n) = a.shape();
    DMatrix::from_fn(2 * r, 2 * n, |i, j| {
        let z = a[(i % r, j % n)];
        match (i < r, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

pub fn real_matrix(op: &LinearOperatorSpec) -> DMatrix<f64> {
    realify(&complex_matrix(op))
}

pub fn image_vec(x: &ComplexImage) -> DVector<f64> {
    DVector::from_vec(x.to_channels())
}

pub fn vec_image(v: &DVector<f64>, h: usize, w: usize) -> ComplexImage {
    ComplexImage::from_channels(h, w, v.as_slice()).unwrap()
}

pub fn measurement_vec(b: &Measurement) -> DVector<f64> {
    let d = b.data();
    DVector::from_iterator(2 * d.len(), d.iter().map(|z| z.re).chain(d.iter().map(|z| z.im)))
}

/// Real matrix of the per-pixel channel map `[[m00, m01], [m10, m11]]`.
pub fn pixel_mix_matrix(m: [[f64; 2]; 2], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * n, 2 * n, |i, j| if i % n == j % n { m[i / n][j / n] } else { 0.0 })
}

/// Dense transcription of one forward-backward step for a linear `H` given as a
/// real matrix: `Q^{-1}((1 - a) x + a H x + a l A^H b)`.
pub fn dense_step(
    a_real: &DMatrix<f64>,
    h_real: &DMatrix<f64>,
    x: &DVector<f64>,
    b: &DVector<f64>,
    alpha: f64,
    lambda: f64,
) -> DVector<f64> {
    let n = x.len();
    let q = DMatrix::identity(n, n) + a_real.transpose() * a_real * (alpha * lambda);
    let rhs = x * (1.0 - alpha) + h_real * x * alpha + a_real.transpose() * b * (alpha * lambda);
    q.lu().solve(&rhs).unwrap()
}

/// Fixed point of the map for linear `H`: `(lambda A^H A + I - H) x = lambda A^H b`.
pub fn dense_fixed_point(a_real: &DMatrix<f64>, h_real: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = h_real.nrows();
    let k = a_real.transpose() * a_real * lambda + DMatrix::identity(n, n) - h_real;
    k.lu().solve(&(a_real.transpose() * b * lambda)).unwrap()
}

pub fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(h: usize, w: usize, seed: u64) -> ComplexImage {
    ComplexImage::random_normal(h, w, &mut rng(seed))
}

/// Measurement of a random image plus a little noise.
pub fn random_problem(op: &LinearOperatorSpec, seed: u64) -> Measurement {
    let (h, w) = op.shape();
    let mut b = op.apply_forward(&random_image(h, w, seed)).unwrap();
    b.add_noise(0.01, &mut rng(seed ^ 0xabcd));
    b
}

pub fn small_net(shape: (usize, usize), channels: usize, seed: u64) -> NetworkWeights {
    let cfg = NetworkConfig {
        channels,
        image_shape: shape,
        ..NetworkConfig::default()
    };
    NetworkWeights::init(&cfg, seed).unwrap()
}
