use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{dim_err, param_err, Result};

/// A 2D complex-valued image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexImage {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return param_err("image dimensions must be positive");
        }
        if data.len() != height * width {
            return dim_err(format!(
                "image data has {} entries, expected {}x{}",
                data.len(),
                height,
                width
            ));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let data = (0..height * width)
            .map(|i| f(i / width, i % width))
            .collect();
        Self {
            height,
            width,
            data,
        }
    }

    /// Builds an image from separate real and imaginary planes.
    pub fn from_planes(height: usize, width: usize, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != height * width || im.len() != height * width {
            return dim_err("plane length does not match image shape");
        }
        let data = re
            .iter()
            .zip(im)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        Self::from_vec(height, width, data)
    }

    /// i.i.d. standard complex Gaussian entries (unit variance per component).
    pub fn random_normal<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Self {
        let data = (0..height * width)
            .map(|_| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            })
            .collect();
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.width + col]
    }

    pub fn same_shape(&self, other: &ComplexImage) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_shape(&self, other: &ComplexImage) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            dim_err(format!(
                "image shapes differ: {:?} vs {:?}",
                self.shape(),
                other.shape()
            ))
        }
    }

    /// Complex inner product `<self, other> = sum conj(self_i) * other_i`.
    pub fn inner(&self, other: &ComplexImage) -> Complex64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Real inner product, treating the image as a vector in R^{2N}.
    pub fn real_inner(&self, other: &ComplexImage) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> ComplexImage {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &ComplexImage) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn add(&self, other: &ComplexImage) -> ComplexImage {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &ComplexImage) -> ComplexImage {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Pointwise magnitude as a real-valued complex image.
    pub fn magnitude(&self) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|z| Complex64::new(z.norm(), 0.0))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexImage {
        ComplexImage {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    /// Splits into `[re..., im...]` planes (two real channels).
    pub fn to_channels(&self) -> Vec<f64> {
        let n = self.data.len();
        let mut out = vec![0.0; 2 * n];
        for (i, z) in self.data.iter().enumerate() {
            out[i] = z.re;
            out[n + i] = z.im;
        }
        out
    }

    /// Inverse of [`to_channels`](Self::to_channels).
    pub fn from_channels(height: usize, width: usize, channels: &[f64]) -> Result<Self> {
        let n = height * width;
        if channels.len() != 2 * n {
            return dim_err(format!(
                "expected {} channel values, got {}",
                2 * n,
                channels.len()
            ));
        }
        Self::from_planes(height, width, &channels[..n], &channels[n..])
    }
}

/// Relative distance `||a - b|| / max(||b||, tiny)`.
pub fn relative_error(a: &ComplexImage, b: &ComplexImage) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    a.sub(b).norm() / denom
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_length() {
        assert!(ComplexImage::from_vec(2, 3, vec![Complex64::new(0.0, 0.0); 5]).is_err());
        assert!(ComplexImage::from_vec(0, 3, vec![]).is_err());
    }

    #[test]
    fn channel_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = ComplexImage::random_normal(4, 5, &mut rng);
        let ch = x.to_channels();
        assert_eq!(ComplexImage::from_channels(4, 5, &ch).unwrap(), x);
    }

    #[test]
    fn real_inner_is_real_part_of_complex_inner() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = ComplexImage::random_normal(3, 3, &mut rng);
        let y = ComplexImage::random_normal(3, 3, &mut rng);
        assert!((x.inner(&y).re - x.real_inner(&y)).abs() < 1e-12);
        assert!((x.norm_sqr() - x.real_inner(&x)).abs() < 1e-12);
    }
}
