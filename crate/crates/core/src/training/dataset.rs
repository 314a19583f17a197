use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Result};
use crate::linops::{make_mask, synthetic_coil_maps, ComplexImage, LinearOperatorSpec, MaskSpec, Measurement};
use crate::seed::indexed_seed;

/// Shape statistics for the synthetic phantoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Probability that an inner shape is a rotated rectangle rather than an ellipse.
    pub rect_fraction: f64,
    /// Peak amplitude (radians) of the smooth phase map.
    pub phase_strength: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            min_shapes: 3,
            max_shapes: 8,
            rect_fraction: 0.3,
            phase_strength: 1.0,
        }
    }
}

/// Which part of a dataset an image belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub count: usize,
    pub shape: (usize, usize),
    pub phantom: PhantomSpec,
    pub acceleration: f64,
    pub density_decay: f64,
    pub noise_sigma: f64,
    /// 1 selects single-coil masked Fourier; more uses synthetic coil maps.
    pub coils: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            count: 200,
            shape: (32, 32),
            phantom: PhantomSpec::default(),
            acceleration: 4.0,
            density_decay: 2.0,
            noise_sigma: 0.0,
            coils: 1,
            train_fraction: 0.8,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Ground-truth phantoms with their masks and noisy measurements.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<ComplexImage>,
    pub masks: Vec<MaskSpec>,
    pub measurements: Vec<Measurement>,
    pub noise_sigma: f64,
    pub splits: Vec<Split>,
    coil_maps: Option<Vec<ComplexImage>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.images[0].shape()
    }

    /// Forward model of image `i`.
    pub fn operator(&self, i: usize) -> Result<LinearOperatorSpec> {
        let mask = self.masks[i].clone();
        match &self.coil_maps {
            None => Ok(LinearOperatorSpec::masked_fourier(mask)),
            Some(maps) => LinearOperatorSpec::multi_coil(mask, maps.clone()),
        }
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }
}

struct Shape {
    cy: f64,
    cx: f64,
    ry: f64,
    rx: f64,
    angle: f64,
    rect: bool,
    value: f64,
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = (c * dx + s * dy) / self.rx;
        let v = (-s * dx + c * dy) / self.ry;
        if self.rect {
            u.abs() <= 1.0 && v.abs() <= 1.0
        } else {
            u * u + v * v <= 1.0
        }
    }
}

/// One piecewise-smooth complex phantom with peak magnitude 1.
pub fn make_phantom(shape: (usize, usize), spec: &PhantomSpec, rng: &mut impl Rng) -> ComplexImage {
    let (h, w) = shape;
    let mut shapes = vec![Shape {
        cy: rng.random_range(-0.05..0.05),
        cx: rng.random_range(-0.05..0.05),
        ry: rng.random_range(0.75..0.9),
        rx: rng.random_range(0.6..0.8),
        angle: rng.random_range(-0.3..0.3),
        rect: false,
        value: rng.random_range(0.4..0.6),
    }];
    let n = rng.random_range(spec.min_shapes..=spec.max_shapes.max(spec.min_shapes));
    for _ in 0..n {
        shapes.push(Shape {
            cy: rng.random_range(-0.5..0.5),
            cx: rng.random_range(-0.45..0.45),
            ry: rng.random_range(0.08..0.35),
            rx: rng.random_range(0.08..0.35),
            angle: rng.random_range(0.0..PI),
            rect: rng.random_bool(spec.rect_fraction.clamp(0.0, 1.0)),
            value: rng.random_range(-0.3..0.45),
        });
    }
    // Smooth intensity bias and phase: low-order polynomials in normalized coordinates.
    let bias: [f64; 3] = [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), rng.random_range(-0.1..0.1)];
    let phase: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0) * spec.phase_strength);
    let mut img = ComplexImage::from_fn(h, w, |r, c| {
        let y = 2.0 * (r as f64 + 0.5) / h as f64 - 1.0;
        let x = 2.0 * (c as f64 + 0.5) / w as f64 - 1.0;
        let mut v = 0.0;
        for (k, s) in shapes.iter().enumerate() {
            if s.contains(y, x) {
                v += s.value;
            } else if k == 0 {
                return Complex64::new(0.0, 0.0);
            }
        }
        let mag = (v * (1.0 + bias[0] * x + bias[1] * y + bias[2] * x * y)).clamp(0.0, 1.0);
        let ph = phase[0] + phase[1] * x + phase[2] * y + phase[3] * x * y;
        Complex64::from_polar(mag, ph)
    });
    let peak = img.max_abs();
    if peak > 0.0 {
        img.scale(1.0 / peak);
    }
    img
}

/// Dataset with default split fractions, density decay and a single coil.
pub fn make_synthetic_dataset(
    count: usize,
    shape: (usize, usize),
    complexity: &PhantomSpec,
    acceleration: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    generate_dataset(&DatasetSpec {
        count,
        shape,
        phantom: complexity.clone(),
        acceleration,
        noise_sigma,
        seed,
        ..DatasetSpec::default()
    })
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    if spec.count == 0 {
        return param_err("dataset needs at least one image");
    }
    if !(spec.noise_sigma >= 0.0) {
        return param_err("noise_sigma must be non-negative");
    }
    let fractions_ok = (0.0..=1.0).contains(&spec.train_fraction)
        && (0.0..=1.0).contains(&spec.validation_fraction)
        && spec.train_fraction + spec.validation_fraction <= 1.0;
    if !fractions_ok {
        return param_err("split fractions must lie in [0, 1] and sum to at most 1");
    }
    if spec.coils == 0 {
        return param_err("coils must be at least 1");
    }
    let (h, w) = spec.shape;
    let coil_maps = (spec.coils > 1).then(|| synthetic_coil_maps(h, w, spec.coils));
    let n_train = ((spec.count as f64 * spec.train_fraction).round() as usize).max(1).min(spec.count);
    let n_val = ((spec.count as f64 * spec.validation_fraction).round() as usize).min(spec.count - n_train);

    let mut data = Dataset {
        images: Vec::with_capacity(spec.count),
        masks: Vec::with_capacity(spec.count),
        measurements: Vec::with_capacity(spec.count),
        noise_sigma: spec.noise_sigma,
        splits: Vec::with_capacity(spec.count),
        coil_maps,
    };
    for i in 0..spec.count {
        let mut rng = ChaCha8Rng::seed_from_u64(indexed_seed(spec.seed, "phantom", i as u64));
        let img = make_phantom(spec.shape, &spec.phantom, &mut rng);
        let mask = make_mask(
            spec.shape,
            spec.acceleration,
            spec.density_decay,
            indexed_seed(spec.seed, "mask", i as u64),
        )?;
        data.masks.push(mask);
        let op = data.operator(i)?;
        let mut b = op.apply_forward(&img)?;
        let mut noise_rng = ChaCha8Rng::seed_from_u64(indexed_seed(spec.seed, "noise", i as u64));
        b.add_noise(spec.noise_sigma, &mut noise_rng);
        data.images.push(img);
        data.measurements.push(b);
        data.splits.push(if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        });
    }
    Ok(data)
}
