use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fft::signed_frequency;
use crate::error::{dim_err, param_err, Result};

/// Half-width of the always-sampled low-frequency block (4x4 center).
const CENTER_LO: isize = -2;
const CENTER_HI: isize = 1;
/// Radius scale `r0` of the variable-density law `(1 + r/r0)^(-decay)`.
const RADIUS_SCALE: f64 = 2.0;

/// Cartesian undersampling pattern in unshifted FFT layout (bin 0 = DC).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub height: usize,
    pub width: usize,
    pub pattern: Vec<bool>,
    pub acceleration: f64,
    pub seed: u64,
}

impl MaskSpec {
    pub fn full(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pattern: vec![true; height * width],
            acceleration: 1.0,
            seed: 0,
        }
    }

    /// All-false mask; the corresponding operator is the zero map.
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pattern: vec![false; height * width],
            acceleration: f64::INFINITY,
            seed: 0,
        }
    }

    pub fn from_pattern(height: usize, width: usize, pattern: Vec<bool>) -> Result<Self> {
        if pattern.len() != height * width {
            return dim_err("mask pattern length does not match shape");
        }
        let count = pattern.iter().filter(|&&b| b).count();
        let acceleration = if count == 0 {
            f64::INFINITY
        } else {
            (height * width) as f64 / count as f64
        };
        Ok(Self {
            height,
            width,
            pattern,
            acceleration,
            seed: 0,
        })
    }

    pub fn sampled_count(&self) -> usize {
        self.pattern.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        self.sampled_count() as f64 / self.pattern.len() as f64
    }

    /// Row-major indices of sampled locations.
    pub fn sampled_indices(&self) -> Vec<usize> {
        self.pattern
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

fn in_center(fy: isize, fx: isize) -> bool {
    (CENTER_LO..=CENTER_HI).contains(&fy) && (CENTER_LO..=CENTER_HI).contains(&fx)
}

/// Generates a variable-density random mask with exactly
/// `round(H*W / acceleration)` sampled locations. The low-frequency 4x4 block
/// is always sampled; the rest is drawn without replacement with weights
/// `(1 + r / r0)^(-density_decay)` where `r` is the frequency radius.
pub fn make_mask(
    shape: (usize, usize),
    acceleration: f64,
    density_decay: f64,
    seed: u64,
) -> Result<MaskSpec> {
    let (h, w) = shape;
    if h == 0 || w == 0 {
        return param_err("mask shape must be positive");
    }
    if !(acceleration >= 1.0) || !acceleration.is_finite() {
        return param_err(format!("acceleration must be >= 1, got {acceleration}"));
    }
    if !(density_decay > 0.0) {
        return param_err("density_decay must be positive");
    }
    let n = h * w;
    let target = (n as f64 / acceleration).round() as usize;
    let mut pattern = vec![false; n];
    let mut candidates = Vec::with_capacity(n);
    let mut center = 0usize;
    for (i, p) in pattern.iter_mut().enumerate() {
        let fy = signed_frequency(i / w, h);
        let fx = signed_frequency(i % w, w);
        if in_center(fy, fx) {
            *p = true;
            center += 1;
        } else {
            candidates.push((i, ((fy * fy + fx * fx) as f64).sqrt()));
        }
    }
    if target < center.max(1) {
        return param_err(format!(
            "acceleration {acceleration} exceeds grid capacity: {target} samples requested, \
             {center} required by the fully sampled center"
        ));
    }
    // Efraimidis-Spirakis weighted sampling: keep the largest ln(u)/weight keys.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize)> = candidates
        .into_iter()
        .map(|(i, r)| {
            let weight = (1.0 + r / RADIUS_SCALE).powf(-density_decay);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / weight, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in keyed.iter().take(target - center) {
        pattern[i] = true;
    }
    Ok(MaskSpec {
        height: h,
        width: w,
        pattern,
        acceleration,
        seed,
    })
}
