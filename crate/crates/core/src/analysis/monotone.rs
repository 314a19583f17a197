use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{param_err, Result};
use crate::linops::ComplexImage;
use crate::net::NetworkWeights;
use crate::parallel;

/// How sample pairs for the monotonicity check are drawn.
#[derive(Debug, Clone)]
pub struct SamplingSpec {
    pub shape: (usize, usize),
    /// Standard deviation of entries of purely random images.
    pub random_scale: f64,
    /// Operating points (e.g. fixed points); when non-empty every other
    /// pair is two perturbations of an anchor.
    pub anchors: Vec<ComplexImage>,
    /// Perturbation norm relative to the anchor norm.
    pub perturb_scale: f64,
}

impl SamplingSpec {
    pub fn random(shape: (usize, usize), scale: f64) -> Self {
        Self {
            shape,
            random_scale: scale,
            anchors: Vec::new(),
            perturb_scale: 0.1,
        }
    }
}

/// Sampled monotonicity margin of `F = I - H`.
#[derive(Debug, Clone)]
pub struct MonotoneEstimate {
    /// `min <x - y, F(x) - F(y)> / ||x - y||^2` over sampled pairs (real part).
    pub m_hat: f64,
    pub num_pairs: usize,
    pub worst_pair: (ComplexImage, ComplexImage),
    /// Largest sampled `||F(x) - F(y)|| / ||x - y||`.
    pub f_lipschitz: f64,
    /// Largest sampled `||H(x) - H(y)|| / ||x - y||`.
    pub h_lipschitz: f64,
}

struct PairStats {
    margin: f64,
    f_ratio: f64,
    h_ratio: f64,
}

fn draw_pair(spec: &SamplingSpec, seed: u64, i: usize) -> (ComplexImage, ComplexImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let (h, w) = spec.shape;
    if !spec.anchors.is_empty() && i % 2 == 1 {
        let a = &spec.anchors[(i / 2) % spec.anchors.len()];
        let target = spec.perturb_scale * a.norm().max(1.0);
        let mut d1 = ComplexImage::random_normal(h, w, &mut rng);
        let mut d2 = ComplexImage::random_normal(h, w, &mut rng);
        d1.scale(target / d1.norm());
        d2.scale(target / d2.norm());
        (a.add(&d1), a.add(&d2))
    } else {
        let x = ComplexImage::random_normal(h, w, &mut rng).scaled(spec.random_scale);
        let y = ComplexImage::random_normal(h, w, &mut rng).scaled(spec.random_scale);
        (x, y)
    }
}

fn pair_stats(w: &NetworkWeights, x: &ComplexImage, y: &ComplexImage) -> Result<Option<PairStats>> {
    let dx = x.sub(y);
    let n2 = dx.norm_sqr();
    if n2 == 0.0 {
        return Ok(None);
    }
    let dh = w.h_forward(x)?.sub(&w.h_forward(y)?);
    let df = dx.sub(&dh);
    Ok(Some(PairStats {
        margin: dx.real_inner(&df) / n2,
        f_ratio: (df.norm_sqr() / n2).sqrt(),
        h_ratio: (dh.norm_sqr() / n2).sqrt(),
    }))
}

/// Estimates the monotonicity margin of `F = I - H` from `samples` pairs.
/// Degenerate pairs (`x = y`) are skipped and not counted.
pub fn monotone_margin(w: &NetworkWeights, samples: usize, seed: u64, spec: &SamplingSpec) -> Result<MonotoneEstimate> {
    if samples < 2 {
        return param_err("monotone_margin needs at least 2 samples");
    }
    let stats = parallel::map_indexed(samples, |i| {
        let (x, y) = draw_pair(spec, seed, i);
        pair_stats(w, &x, &y)
    });
    let mut best: Option<(usize, f64)> = None;
    let (mut f_lip, mut h_lip, mut count) = (0.0f64, 0.0f64, 0usize);
    for (i, s) in stats.into_iter().enumerate() {
        let Some(s) = s? else { continue };
        count += 1;
        f_lip = f_lip.max(s.f_ratio);
        h_lip = h_lip.max(s.h_ratio);
        if best.is_none_or(|(_, m)| s.margin < m) {
            best = Some((i, s.margin));
        }
    }
    let Some((worst, m_hat)) = best else {
        return param_err("all sampled pairs were degenerate");
    };
    Ok(MonotoneEstimate {
        m_hat,
        num_pairs: count,
        worst_pair: draw_pair(spec, seed, worst),
        f_lipschitz: f_lip,
        h_lipschitz: h_lip,
    })
}

/// Monotonicity margin implied by the composed spectral bound, `1 - L_global`.
pub fn certified_margin(w: &NetworkWeights) -> f64 {
    1.0 - w.global_lipschitz_bound()
}
