use crate::error::{param_err, Result};
use crate::linops::ComplexImage;

/// PSNR returned for identical images.
pub const PSNR_CAP_DB: f64 = 200.0;

/// `||recon - target||^2 + lip_weight * lip_value_squared`.
pub fn loss(recon: &ComplexImage, target: &ComplexImage, lip_value_squared: f64, lip_weight: f64) -> Result<f64> {
    recon.check_shape(target)?;
    Ok(recon.sub(target).norm_sqr() + lip_weight * lip_value_squared)
}

/// `10 log10(peak^2 / MSE)` with `peak = max |ref|`, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &ComplexImage, reference: &ComplexImage) -> Result<f64> {
    x.check_shape(reference)?;
    let peak = reference.max_abs();
    if peak == 0.0 {
        return param_err("PSNR reference image is zero");
    }
    let mse = x.sub(reference).norm_sqr() / x.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// PSNR of the magnitude images, the validation metric used in training.
pub fn magnitude_psnr(x: &ComplexImage, reference: &ComplexImage) -> Result<f64> {
    psnr(&x.magnitude(), &reference.magnitude())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    /// Side of the square uniform window (clamped to the image size).
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 7,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

/// Mean SSIM of the magnitude images over all fully contained windows.
/// Stabilization constants are `(k1 peak)^2` and `(k2 peak)^2` with `peak` the
/// largest reference magnitude; window statistics use population moments.
pub fn ssim(x: &ComplexImage, reference: &ComplexImage, params: &SsimParams) -> Result<f64> {
    x.check_shape(reference)?;
    if params.window == 0 {
        return param_err("SSIM window must be positive");
    }
    let (h, w) = x.shape();
    let a: Vec<f64> = x.data().iter().map(|z| z.norm()).collect();
    let b: Vec<f64> = reference.data().iter().map(|z| z.norm()).collect();
    let peak = b.iter().copied().fold(0.0, f64::max);
    let c1 = (params.k1 * peak).powi(2);
    let c2 = (params.k2 * peak).powi(2);
    let (kh, kw) = (params.window.min(h), params.window.min(w));
    let n = (kh * kw) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - kh {
        for c0 in 0..=w - kw {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + kh {
                for c in c0..c0 + kw {
                    let (p, q) = (a[r * w + c], b[r * w + c]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += if den == 0.0 { 1.0 } else { num / den };
            count += 1;
        }
    }
    Ok(total / count as f64)
}
