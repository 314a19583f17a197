use nalgebra::{DMatrix, DVector};

use crate::linops::ComplexImage;

/// Tikhonov damping of the mixing least-squares problem, relative to the
/// squared Frobenius norm of the residual differences.
pub const ANDERSON_DAMPING: f64 = 1e-8;

/// Anderson (type-II) mixing over the last `depth` entries of `history`,
/// where each entry is `(x_i, r_i)` with `r_i = T(x_i) - x_i`.
///
/// Solves `min_theta ||r_k - dR theta||^2 + delta ||theta||^2` by QR on the
/// damped system and returns `x_k + r_k - (dX + dR) theta`. With a single
/// entry, or when the system is numerically degenerate, this is the plain
/// step `x_k + r_k`.
pub fn anderson_accelerate(history: &[(ComplexImage, ComplexImage)], depth: usize) -> ComplexImage {
    assert!(!history.is_empty(), "Anderson history must be non-empty");
    let window = &history[history.len().saturating_sub(depth.max(1))..];
    let (x_last, r_last) = window.last().unwrap();
    let plain = x_last.add(r_last);
    let k = window.len() - 1;
    if k == 0 {
        return plain;
    }
    let n = 2 * x_last.len();
    let to_real = |img: &ComplexImage, out: &mut [f64]| {
        for (i, z) in img.data().iter().enumerate() {
            out[2 * i] = z.re;
            out[2 * i + 1] = z.im;
        }
    };
    let mut dr = DMatrix::<f64>::zeros(n + k, k);
    let mut buf_a = vec![0.0; n];
    let mut buf_b = vec![0.0; n];
    for j in 0..k {
        to_real(&window[j + 1].1, &mut buf_a);
        to_real(&window[j].1, &mut buf_b);
        for i in 0..n {
            dr[(i, j)] = buf_a[i] - buf_b[i];
        }
    }
    let fro2: f64 = dr.iter().map(|v| v * v).sum();
    if !(fro2 > 0.0) || !fro2.is_finite() {
        return plain;
    }
    let damp = (ANDERSON_DAMPING * fro2).sqrt();
    for j in 0..k {
        dr[(n + j, j)] = damp;
    }
    let mut rhs = DVector::<f64>::zeros(n + k);
    to_real(r_last, &mut buf_a);
    for i in 0..n {
        rhs[i] = buf_a[i];
    }
    let qr = dr.qr();
    let r = qr.r();
    let diag_max = (0..k).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let diag_min = (0..k).map(|j| r[(j, j)].abs()).fold(f64::INFINITY, f64::min);
    if !(diag_min > 1e-12 * diag_max) {
        return plain;
    }
    let qtb = qr.q().transpose() * rhs;
    let theta = match r.solve_upper_triangular(&qtb) {
        Some(t) if t.iter().all(|v| v.is_finite()) => t,
        _ => return plain,
    };
    let mut out = plain;
    for j in 0..k {
        let t = theta[j];
        out.axpy(-t, &window[j + 1].0);
        out.axpy(t, &window[j].0);
        out.axpy(-t, &window[j + 1].1);
        out.axpy(t, &window[j].1);
    }
    out
}
