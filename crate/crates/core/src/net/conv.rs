//! Zero-padded "same" 2D convolution on planar multi-channel buffers.
//!
//! Buffers are channel-major: channel `c` occupies `[c*H*W, (c+1)*H*W)`.
//! The kernel layout is `(out, in, k, k)` and the operation is a
//! cross-correlation, matching the usual deep-learning convention.

/// Range of output rows (or columns) whose tap at offset `d` lands inside
/// an axis of length `n` with padding `p`.
#[inline]
fn valid_range(d: usize, p: usize, n: usize) -> (usize, usize) {
    let lo = p.saturating_sub(d);
    let hi = (n + p).saturating_sub(d).min(n);
    (lo, hi.max(lo))
}

pub(crate) struct ConvShape {
    pub out_ch: usize,
    pub in_ch: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

/// `out = conv(kernel, input) (+ bias when given)`.
pub(crate) fn conv_forward(s: &ConvShape, kernel: &[f64], bias: Option<&[f64]>, input: &[f64], out: &mut [f64]) {
    let (h, w, k) = (s.h, s.w, s.k);
    let hw = h * w;
    let p = k / 2;
    debug_assert_eq!(input.len(), s.in_ch * hw);
    debug_assert_eq!(out.len(), s.out_ch * hw);
    for o in 0..s.out_ch {
        let plane = &mut out[o * hw..(o + 1) * hw];
        let b = bias.map_or(0.0, |b| b[o]);
        plane.iter_mut().for_each(|v| *v = b);
        for i in 0..s.in_ch {
            let src = &input[i * hw..(i + 1) * hw];
            for dy in 0..k {
                let (y0, y1) = valid_range(dy, p, h);
                for dx in 0..k {
                    let wv = kernel[((o * s.in_ch + i) * k + dy) * k + dx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = valid_range(dx, p, w);
                    for y in y0..y1 {
                        let sy = y + dy - p;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + x0 + dx - p..sy * w + x1 + dx - p];
                        for (d, &sv) in dst.iter_mut().zip(srow) {
                            *d += wv * sv;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of the linear part: `grad_in += conv^T(kernel, grad_out)`.
pub(crate) fn conv_transpose(s: &ConvShape, kernel: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
    let (h, w, k) = (s.h, s.w, s.k);
    let hw = h * w;
    let p = k / 2;
    for o in 0..s.out_ch {
        let g = &grad_out[o * hw..(o + 1) * hw];
        for i in 0..s.in_ch {
            let dst_plane = &mut grad_in[i * hw..(i + 1) * hw];
            for dy in 0..k {
                let (y0, y1) = valid_range(dy, p, h);
                for dx in 0..k {
                    let wv = kernel[((o * s.in_ch + i) * k + dy) * k + dx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = valid_range(dx, p, w);
                    for y in y0..y1 {
                        let sy = y + dy - p;
                        let grow = &g[y * w + x0..y * w + x1];
                        let drow = &mut dst_plane[sy * w + x0 + dx - p..sy * w + x1 + dx - p];
                        for (d, &gv) in drow.iter_mut().zip(grow) {
                            *d += wv * gv;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates kernel and bias gradients for `out = conv(kernel, input) + bias`.
pub(crate) fn conv_param_grad(
    s: &ConvShape,
    input: &[f64],
    grad_out: &[f64],
    kernel_grad: &mut [f64],
    bias_grad: &mut [f64],
) {
    let (h, w, k) = (s.h, s.w, s.k);
    let hw = h * w;
    let p = k / 2;
    for o in 0..s.out_ch {
        let g = &grad_out[o * hw..(o + 1) * hw];
        bias_grad[o] += g.iter().sum::<f64>();
        for i in 0..s.in_ch {
            let src = &input[i * hw..(i + 1) * hw];
            for dy in 0..k {
                let (y0, y1) = valid_range(dy, p, h);
                for dx in 0..k {
                    let (x0, x1) = valid_range(dx, p, w);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + dy - p;
                        let grow = &g[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + x0 + dx - p..sy * w + x1 + dx - p];
                        acc += grow.iter().zip(srow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    kernel_grad[((o * s.in_ch + i) * k + dy) * k + dx] += acc;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive six-loop convolution used as an oracle.
    fn naive(s: &ConvShape, kernel: &[f64], bias: &[f64], input: &[f64]) -> Vec<f64> {
        let (h, w, k) = (s.h as isize, s.w as isize, s.k as isize);
        let p = k / 2;
        let mut out = vec![0.0; s.out_ch * s.h * s.w];
        for o in 0..s.out_ch {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias[o];
                    for i in 0..s.in_ch {
                        for dy in 0..k {
                            for dx in 0..k {
                                let (sy, sx) = (y + dy - p, x + dx - p);
                                if sy < 0 || sy >= h || sx < 0 || sx >= w {
                                    continue;
                                }
                                let kv = kernel[((o * s.in_ch + i) * s.k + dy as usize) * s.k + dx as usize];
                                acc += kv * input[(i as isize * h * w + sy * w + sx) as usize];
                            }
                        }
                    }
                    out[(o as isize * h * w + y * w + x) as usize] = acc;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect()
    }

    #[test]
    fn matches_naive_oracle() {
        for &(k, h, w) in &[(3usize, 5usize, 7usize), (5, 4, 4), (1, 3, 2), (3, 1, 6)] {
            let s = ConvShape { out_ch: 3, in_ch: 2, k, h, w };
            let kernel = pseudo(3 * 2 * k * k, 0.37);
            let bias = pseudo(3, 1.3);
            let input = pseudo(2 * h * w, 0.71);
            let mut out = vec![0.0; 3 * h * w];
            conv_forward(&s, &kernel, Some(&bias), &input, &mut out);
            let want = naive(&s, &kernel, &bias, &input);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let s = ConvShape { out_ch: 4, in_ch: 3, k: 3, h: 6, w: 5 };
        let kernel = pseudo(4 * 3 * 9, 0.19);
        let x = pseudo(3 * 30, 0.53);
        let y = pseudo(4 * 30, 0.29);
        let mut ax = vec![0.0; 4 * 30];
        conv_forward(&s, &kernel, None, &x, &mut ax);
        let mut aty = vec![0.0; 3 * 30];
        conv_transpose(&s, &kernel, &y, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }
}
