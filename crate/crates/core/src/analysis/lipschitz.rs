use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::linops::ComplexImage;
use crate::net::{NetworkWeights, WeightGradient};

/// Default number of ascent steps.
pub const DEFAULT_ASCENT_STEPS: usize = 10;
/// Default ascent step size.
pub const DEFAULT_ASCENT_STEP: f64 = 1.0;
/// Initial perturbation norm relative to `||f*||`.
const INIT_RELATIVE_NORM: f64 = 1e-2;
/// Perturbations are projected back into a ball of this relative radius.
const MAX_RELATIVE_NORM: f64 = 0.1;
/// Perturbations smaller than this are renormalized to the initial norm.
const MIN_NORM: f64 = 1e-8;

/// Local Lipschitz estimate of H around a fixed point.
#[derive(Debug, Clone)]
pub struct LipschitzEstimate {
    /// `||H(f* + e) - H(f*)||^2 / ||e||^2` at the best perturbation found.
    pub value_squared: f64,
    /// Square root of `value_squared`.
    pub value: f64,
    pub perturbation: ComplexImage,
    pub ascent_steps: usize,
}

fn ratio(w: &NetworkWeights, f_star: &ComplexImage, h_star: &ComplexImage, eps: &ComplexImage) -> Result<(f64, ComplexImage)> {
    let d = w.h_forward(&f_star.add(eps))?.sub(h_star);
    Ok((d.norm_sqr() / eps.norm_sqr(), d))
}

/// Maximizes `||H(f* + e) - H(f*)||^2 / ||e||^2` over `e` by gradient ascent.
///
/// The gradient is `2 (J^T d - R e) / ||e||^2` with `d = H(f* + e) - H(f*)`,
/// `R` the current ratio and `J` the Jacobian of H at `f* + e`. Each step
/// uses the step length `step_size * ||e||^2 / (2 R)`, giving the update
/// `e <- (1 - step_size) e + step_size J^T d / R`; for linear H and
/// `step_size = 1` this is power iteration on `J^T J`. The perturbation is
/// kept within `0.1 ||f*||`. Returns the largest ratio seen, so the estimate
/// is nondecreasing in `steps` for a fixed seed.
pub fn local_lipschitz(
    w: &NetworkWeights,
    f_star: &ComplexImage,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    let (h, wd) = f_star.shape();
    let base = f_star.norm().max(1.0);
    let init_norm = INIT_RELATIVE_NORM * base;
    let max_norm = MAX_RELATIVE_NORM * base;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = ComplexImage::random_normal(h, wd, &mut rng);
    eps.scale(init_norm / eps.norm());

    let h_star = w.h_forward(f_star)?;
    let (mut r, mut d) = ratio(w, f_star, &h_star, &eps)?;
    let mut best = (r, eps.clone());
    for _ in 0..steps {
        if r <= 0.0 || !r.is_finite() {
            break;
        }
        let jtd = w.h_vjp_input(&f_star.add(&eps), &d)?;
        let mut next = eps.scaled(1.0 - step_size);
        next.axpy(step_size / r, &jtd);
        let n = next.norm();
        if n > max_norm {
            next.scale(max_norm / n);
        } else if n < MIN_NORM {
            next.scale(init_norm / n.max(f64::MIN_POSITIVE));
        }
        if !next.is_finite() {
            break;
        }
        eps = next;
        (r, d) = ratio(w, f_star, &h_star, &eps)?;
        if r > best.0 {
            best = (r, eps.clone());
        }
    }
    Ok(LipschitzEstimate {
        value_squared: best.0,
        value: best.0.sqrt(),
        perturbation: best.1,
        ascent_steps: steps,
    })
}

/// Value and gradients of the penalty `||H(f* + e) - H(f*)||^2 / ||e||^2`
/// for a fixed perturbation `e`: returns `(value, d/dw, d/df*)`.
pub fn lipschitz_penalty_gradient(
    w: &NetworkWeights,
    f_star: &ComplexImage,
    eps: &ComplexImage,
) -> Result<(f64, WeightGradient, ComplexImage)> {
    let e2 = eps.norm_sqr();
    let tape_p = w.forward_tape(&f_star.add(eps))?;
    let tape_0 = w.forward_tape(f_star)?;
    let d = w.tape_output(&tape_p)?.sub(&w.tape_output(&tape_0)?);
    let value = d.norm_sqr() / e2;
    let (gx_p, mut gw) = w.vjp_both_from_tape(&tape_p, &d)?;
    let (gx_0, gw_0) = w.vjp_both_from_tape(&tape_0, &d)?;
    gw.axpy(-1.0, &gw_0);
    gw.scale(2.0 / e2);
    let mut gx = gx_p.sub(&gx_0);
    gx.scale(2.0 / e2);
    Ok((value, gw, gx))
}
