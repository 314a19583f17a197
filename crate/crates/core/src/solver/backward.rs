use super::config::SolverConfig;
use super::memory::{BufferMeter, MemoryReport};
use crate::error::{MolError, Result};
use crate::linops::{ComplexImage, LinearOperatorSpec};
use crate::net::{NetworkWeights, WeightGradient};

/// Implicit gradient at a fixed point.
#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub gradient: WeightGradient,
    /// Number of backward (Jacobian) iterations.
    pub nbe: usize,
    pub memory: MemoryReport,
}

/// Gradient of a loss through the fixed point `x* = T(x*, w)`.
///
/// Solves `u = cotangent + (dT/dx)^T u` by Neumann iteration, with
/// `(dT/dx)^T u = ((1 - alpha) I + alpha J_H(x*)^T) Q^{-1} u` (Q is
/// self-adjoint), then returns `(dT/dw)^T u = alpha (dH/dw)^T Q^{-1} u`.
/// Only `x*`, the cotangent, the running iterate and two scratch images are
/// kept, plus one network tape at `x*`; storage does not depend on how many
/// forward iterations produced `x*`.
pub fn deq_backward(
    w: &NetworkWeights,
    op: &LinearOperatorSpec,
    x_star: &ComplexImage,
    cotangent: &ComplexImage,
    cfg: &SolverConfig,
) -> Result<BackwardResult> {
    x_star.check_shape(cotangent)?;
    let (alpha, lambda) = (cfg.alpha, cfg.lambda);
    let act = w.activation_image_equivalents();
    let mut meter = BufferMeter::new();
    // x*, cotangent, running iterate.
    meter.hold(3.0);
    let tape = w.forward_tape(x_star)?;
    meter.hold(act);

    let mut u = cotangent.clone();
    let mut nbe = 0;
    let mut converged = false;
    let mut last_rel = f64::INFINITY;
    while nbe < cfg.max_iter_bwd {
        nbe += 1;
        // Q^{-1} u and the network VJP.
        meter.hold(2.0);
        let v = op.solve_q(&u, alpha, lambda)?;
        let jtv = w.vjp_input_from_tape(&tape, &v)?;
        let mut next = cotangent.clone();
        next.axpy(1.0 - alpha, &v);
        next.axpy(alpha, &jtv);
        meter.release(2.0);
        if !next.is_finite() {
            return Err(MolError::Numeric { iteration: nbe });
        }
        let diff = next.sub(&u).norm();
        let scale = next.norm();
        u = next;
        last_rel = if scale > 0.0 { diff / scale } else { 0.0 };
        if diff <= cfg.tol_bwd * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(MolError::BackwardNonConvergence {
            iterations: nbe,
            residual: last_rel,
        });
    }
    meter.hold(1.0);
    let v = op.solve_q(&u, alpha, lambda)?;
    let mut gradient = w.vjp_params_from_tape(&tape, &v)?;
    gradient.scale(alpha);
    Ok(BackwardResult {
        gradient,
        nbe,
        memory: MemoryReport {
            state_buffers: (meter.peak() - act).round() as usize,
            activation_buffers: act,
        },
    })
}
