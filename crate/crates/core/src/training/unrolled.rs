use crate::error::{param_err, Result};
use crate::linops::{ComplexImage, LinearOperatorSpec, Measurement};
use crate::net::{NetworkWeights, WeightGradient};
use crate::solver::{BufferMeter, MemoryReport, SolverConfig};

/// Output of [`unrolled_reference`].
#[derive(Debug, Clone)]
pub struct UnrolledResult {
    /// Final iterate `x_K`.
    pub image: ComplexImage,
    pub gradient: WeightGradient,
    pub memory: MemoryReport,
}

impl UnrolledResult {
    /// Peak retained image-sized buffers, network activations included.
    pub fn buffers_retained(&self) -> f64 {
        self.memory.total()
    }
}

/// Runs exactly `unrolls` forward-backward steps from `A^H b`, keeping every
/// iterate and every network tape, then backpropagates the cotangent
/// `loss_grad(x_K)` through the whole chain.
pub fn unrolled_reference(
    w: &NetworkWeights,
    op: &LinearOperatorSpec,
    b: &Measurement,
    unrolls: usize,
    cfg: &SolverConfig,
    loss_grad: &dyn Fn(&ComplexImage) -> ComplexImage,
) -> Result<UnrolledResult> {
    if unrolls == 0 {
        return param_err("unrolls must be at least 1");
    }
    let (alpha, lambda) = (cfg.alpha, cfg.lambda);
    let act = w.activation_image_equivalents();
    let mut meter = BufferMeter::new();
    let adjoint_b = op.apply_adjoint(b)?;
    let mut data_term = adjoint_b.clone();
    data_term.scale(alpha * lambda);
    meter.hold(2.0);

    let mut iterates = vec![adjoint_b];
    let mut tapes = Vec::with_capacity(unrolls);
    for _ in 0..unrolls {
        let x = iterates.last().unwrap();
        let tape = w.forward_tape(x)?;
        meter.hold(act + 1.0);
        // Right-hand side scratch.
        meter.hold(1.0);
        let mut rhs = data_term.clone();
        rhs.axpy(1.0 - alpha, x);
        rhs.axpy(alpha, &w.tape_output(&tape)?);
        let next = op.solve_q(&rhs, alpha, lambda)?;
        meter.release(1.0);
        tapes.push(tape);
        iterates.push(next);
    }

    let image = iterates.last().unwrap().clone();
    let mut g = loss_grad(&image);
    image.check_shape(&g)?;
    let mut gradient = WeightGradient::zeros_like(w);
    // Cotangent, Q^{-1} g and the input VJP.
    meter.hold(3.0);
    for tape in tapes.iter().rev() {
        let v = op.solve_q(&g, alpha, lambda)?;
        let (jtv, pg) = w.vjp_both_from_tape(tape, &v)?;
        gradient.axpy(alpha, &pg);
        g = v.scaled(1.0 - alpha);
        g.axpy(alpha, &jtv);
    }
    let activation = unrolls as f64 * act;
    Ok(UnrolledResult {
        image,
        gradient,
        memory: MemoryReport {
            state_buffers: (meter.peak() - activation).round() as usize,
            activation_buffers: activation,
        },
    })
}
