use std::io::Write;
use std::time::Instant;

use super::anderson::anderson_accelerate;
use super::config::{Acceleration, SolverConfig};
use super::memory::{BufferMeter, MemoryReport};
use super::step::ForwardBackwardMap;
use crate::error::{MolError, Result};
use crate::linops::{ComplexImage, LinearOperatorSpec, Measurement};
use crate::net::NetworkWeights;

/// Output of the forward fixed-point iteration.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub solution: ComplexImage,
    /// Number of forward map evaluations.
    pub nfe: usize,
    /// `||T(x_k) - x_k|| / max(||x_k||, 1)` for every evaluated iterate.
    pub residual_trace: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub memory: MemoryReport,
}

impl FixedPointResult {
    pub fn final_residual(&self) -> Option<f64> {
        self.residual_trace.last().copied()
    }
}

/// Iterates the forward-backward map from `x0` (default `A^H b`).
///
/// Iterate `x_k` is accepted as converged when both its relative update
/// `||T(x_k) - x_k|| / max(||x_k||, 1)` is at most `tol_fwd` and its
/// fixed-point equation residual (see [`fixed_point_residual`](super::fixed_point_residual))
/// is at most `10 * tol_fwd`; `x_k` itself is returned. The iteration stops as
/// diverged once an iterate norm exceeds `divergence_threshold`.
pub fn solve_fixed_point(
    w: &NetworkWeights,
    op: &LinearOperatorSpec,
    b: &Measurement,
    x0: Option<&ComplexImage>,
    cfg: &SolverConfig,
) -> Result<FixedPointResult> {
    run(w, op, b, x0, cfg, None)
}

/// As [`solve_fixed_point`], also writing `iteration,residual,wall_seconds`
/// CSV lines (with header) to `sink`.
pub fn solve_fixed_point_traced(
    w: &NetworkWeights,
    op: &LinearOperatorSpec,
    b: &Measurement,
    x0: Option<&ComplexImage>,
    cfg: &SolverConfig,
    sink: &mut dyn Write,
) -> Result<FixedPointResult> {
    run(w, op, b, x0, cfg, Some(sink))
}

fn run(
    w: &NetworkWeights,
    op: &LinearOperatorSpec,
    b: &Measurement,
    x0: Option<&ComplexImage>,
    cfg: &SolverConfig,
    mut sink: Option<&mut dyn Write>,
) -> Result<FixedPointResult> {
    cfg.validate()?;
    let map = ForwardBackwardMap::new(w, op, b, cfg)?;
    let mut x = match x0 {
        Some(x0) => {
            x0.check_shape(map.adjoint_b())?;
            x0.clone()
        }
        None => map.adjoint_b().clone(),
    };
    let start = Instant::now();
    if let Some(s) = sink.as_deref_mut() {
        writeln!(s, "iteration,residual,wall_seconds")?;
    }

    let mut meter = BufferMeter::new();
    // A^H b and the current iterate.
    meter.hold(2.0);
    let act = w.activation_image_equivalents();
    let depth = match cfg.acceleration {
        Acceleration::None => 0,
        Acceleration::Anderson { depth } => depth,
    };
    let mut history: Vec<(ComplexImage, ComplexImage)> = Vec::with_capacity(depth + 1);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut diverged = false;

    for k in 0..cfg.max_iter_fwd {
        // Network tape, H(x), the data-consistency residual and T(x) are live
        // while the map is evaluated.
        meter.hold(act + 3.0);
        let eval = map.eval(&x)?;
        meter.release(act + 2.0);
        if !eval.next.is_finite() {
            return Err(MolError::Numeric { iteration: k + 1 });
        }
        let scale = x.norm().max(1.0);
        let step = eval.next.sub(&x);
        let rel = step.norm() / scale;
        trace.push(rel);
        if let Some(s) = sink.as_deref_mut() {
            writeln!(s, "{},{:e},{:.6}", k + 1, rel, start.elapsed().as_secs_f64())?;
        }
        if rel <= cfg.tol_fwd && eval.fixed_point_residual_norm / scale <= 10.0 * cfg.tol_fwd {
            converged = true;
            meter.release(1.0);
            break;
        }
        let next = if depth > 0 {
            if history.len() < depth {
                meter.hold(2.0);
            }
            history.push((x.clone(), step));
            if history.len() > depth {
                history.remove(0);
            }
            anderson_accelerate(&history, depth)
        } else {
            eval.next
        };
        meter.release(1.0);
        if !next.is_finite() {
            return Err(MolError::Numeric { iteration: k + 1 });
        }
        x = next;
        if x.norm() > cfg.divergence_threshold {
            diverged = true;
            break;
        }
    }
    Ok(FixedPointResult {
        solution: x,
        nfe: trace.len(),
        residual_trace: trace,
        converged,
        diverged,
        memory: MemoryReport {
            state_buffers: (meter.peak() - act).round() as usize,
            activation_buffers: act,
        },
    })
}
