use super::config::SolverConfig;
use crate::error::Result;
use crate::linops::{ComplexImage, LinearOperatorSpec, Measurement};
use crate::net::NetworkWeights;

/// The forward-backward map
/// `T(x) = Q^{-1}((1 - alpha) x + alpha H(x) + alpha lambda A^H b)` with
/// `Q = I + alpha lambda A^H A`, with `A^H b` precomputed.
pub struct ForwardBackwardMap<'a> {
    pub(crate) weights: &'a NetworkWeights,
    pub(crate) op: &'a LinearOperatorSpec,
    pub(crate) adjoint_b: ComplexImage,
    pub(crate) alpha: f64,
    pub(crate) lambda: f64,
}

/// One evaluation of the map at `x`, with by-products reused by the solver.
pub(crate) struct MapEval {
    pub next: ComplexImage,
    /// `||lambda A^H (A x - b) + x - H(x)||`.
    pub fixed_point_residual_norm: f64,
}

impl<'a> ForwardBackwardMap<'a> {
    pub fn new(weights: &'a NetworkWeights, op: &'a LinearOperatorSpec, b: &Measurement, cfg: &SolverConfig) -> Result<Self> {
        Ok(Self {
            weights,
            op,
            adjoint_b: op.apply_adjoint(b)?,
            alpha: cfg.alpha,
            lambda: cfg.lambda,
        })
    }

    /// `A^H b`, the default starting point.
    pub fn adjoint_b(&self) -> &ComplexImage {
        &self.adjoint_b
    }

    pub fn apply(&self, x: &ComplexImage) -> Result<ComplexImage> {
        let hx = self.weights.h_forward(x)?;
        self.finish(x, &hx)
    }

    fn finish(&self, x: &ComplexImage, hx: &ComplexImage) -> Result<ComplexImage> {
        let a = self.alpha;
        let mut rhs = x.scaled(1.0 - a);
        rhs.axpy(a, hx);
        rhs.axpy(a * self.lambda, &self.adjoint_b);
        self.op.solve_q(&rhs, a, self.lambda)
    }

    /// Evaluates `T(x)` and the fixed-point equation residual at `x` from a
    /// single network evaluation.
    pub(crate) fn eval(&self, x: &ComplexImage) -> Result<MapEval> {
        let hx = self.weights.h_forward(x)?;
        let mut res = self.op.gram(x)?;
        res.axpy(-1.0, &self.adjoint_b);
        res.scale(self.lambda);
        res.axpy(1.0, x);
        res.axpy(-1.0, &hx);
        let next = self.finish(x, &hx)?;
        Ok(MapEval {
            next,
            fixed_point_residual_norm: res.norm(),
        })
    }
}

/// A single forward-backward update: one network evaluation and one Q-solve.
pub fn fb_step(
    x: &ComplexImage,
    w: &NetworkWeights,
    op: &LinearOperatorSpec,
    b: &Measurement,
    cfg: &SolverConfig,
) -> Result<ComplexImage> {
    ForwardBackwardMap::new(w, op, b, cfg)?.apply(x)
}

/// `||lambda A^H (A x - b) + x - H(x)|| / max(||x||, 1)`: the residual of the
/// fixed-point equation with `F = I - H`. Zero exactly at the fixed point.
pub fn fixed_point_residual(
    x: &ComplexImage,
    w: &NetworkWeights,
    op: &LinearOperatorSpec,
    b: &Measurement,
    lambda: f64,
) -> Result<f64> {
    let ax = op.apply_forward(x)?;
    let mut r = op.apply_adjoint(&ax.sub(b))?;
    r.scale(lambda);
    r.axpy(1.0, x);
    r.axpy(-1.0, &w.h_forward(x)?);
    Ok(r.norm() / x.norm().max(1.0))
}
