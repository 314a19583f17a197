use crate::error::{param_err, Result};

/// Default backoff of the step size from its supremum `2m/(2-m)^2`.
pub const DEFAULT_ALPHA_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Acceleration {
    None,
    /// Anderson mixing over the last `depth` iterates.
    Anderson { depth: usize },
}

/// Parameters of the forward-backward fixed-point iteration and of the
/// implicit backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub lambda: f64,
    /// Monotonicity margin the network is constrained to.
    pub m: f64,
    pub tol_fwd: f64,
    pub tol_bwd: f64,
    pub max_iter_fwd: usize,
    pub max_iter_bwd: usize,
    pub acceleration: Acceleration,
    pub divergence_threshold: f64,
    /// Reject `alpha >= 2m/(2-m)^2` in [`validate`](Self::validate).
    pub strict_mode: bool,
}

/// Supremum of admissible step sizes, `2m / (2 - m)^2`.
pub fn step_size_bound(m: f64) -> Result<f64> {
    if !(m > 0.0 && m <= 1.0) {
        return param_err(format!("monotonicity margin must lie in (0, 1], got {m}"));
    }
    Ok(2.0 * m / ((2.0 - m) * (2.0 - m)))
}

/// `sqrt(1 - 2 alpha m + alpha^2 (2 - m)^2)`, the contraction factor of the
/// forward-backward map; below 1 exactly when `alpha < step_size_bound(m)`.
pub fn contraction_rate(m: f64, alpha: f64) -> Result<f64> {
    let radicand = 1.0 - 2.0 * alpha * m + alpha * alpha * (2.0 - m) * (2.0 - m);
    if radicand < 0.0 {
        return param_err(format!("negative radicand {radicand} for m={m}, alpha={alpha}"));
    }
    Ok(radicand.sqrt())
}

impl SolverConfig {
    /// Configuration with `alpha = 0.99 * step_size_bound(m)`.
    pub fn new(m: f64, lambda: f64) -> Result<Self> {
        Self::with_alpha_fraction(m, lambda, DEFAULT_ALPHA_FRACTION)
    }

    /// Configuration with `alpha = fraction * step_size_bound(m)`.
    pub fn with_alpha_fraction(m: f64, lambda: f64, fraction: f64) -> Result<Self> {
        let alpha = fraction * step_size_bound(m)?;
        let cfg = Self {
            alpha,
            lambda,
            m,
            tol_fwd: 1e-6,
            tol_bwd: 1e-6,
            max_iter_fwd: 200,
            max_iter_bwd: 200,
            acceleration: Acceleration::None,
            divergence_threshold: 1e6,
            strict_mode: fraction < 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `alpha` set exactly at the supremum `2m/(2-m)^2`; strict mode off.
    pub fn at_step_bound(m: f64, lambda: f64) -> Result<Self> {
        Self::with_alpha_fraction(m, lambda, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return param_err("alpha must be positive");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return param_err("lambda must be non-negative");
        }
        if !(self.m > 0.0 && self.m <= 1.0) {
            return param_err("m must lie in (0, 1]");
        }
        if !(self.tol_fwd > 0.0) || !(self.tol_bwd > 0.0) {
            return param_err("tolerances must be positive");
        }
        if self.max_iter_fwd == 0 || self.max_iter_bwd == 0 {
            return param_err("iteration caps must be positive");
        }
        if let Acceleration::Anderson { depth } = self.acceleration {
            if depth == 0 {
                return param_err("Anderson depth must be at least 1");
            }
        }
        if self.strict_mode && self.alpha >= step_size_bound(self.m)? {
            return param_err(format!(
                "alpha {} violates alpha < 2m/(2-m)^2 = {}",
                self.alpha,
                step_size_bound(self.m)?
            ));
        }
        Ok(())
    }

    pub fn with_tolerances(mut self, tol_fwd: f64, tol_bwd: f64) -> Self {
        self.tol_fwd = tol_fwd;
        self.tol_bwd = tol_bwd;
        self
    }

    pub fn with_max_iters(mut self, fwd: usize, bwd: usize) -> Self {
        self.max_iter_fwd = fwd;
        self.max_iter_bwd = bwd;
        self
    }

    pub fn with_acceleration(mut self, acceleration: Acceleration) -> Self {
        self.acceleration = acceleration;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}
