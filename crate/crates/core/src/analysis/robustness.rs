use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::monotone::{monotone_margin, SamplingSpec};
use crate::error::{param_err, Result};
use crate::linops::{LinearOperatorSpec, Measurement};
use crate::net::NetworkWeights;
use crate::parallel;
use crate::solver::{contraction_rate, solve_fixed_point, step_size_bound, SolverConfig};

/// Pairs sampled for the margin used by [`verify_robustness`].
pub const ROBUSTNESS_MARGIN_PAIRS: usize = 256;
/// Relative slack allowed before a trial counts as a violation.
pub const ROBUSTNESS_SLACK: f64 = 1e-6;

/// `alpha lambda / (1 - sqrt(1 - 2 alpha m + alpha^2 (2 - m)^2))`: the factor
/// bounding `||f*(a) - f*(b)|| / ||a - b||`. Infinite at the step-size
/// bound; at `alpha = 0` the limit `lambda / m` is returned.
pub fn robustness_bound(alpha: f64, lambda: f64, m: f64) -> Result<f64> {
    let sup = step_size_bound(m)?;
    if alpha < 0.0 || alpha > sup {
        return param_err(format!("alpha {alpha} outside [0, {sup}]"));
    }
    if alpha == 0.0 {
        return Ok(lambda / m);
    }
    let rate = contraction_rate(m, alpha)?;
    if rate >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(alpha * lambda / (1.0 - rate))
}

/// Empirical check of the perturbation bound.
#[derive(Debug, Clone)]
pub struct RobustnessReport {
    /// `robustness_bound(alpha, lambda, m_hat)`, or infinity when the margin
    /// gives no guarantee at this step size.
    pub bound_factor: f64,
    pub m_hat: f64,
    pub empirical_ratios: Vec<f64>,
    pub max_ratio: f64,
    pub violated: bool,
    /// Trials with a zero perturbation (ratio undefined).
    pub skipped_trials: usize,
    /// Trials whose perturbed solve did not converge.
    pub nonconverged_trials: usize,
}

/// Perturbs `base_measurement` `trials` times (perturbation norm
/// `perturb_scale * ||b||`), solves both fixed points and compares
/// `||f*(a) - f*(b)|| / ||a - b||` with the bound evaluated at the sampled
/// margin `m_hat`. Trials run in parallel with per-trial RNG streams.
pub fn verify_robustness(
    w: &NetworkWeights,
    op: &LinearOperatorSpec,
    base_measurement: &Measurement,
    trials: usize,
    perturb_scale: f64,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<RobustnessReport> {
    let base = solve_fixed_point(w, op, base_measurement, None, cfg)?;
    if !base.converged {
        return param_err("solver did not converge on the base measurement");
    }
    let spec = SamplingSpec {
        shape: op.shape(),
        random_scale: base.solution.norm() / ((base.solution.len() as f64) * 2.0).sqrt().max(1.0) + 1e-3,
        anchors: vec![base.solution.clone()],
        perturb_scale: 0.1,
    };
    let margin = monotone_margin(w, ROBUSTNESS_MARGIN_PAIRS, seed ^ 0x6d61_7267, &spec)?;
    let m_used = margin.m_hat.min(1.0);
    let bound_factor = if m_used <= 0.0 {
        f64::INFINITY
    } else {
        match robustness_bound(cfg.alpha, cfg.lambda, m_used) {
            Ok(b) => b,
            Err(_) => f64::INFINITY,
        }
    };

    let target = perturb_scale * base_measurement.norm();
    let outcomes = parallel::map_indexed(trials, |t| -> Result<Option<(f64, bool)>> {
        if target == 0.0 {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64 + 1);
        let mut noise = Measurement::zeros(base_measurement.layout());
        noise.add_noise(1.0, &mut rng);
        let n = noise.norm();
        if n == 0.0 {
            return Ok(None);
        }
        noise.data_mut().iter_mut().for_each(|z| *z *= target / n);
        let perturbed = base_measurement.add(&noise);
        let res = solve_fixed_point(w, op, &perturbed, None, cfg)?;
        let ratio = res.solution.sub(&base.solution).norm() / noise.norm();
        Ok(Some((ratio, res.converged)))
    });
    let mut ratios = Vec::new();
    let (mut skipped, mut nonconverged) = (0, 0);
    for o in outcomes {
        match o? {
            None => skipped += 1,
            Some((_, false)) => nonconverged += 1,
            Some((r, true)) => ratios.push(r),
        }
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(RobustnessReport {
        bound_factor,
        m_hat: margin.m_hat,
        violated: max_ratio > bound_factor * (1.0 + ROBUSTNESS_SLACK),
        empirical_ratios: ratios,
        max_ratio,
        skipped_trials: skipped,
        nonconverged_trials: nonconverged,
    })
}
