use std::fmt::Write as _;

use mol::analysis::{
    certified_margin, local_lipschitz, monotone_margin, verify_robustness, SamplingSpec, ToKeyValue,
    ROBUSTNESS_SLACK,
};
use mol::linops::{ComplexImage, Measurement};
use mol::solver::{
    contraction_rate, deq_backward, fixed_point_residual, solve_fixed_point, step_size_bound, Acceleration,
    SolverConfig,
};
use mol::{MolError, NetworkWeights};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{synthetic_problems, Problem};
use crate::error::CliError;
use crate::RunContext;

pub const REPORT_FILE: &str = "verify.json";
pub const ANALYSIS_FILE: &str = "analysis.txt";
const ADJOINT_TOL: f64 = 1e-10;
const Q_SOLVE_TOL: f64 = 1e-8;
const DECAY_SLACK: f64 = 0.05;
const DECAY_SKIP: usize = 3;
const MARGIN_SLACK: f64 = 0.02;
const LIPSCHITZ_SLACK: f64 = 1e-3;
/// Relative slack for power-iteration estimates of spectral norms.
const SPECTRAL_SLACK: f64 = 1e-4;
const GRADIENT_TOL: f64 = 1e-3;
const FD_STEP: f64 = 1e-5;
const FD_SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            threshold,
            detail: None,
        }
    }

    fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= threshold,
            value,
            threshold,
            detail: None,
        }
    }

    fn failed(name: &str, threshold: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            threshold,
            detail: Some(detail),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub failures: usize,
    pub checks: Vec<Check>,
}

fn rel(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn adjoint_error(p: &Problem, rng: &mut ChaCha8Rng) -> Result<f64, MolError> {
    let (h, w) = p.op.shape();
    let x = ComplexImage::random_normal(h, w, rng);
    let mut y = Measurement::zeros(p.op.layout());
    y.add_noise(1.0, rng);
    let ax = p.op.apply_forward(&x)?;
    let aty = p.op.apply_adjoint(&y)?;
    let lhs = ax.inner(&y);
    let rhs = x.inner(&aty);
    Ok(rel((lhs - rhs).norm(), ax.norm() * y.norm()))
}

fn q_solve_error(p: &Problem, cfg: &SolverConfig, rng: &mut ChaCha8Rng) -> Result<f64, MolError> {
    let (h, w) = p.op.shape();
    let y = ComplexImage::random_normal(h, w, rng);
    let x = p.op.solve_q(&y, cfg.alpha, cfg.lambda)?;
    let back = p.op.apply_q(&x, cfg.alpha, cfg.lambda)?;
    Ok(rel(back.sub(&y).norm(), y.norm()))
}

/// Largest ratio of consecutive relative updates after the first few iterations.
fn max_decay_ratio(trace: &[f64]) -> f64 {
    trace
        .windows(2)
        .enumerate()
        .filter(|(k, _)| k + 1 >= DECAY_SKIP)
        .filter(|(_, pair)| pair[0] > 0.0)
        .map(|(_, pair)| pair[1] / pair[0])
        .fold(0.0, f64::max)
}

/// Central finite differences of `0.5 ||x*(w) - truth||^2` against the implicit gradient.
fn gradient_error(w: &NetworkWeights, p: &Problem, cfg: &SolverConfig, count: usize, seed: u64) -> Result<f64, MolError> {
    let cfg = cfg.clone().with_tolerances(FD_SOLVE_TOL, FD_SOLVE_TOL).with_max_iters(20_000, 20_000);
    let base = solve_fixed_point(w, &p.op, &p.measurement, None, &cfg)?;
    if !base.converged {
        return Err(MolError::Solver {
            iterations: base.nfe,
            residual: base.final_residual().unwrap_or(f64::NAN),
        });
    }
    let grad = deq_backward(w, &p.op, &base.solution, &base.solution.sub(&p.truth), &cfg)?
        .gradient
        .flatten();
    let params = w.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss = |theta: &[f64]| -> Result<f64, MolError> {
        let wp = w.with_params(theta)?;
        let r = solve_fixed_point(&wp, &p.op, &p.measurement, None, &cfg)?;
        Ok(0.5 * r.solution.sub(&p.truth).norm_sqr())
    };
    let (mut diff, mut scale) = (0.0, 0.0);
    for _ in 0..count {
        let i = (rng.next_u64() % params.len() as u64) as usize;
        let mut plus = params.clone();
        plus[i] += FD_STEP;
        let mut minus = params.clone();
        minus[i] -= FD_STEP;
        let fd = (loss(&plus)? - loss(&minus)?) / (2.0 * FD_STEP);
        diff += (fd - grad[i]).powi(2);
        scale += fd.powi(2).max(grad[i].powi(2));
    }
    Ok(if scale > 0.0 { (diff / scale).sqrt() } else { 0.0 })
}

pub fn run(ctx: &RunContext) -> Result<(), CliError> {
    let w = ctx.require_checkpoint()?;
    let cfg_file = &ctx.config;
    let base_cfg = cfg_file.solver_config()?;
    let cfg = base_cfg.clone().with_acceleration(Acceleration::None);
    let an = &cfg_file.analysis;
    let problems = synthetic_problems(ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed("verify"));
    let mut checks = Vec::new();
    let mut text = String::new();

    let mut adj = 0.0f64;
    let mut qs = 0.0f64;
    for p in &problems {
        adj = adj.max(adjoint_error(p, &mut rng)?);
        qs = qs.max(q_solve_error(p, &cfg, &mut rng)?);
    }
    checks.push(Check::at_most("adjoint", adj, ADJOINT_TOL));
    checks.push(Check::at_most("q_solve", qs, Q_SOLVE_TOL));

    let bound = step_size_bound(cfg.m)?;
    let mut step = Check::at_most("step_size", cfg.alpha, bound);
    step.passed = if cfg.strict_mode { cfg.alpha < bound } else { cfg.alpha <= bound };
    checks.push(step);

    let global = w.global_lipschitz_bound();
    checks.push(
        Check::at_most("contraction_premise", global, (1.0 - cfg.m) * (1.0 + SPECTRAL_SLACK))
            .with_detail("composed spectral bound of H against 1 - m"),
    );

    let rate = contraction_rate(cfg.m, cfg.alpha)?;
    let mut solutions = Vec::new();
    let mut decay = 0.0f64;
    let mut residual = 0.0f64;
    let mut failures = Vec::new();
    for (k, p) in problems.iter().enumerate() {
        match solve_fixed_point(&w, &p.op, &p.measurement, None, &cfg) {
            Ok(res) => {
                decay = decay.max(max_decay_ratio(&res.residual_trace));
                if res.converged {
                    residual = residual.max(fixed_point_residual(&res.solution, &w, &p.op, &p.measurement, cfg.lambda)?);
                    solutions.push(res.solution);
                } else {
                    failures.push(format!("problem {k}: {}", if res.diverged { "diverged" } else { "hit max_iter" }));
                }
            }
            Err(e) => failures.push(format!("problem {k}: {e}")),
        }
    }
    let mut conv = Check::at_least("convergence", solutions.len() as f64, problems.len() as f64);
    if !failures.is_empty() {
        conv = conv.with_detail(failures.join("; "));
    }
    checks.push(conv);
    let decay_check = if failures.iter().any(|f| !f.ends_with("max_iter") && !f.ends_with("diverged")) {
        Check::failed("contraction_decay", rate + DECAY_SLACK, "non-finite iterates".into())
    } else {
        Check::at_most("contraction_decay", decay, rate + DECAY_SLACK)
    };
    checks.push(decay_check);
    if solutions.is_empty() {
        checks.push(Check::failed("fixed_point_residual", 10.0 * cfg.tol_fwd, "no converged solve".into()));
    } else {
        checks.push(Check::at_most("fixed_point_residual", residual, 10.0 * cfg.tol_fwd));
    }

    let (h, wd) = cfg_file.shape();
    let scale = if solutions.is_empty() {
        1.0
    } else {
        solutions.iter().map(|s| s.norm()).sum::<f64>() / solutions.len() as f64 / ((2 * h * wd) as f64).sqrt()
    };
    let spec = SamplingSpec {
        shape: (h, wd),
        random_scale: scale + 1e-3,
        anchors: solutions.clone(),
        perturb_scale: 0.1,
    };
    let margin = monotone_margin(&w, an.margin_pairs.max(2), ctx.seed("margin"), &spec)?;
    writeln!(text, "[monotone]\n{}", margin.to_key_value()).unwrap();
    let certified = certified_margin(&w);
    checks.push(Check::at_least("monotone_margin", margin.m_hat, cfg.m - MARGIN_SLACK));
    checks.push(
        Check::at_least("monotone_certified", margin.m_hat, certified - 1e-6)
            .with_detail("sampled margin against 1 - composed spectral bound"),
    );
    checks.push(Check::at_most("f_lipschitz", margin.f_lipschitz, 2.0 - margin.m_hat + MARGIN_SLACK));

    let mut local = 0.0f64;
    for (k, s) in solutions.iter().enumerate() {
        let est = local_lipschitz(
            &w,
            s,
            an.ascent_steps,
            an.ascent_step_size,
            mol::seed::indexed_seed(cfg_file.seed, "ascent", k as u64),
        )?;
        if k == 0 {
            writeln!(text, "[local_lipschitz]\n{}", est.to_key_value()).unwrap();
        }
        local = local.max(est.value);
    }
    if solutions.is_empty() {
        checks.push(Check::failed("local_lipschitz", global + LIPSCHITZ_SLACK, "no fixed point".into()));
    } else {
        checks.push(Check::at_most("local_lipschitz", local, global + LIPSCHITZ_SLACK));
    }

    if an.robustness_trials > 0 {
        let p = &problems[0];
        let check = match verify_robustness(
            &w,
            &p.op,
            &p.measurement,
            an.robustness_trials,
            an.perturb_scale,
            &cfg,
            ctx.seed("trials"),
        ) {
            Ok(r) => {
                writeln!(text, "[robustness]\n{}", r.to_key_value()).unwrap();
                let threshold = r.bound_factor * (1.0 + ROBUSTNESS_SLACK);
                if global >= 1.0 {
                    Check {
                        name: "robustness".into(),
                        passed: false,
                        value: r.max_ratio,
                        threshold,
                        detail: Some(format!("no guarantee: spectral bound {global:.4} of H is not below 1")),
                    }
                } else if r.bound_factor.is_finite() {
                    let mut c = Check::at_most("robustness", r.max_ratio, threshold);
                    c.passed = !r.violated && r.nonconverged_trials == 0;
                    if r.nonconverged_trials > 0 {
                        c = c.with_detail(format!("{} trials did not converge", r.nonconverged_trials));
                    }
                    c
                } else {
                    Check {
                        name: "robustness".into(),
                        passed: false,
                        value: r.max_ratio,
                        threshold,
                        detail: Some(format!("no guarantee: sampled margin {:.4} at this step size", r.m_hat)),
                    }
                }
            }
            Err(e) => Check::failed("robustness", f64::INFINITY, e.to_string()),
        };
        checks.push(check);
    }

    if an.gradient_params > 0 {
        checks.push(
            match gradient_error(&w, &problems[0], &cfg, an.gradient_params, ctx.seed("gradient")) {
                Ok(e) => Check::at_most("gradient", e, GRADIENT_TOL),
                Err(e) => Check::failed("gradient", GRADIENT_TOL, e.to_string()),
            },
        );
    }

    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let report = VerifyReport {
        passed: failed.is_empty(),
        failures: failed.len(),
        checks: checks.clone(),
    };
    for c in &checks {
        eprintln!(
            "{:<22} {}  value {:e}  threshold {:e}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    ctx.write_file(ANALYSIS_FILE, text)?;
    ctx.write_file(REPORT_FILE, serde_json::to_string_pretty(&report).expect("report serializes"))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}
