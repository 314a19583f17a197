use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{Dataset, Split};
use super::metrics::{magnitude_psnr, ssim, SsimParams};
use super::optimizer::{Optimizer, OptimizerState};
use crate::analysis::{lipschitz_penalty_gradient, local_lipschitz, DEFAULT_ASCENT_STEP};
use crate::error::{param_err, MolError, Result};
use crate::net::{NetworkWeights, WeightGradient};
use crate::parallel;
use crate::seed::indexed_seed;
use crate::solver::{deq_backward, solve_fixed_point, SolverConfig};

/// Power iterations per spectral normalization in MOL-SN mode (warm-started).
pub const SN_POWER_ITERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Local Lipschitz penalty added to the loss.
    MolLr,
    /// Spectral normalization to `1 - m_target` after every update.
    MolSn,
    /// Plain MSE with no constraint.
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub lip_weight: f64,
    pub lip_ascent_steps: usize,
    pub mode: TrainMode,
    pub m_target: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 4,
            learning_rate: 1e-4,
            optimizer: Optimizer::default(),
            lip_weight: 1.0,
            lip_ascent_steps: 10,
            mode: TrainMode::MolLr,
            m_target: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return param_err("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return param_err("batch_size must be positive");
        }
        if !(self.lip_weight >= 0.0) {
            return param_err("lip_weight must be non-negative");
        }
        if !(self.m_target > 0.0 && self.m_target < 1.0) {
            return param_err("m_target must lie in (0, 1)");
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-image loss over the batches that were applied.
    pub train_loss: f64,
    pub val_psnr: f64,
    pub val_ssim: f64,
    /// Mean local Lipschitz estimate at the training fixed points.
    pub mean_lip: f64,
    pub mean_nfe: f64,
    pub diverged_batches: usize,
    pub batches: usize,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub weights: NetworkWeights,
    pub optimizer_state: OptimizerState,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    /// Fresh state; MOL-SN mode normalizes the initial weights.
    pub fn new(weights: NetworkWeights, cfg: &TrainConfig) -> Self {
        let weights = match cfg.mode {
            TrainMode::MolSn => weights.spectral_normalize(1.0 - cfg.m_target, 100),
            _ => weights,
        };
        Self {
            optimizer_state: OptimizerState::new(&cfg.optimizer, weights.num_params()),
            weights,
            epoch: 0,
            history: Vec::new(),
        }
    }
}

/// Reconstruction quality of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub nfe: usize,
    pub converged: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub count: usize,
    /// Means over images with a finite reconstruction (NaN if none).
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_nfe: f64,
    pub converged: usize,
}

/// Reconstructs `indices` with the fixed-point solver and scores them
/// against the ground truth (magnitude PSNR and SSIM).
pub fn evaluate(
    w: &NetworkWeights,
    data: &Dataset,
    indices: &[usize],
    cfg: &SolverConfig,
) -> Result<(Vec<ImageEval>, EvalSummary)> {
    let evals = parallel::map_slice(indices, |&i| -> Result<ImageEval> {
        let op = data.operator(i)?;
        match solve_fixed_point(w, &op, &data.measurements[i], None, cfg) {
            Ok(res) => Ok(ImageEval {
                index: i,
                psnr: magnitude_psnr(&res.solution, &data.images[i])?,
                ssim: ssim(&res.solution, &data.images[i], &SsimParams::default())?,
                nfe: res.nfe,
                converged: res.converged,
                diverged: res.diverged,
            }),
            Err(MolError::Numeric { iteration }) => Ok(ImageEval {
                index: i,
                psnr: f64::NAN,
                ssim: f64::NAN,
                nfe: iteration,
                converged: false,
                diverged: true,
            }),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let finite: Vec<&ImageEval> = evals.iter().filter(|e| e.psnr.is_finite()).collect();
    let mean = |f: &dyn Fn(&ImageEval) -> f64| {
        if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().map(|e| f(e)).sum::<f64>() / finite.len() as f64
        }
    };
    let summary = EvalSummary {
        count: evals.len(),
        mean_psnr: mean(&|e| e.psnr),
        mean_ssim: mean(&|e| e.ssim),
        mean_nfe: if evals.is_empty() {
            f64::NAN
        } else {
            evals.iter().map(|e| e.nfe as f64).sum::<f64>() / evals.len() as f64
        },
        converged: evals.iter().filter(|e| e.converged).count(),
    };
    Ok((evals, summary))
}

enum Example {
    Failed { nfe: usize },
    Done { loss: f64, grad: WeightGradient, lip: f64, nfe: usize },
}

fn train_example(
    w: &NetworkWeights,
    data: &Dataset,
    i: usize,
    cfg: &SolverConfig,
    tcfg: &TrainConfig,
    ascent_seed: u64,
) -> Result<Example> {
    let op = data.operator(i)?;
    let res = match solve_fixed_point(w, &op, &data.measurements[i], None, cfg) {
        Ok(r) => r,
        Err(MolError::Numeric { iteration }) => return Ok(Example::Failed { nfe: iteration }),
        Err(e) => return Err(e),
    };
    if !res.converged {
        return Ok(Example::Failed { nfe: res.nfe });
    }
    let x = res.solution;
    let err = x.sub(&data.images[i]);
    let mut loss = err.norm_sqr();
    let mut cotangent = err.scaled(2.0);
    let lip = local_lipschitz(w, &x, tcfg.lip_ascent_steps, DEFAULT_ASCENT_STEP, ascent_seed)?;
    let mut penalty = None;
    if tcfg.mode == TrainMode::MolLr && tcfg.lip_weight > 0.0 {
        // The perturbation is held fixed; the penalty depends on w directly
        // and through the fixed point.
        let (value, mut gw, gf) = lipschitz_penalty_gradient(w, &x, &lip.perturbation)?;
        loss += tcfg.lip_weight * value;
        cotangent.axpy(tcfg.lip_weight, &gf);
        gw.scale(tcfg.lip_weight);
        penalty = Some(gw);
    }
    let mut grad = match deq_backward(w, &op, &x, &cotangent, cfg) {
        Ok(b) => b.gradient,
        Err(MolError::BackwardNonConvergence { .. }) | Err(MolError::Numeric { .. }) => {
            return Ok(Example::Failed { nfe: res.nfe })
        }
        Err(e) => return Err(e),
    };
    if let Some(p) = penalty {
        grad.axpy(1.0, &p);
    }
    Ok(Example::Done {
        loss,
        grad,
        lip: lip.value,
        nfe: res.nfe,
    })
}

/// One pass over the training split in shuffled mini-batches.
///
/// A batch in which any solve fails to converge (or the backward pass fails)
/// is skipped and counted in `diverged_batches`; the epoch fails only if
/// every batch is skipped. Batch elements are solved in parallel and their
/// gradients summed in batch order.
pub fn train_epoch(mut state: TrainState, data: &Dataset, cfg: &SolverConfig, tcfg: &TrainConfig) -> Result<TrainState> {
    tcfg.validate()?;
    cfg.validate()?;
    let mut order = data.indices(Split::Train);
    if order.is_empty() {
        return param_err("dataset has no training images");
    }
    let epoch = state.epoch;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(indexed_seed(tcfg.seed, "shuffle", epoch as u64)));

    let (mut loss_sum, mut applied, mut diverged) = (0.0, 0usize, 0usize);
    let (mut lip_sum, mut lip_count) = (0.0, 0usize);
    let (mut nfe_sum, mut nfe_count) = (0.0, 0usize);
    let batches: Vec<&[usize]> = order.chunks(tcfg.batch_size).collect();
    for batch in &batches {
        let w = &state.weights;
        let outcomes = parallel::map_slice(batch, |&i| {
            let seed = indexed_seed(tcfg.seed, "ascent", (epoch * data.len() + i) as u64);
            train_example(w, data, i, cfg, tcfg, seed)
        });
        let mut grad = WeightGradient::zeros_like(w);
        let (mut batch_loss, mut failed) = (0.0, false);
        let mut lips = Vec::with_capacity(batch.len());
        for o in outcomes {
            match o? {
                Example::Failed { nfe } => {
                    failed = true;
                    nfe_sum += nfe as f64;
                }
                Example::Done { loss, grad: g, lip, nfe } => {
                    batch_loss += loss;
                    grad.axpy(1.0, &g);
                    lips.push(lip);
                    nfe_sum += nfe as f64;
                }
            }
            nfe_count += 1;
        }
        if failed {
            diverged += 1;
            continue;
        }
        let n = batch.len() as f64;
        grad.scale(1.0 / n);
        loss_sum += batch_loss / n;
        applied += 1;
        lip_sum += lips.iter().sum::<f64>();
        lip_count += lips.len();

        let mut params = state.weights.flatten();
        state
            .optimizer_state
            .step(&tcfg.optimizer, &mut params, &grad.flatten(), tcfg.learning_rate)?;
        let mut updated = state.weights.with_params(&params)?;
        if tcfg.mode == TrainMode::MolSn {
            updated = updated.spectral_normalize(1.0 - tcfg.m_target, SN_POWER_ITERS);
        }
        state.weights = updated;
    }
    if applied == 0 {
        return Err(MolError::AllBatchesDiverged {
            epoch,
            batches: batches.len(),
        });
    }
    let (_, val) = evaluate(&state.weights, data, &data.indices(Split::Validation), cfg)?;
    state.history.push(EpochRecord {
        epoch: epoch + 1,
        train_loss: loss_sum / applied as f64,
        val_psnr: val.mean_psnr,
        val_ssim: val.mean_ssim,
        mean_lip: if lip_count > 0 { lip_sum / lip_count as f64 } else { f64::NAN },
        mean_nfe: nfe_sum / nfe_count.max(1) as f64,
        diverged_batches: diverged,
        batches: batches.len(),
    });
    state.epoch += 1;
    Ok(state)
}

/// Runs epochs until `tcfg.epochs` have been completed, calling `on_epoch`
/// after each one.
pub fn train(
    mut state: TrainState,
    data: &Dataset,
    cfg: &SolverConfig,
    tcfg: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    while state.epoch < tcfg.epochs {
        state = train_epoch(state, data, cfg, tcfg)?;
        on_epoch(&state)?;
    }
    Ok(state)
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_psnr,val_ssim,mean_lip,mean_nfe,diverged_batches";

/// Writes the history as CSV with [`HISTORY_HEADER`].
pub fn write_history_csv(history: &[EpochRecord], out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.train_loss, r.val_psnr, r.val_ssim, r.mean_lip, r.mean_nfe, r.diverged_batches
        )?;
    }
    Ok(())
}
