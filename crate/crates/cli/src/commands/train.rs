use mol::net::encode_checkpoint;
use mol::training::{generate_dataset, train, write_history_csv, TrainState, SN_POWER_ITERS};
use mol::NetworkWeights;

use crate::error::CliError;
use crate::RunContext;

pub const HISTORY_FILE: &str = "history.csv";

pub fn checkpoint_name(epoch: usize) -> String {
    format!("checkpoints/epoch_{epoch:04}.molnet")
}

/// Initial weights: `--checkpoint` when given, otherwise a seeded random net
/// normalized so that its spectral bound is `1 - m`.
fn initial_weights(ctx: &RunContext) -> Result<NetworkWeights, CliError> {
    if ctx.checkpoint.is_some() {
        return ctx.require_checkpoint();
    }
    let w = NetworkWeights::init(&ctx.config.network_config(), ctx.seed("init"))?;
    Ok(w.spectral_normalize(1.0 - ctx.config.solver.m, SN_POWER_ITERS))
}

pub fn run(ctx: &RunContext) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let solver = cfg.solver_config()?;
    let tcfg = cfg.train_config();
    let data = generate_dataset(&cfg.dataset_spec()?)?;
    let state = TrainState::new(initial_weights(ctx)?, &tcfg);
    ctx.write_file(&checkpoint_name(state.epoch), encode_checkpoint(&state.weights))?;

    let every = cfg.training.checkpoint_every.max(1);
    let mut io_error = None;
    let state = train(state, &data, &solver, &tcfg, |s| {
        let r = s.history.last().expect("epoch recorded");
        eprintln!(
            "epoch {:>3}  loss {:.5}  val psnr {:.3}  ssim {:.4}  lip {:.4}  nfe {:.1}  diverged {}/{}",
            r.epoch, r.train_loss, r.val_psnr, r.val_ssim, r.mean_lip, r.mean_nfe, r.diverged_batches, r.batches
        );
        if s.epoch % every == 0 || s.epoch == tcfg.epochs {
            if let Err(e) = ctx.write_file(&checkpoint_name(s.epoch), encode_checkpoint(&s.weights)) {
                io_error = Some(e);
            }
        }
        Ok(())
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    if !state.history.is_empty() {
        let mut csv = Vec::new();
        write_history_csv(&state.history, &mut csv)?;
        ctx.write_file(HISTORY_FILE, csv)?;
    }
    Ok(())
}
