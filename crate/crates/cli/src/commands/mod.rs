pub mod bench;
pub mod reconstruct;
pub mod train;
pub mod verify;

use mol::linops::{ComplexImage, LinearOperatorSpec, Measurement};
use mol::training::make_phantom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::RunContext;

/// A synthetic problem used by `verify` and `bench`.
pub struct Problem {
    pub op: LinearOperatorSpec,
    pub truth: ComplexImage,
    pub measurement: Measurement,
}

/// Builds `ctx.config.analysis.problems` phantoms with their own operators.
pub fn synthetic_problems(ctx: &RunContext) -> Result<Vec<Problem>, CliError> {
    let cfg = &ctx.config;
    let phantom = cfg.dataset_phantom();
    (0..cfg.analysis.problems as u64)
        .map(|k| {
            let op = cfg.problem_operator(k)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mol::seed::indexed_seed(cfg.seed, "problems", k));
            let truth = make_phantom(cfg.shape(), &phantom, &mut rng);
            let mut measurement = op.apply_forward(&truth)?;
            measurement.add_noise(cfg.dataset.noise_sigma, &mut rng);
            Ok(Problem {
                op,
                truth,
                measurement,
            })
        })
        .collect()
}
