//! Synthetic data, the training loop, the unrolled reference and image metrics.

mod dataset;
mod metrics;
mod optimizer;
mod train;
mod unrolled;

pub use dataset::{generate_dataset, make_phantom, make_synthetic_dataset, Dataset, DatasetSpec, PhantomSpec, Split};
pub use metrics::{loss, magnitude_psnr, psnr, ssim, SsimParams, PSNR_CAP_DB};
pub use optimizer::{Optimizer, OptimizerState};
pub use train::{
    evaluate, train, train_epoch, write_history_csv, EpochRecord, EvalSummary, ImageEval, TrainConfig, TrainMode,
    TrainState, HISTORY_HEADER, SN_POWER_ITERS,
};
pub use unrolled::{unrolled_reference, UnrolledResult};
