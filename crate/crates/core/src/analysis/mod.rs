//! Certification tools: local Lipschitz estimation, monotonicity margins and
//! the perturbation bound.

mod lipschitz;
mod monotone;
mod report;
mod robustness;

pub use lipschitz::{
    lipschitz_penalty_gradient, local_lipschitz, LipschitzEstimate, DEFAULT_ASCENT_STEP, DEFAULT_ASCENT_STEPS,
};
pub use monotone::{certified_margin, monotone_margin, MonotoneEstimate, SamplingSpec};
pub use report::{parse_key_value, ToKeyValue};
pub use robustness::{robustness_bound, verify_robustness, RobustnessReport, ROBUSTNESS_MARGIN_PAIRS, ROBUSTNESS_SLACK};
