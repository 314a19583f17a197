//! Monotone operator learning for linear inverse problems.
//!
//! Images are recovered as fixed points of the forward-backward map
//! `x <- (I + a*l*A^H A)^{-1} ((1 - a) x + a H(x) + a*l*A^H b)`, where `H` is a
//! small convolutional network whose Lipschitz constant is kept below `1 - m`
//! so that `I - H` is `m`-monotone. Gradients are obtained by implicit
//! differentiation at the fixed point, so memory does not grow with the
//! number of forward iterations.

pub mod analysis;
pub mod error;
pub mod linops;
pub mod net;
pub mod parallel;
pub mod seed;
pub mod solver;
pub mod training;

pub use error::{MolError, Result};
pub use linops::{ComplexImage, LinearOperatorSpec, MaskSpec, Measurement};
pub use net::{NetworkConfig, NetworkWeights, WeightGradient};
pub use solver::{FixedPointResult, SolverConfig};

