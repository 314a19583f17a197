//! Forward-backward fixed-point solver and its implicit backward pass.

mod anderson;
mod backward;
mod config;
mod fixed_point;
mod memory;
mod step;

pub use anderson::{anderson_accelerate, ANDERSON_DAMPING};
pub use backward::{deq_backward, BackwardResult};
pub use config::{contraction_rate, step_size_bound, Acceleration, SolverConfig, DEFAULT_ALPHA_FRACTION};
pub use fixed_point::{solve_fixed_point, solve_fixed_point_traced, FixedPointResult};
pub use memory::{BufferMeter, MemoryReport};
pub use step::{fb_step, fixed_point_residual, ForwardBackwardMap};
