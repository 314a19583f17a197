//! Complex images, forward models and the data-consistency solve.

mod cg;
mod fft;
mod image;
pub mod io;
mod mask;
mod operator;

pub use cg::{conjugate_gradient, CgOutcome};
pub use fft::{signed_frequency, Fft2};
pub use image::{relative_error, ComplexImage};
pub use mask::{make_mask, MaskSpec};
pub use operator::{
    spectral_norm_estimate, synthetic_coil_maps, LinearOperatorSpec, Measurement,
    MeasurementLayout, OperatorVariant, CG_MAX_ITER, CG_TOLERANCE, DEFAULT_COILS,
};
