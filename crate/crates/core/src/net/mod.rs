//! The learned operator H: a plain convolutional network on the real and
//! imaginary planes, with exact VJPs and per-layer spectral normalization.

mod checkpoint;
mod conv;
mod weights;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, NET_MAGIC};
pub use weights::{
    random_unnormalized, Activation, ConvLayer, NetworkConfig, NetworkWeights, WeightGradient, IO_CHANNELS,
};
