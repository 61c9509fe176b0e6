//! Encoder-decoder transformer with target-form injection.
//!
//! Pre-norm layers, GELU feed-forward blocks, sinusoidal positions and one
//! embedding table shared by inputs, form codes and the output projection.
//! Gradients are computed by hand (see `layers`) so the numeric core stays
//! generic over [`Scalar`](crate::Scalar).

mod checkpoint;
mod layers;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub(crate) use network::is_eos;
pub use network::{inject, EncoderInput, Example};
pub use params::{ModelConfig, ModelParams};
