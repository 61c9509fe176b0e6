//! Multi-form figurative text rewriting at desk scale.
//!
//! The crate bundles everything needed to train and evaluate a small
//! encoder-decoder transformer that rewrites sentences between a literal form
//! and five figures of speech:
//!
//! * [`corpus`]: form codes, tagged texts, word masking, upsampling,
//!   classifier-threshold filtering, TSV I/O and a synthetic benchmark.
//! * [`classifier`]: hashed n-gram logistic-regression form detectors.
//! * [`model`]: the transformer, with the target-form embedding injected into
//!   the encoder input through single-key cross-attention.
//! * [`trainer`]: denoising pre-training, supervised stages, model variants.
//! * [`generator`]: direct and literal-pivot decoding.
//! * [`metrics`]: BLEU, harmonic mean, per-direction reports, PCA probe.
//!
//! The numeric core is generic over [`Scalar`]; [`Model`] (f32) is what the
//! training pipeline uses and [`Model64`] is used where f64 precision matters
//! (gradient checks).

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod generator;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod trainer;
pub mod vocab;

pub use corpus::{FormCode, ParallelPair, ScoredPair, TaggedText};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use vocab::Vocab;

/// Single-precision model parameters, the default for training and inference.
pub type Model = model::ModelParams<f32>;
/// Double-precision model parameters.
pub type Model64 = model::ModelParams<f64>;
/// Single-precision Adam state.
pub type Adam = optim::Adam<f32>;
