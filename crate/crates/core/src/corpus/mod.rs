//! Data model, corruption, resampling, filtering, file formats and the
//! synthetic benchmark.

mod form;
pub mod io;
mod noise;
mod sampling;
pub mod synth;
mod text;

pub use form::FormCode;
pub use noise::{mask_words, DEFAULT_MASK_RATE};
pub use sampling::{filter_pairs, upsample, FILTER_THRESHOLDS};
pub use synth::{lexicon, synth_corpus, synth_paraphrase_pool, Splits, SynthCorpus};
pub use text::{ParallelPair, ScoredPair, TaggedText, EOS, MASK, PAD, UNK};
