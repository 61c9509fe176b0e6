use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TaggedText, MASK};

/// Fraction of words masked for denoising pre-training.
pub const DEFAULT_MASK_RATE: f64 = 0.35;

/// Replaces each word independently with `[mask]` with probability `rate`.
///
/// Length and the positions of surviving words are unchanged. The form code
/// and `[eos]` live outside the token list and are never touched.
pub fn mask_words(text: &TaggedText, rate: f64, seed: u64) -> TaggedText {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = text
        .tokens()
        .iter()
        .map(|t| {
            if rng.random::<f64>() < rate {
                MASK.to_string()
            } else {
                t.clone()
            }
        })
        .collect();
    TaggedText::from_parts_unchecked(text.form(), tokens)
}
