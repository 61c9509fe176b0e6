use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FormCode, ParallelPair, ScoredPair};
use crate::error::{Error, Result};

/// Per-form selection thresholds for classifier-filtered paraphrase data.
pub const FILTER_THRESHOLDS: [(FormCode, f64); 5] = [
    (FormCode::Hyperbole, 0.94),
    (FormCode::Idiom, 0.95),
    (FormCode::Sarcasm, 0.70),
    (FormCode::Metaphor, 0.95),
    (FormCode::Simile, 0.76),
];

impl FormCode {
    /// Threshold used when filtering paraphrase pairs for this form.
    pub fn filter_threshold(self) -> Option<f64> {
        FILTER_THRESHOLDS
            .iter()
            .find(|(f, _)| *f == self)
            .map(|&(_, s)| s)
    }
}

/// Replicates `pairs` up to exactly `target_n` items.
///
/// Every pair appears `target_n / len` or `target_n / len + 1` times; which
/// pairs receive the extra copy is decided by a seeded shuffle. Inputs that
/// are already large enough come back unchanged. The output lists whole
/// copies of the input in order, followed by the remainder pairs.
pub fn upsample(pairs: &[ParallelPair], target_n: usize, seed: u64) -> Result<Vec<ParallelPair>> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if target_n == 0 {
        return Err(Error::invalid("upsample target must be at least 1"));
    }
    let n = pairs.len();
    if n >= target_n {
        return Ok(pairs.to_vec());
    }
    let (copies, extra) = (target_n / n, target_n % n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut out = Vec::with_capacity(target_n);
    for _ in 0..copies {
        out.extend_from_slice(pairs);
    }
    out.extend(order[..extra].iter().map(|&i| pairs[i].clone()));
    Ok(out)
}

/// Keeps pairs whose source is confidently literal and whose target is
/// confidently figurative: both probabilities strictly above `sigma`.
pub fn filter_pairs(scored: &[ScoredPair], sigma: f64) -> Vec<ParallelPair> {
    scored
        .iter()
        .filter(|s| s.p_source_literal > sigma && s.p_target_figurative > sigma)
        .map(|s| s.pair.clone())
        .collect()
}
