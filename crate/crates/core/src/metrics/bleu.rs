use std::collections::HashMap;

use crate::corpus::TaggedText;
use crate::error::{Error, Result};

const MAX_N: usize = 4;

/// Corpus-level clipped n-gram statistics for n = 1..=4.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NgramStats {
    pub matches: [usize; MAX_N],
    pub totals: [usize; MAX_N],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl NgramStats {
    fn add_sentence<S: AsRef<str>>(&mut self, cand: &[S], reference: &[S]) {
        self.candidate_len += cand.len();
        self.reference_len += reference.len();
        for n in 1..=MAX_N {
            let ref_counts = counts(reference, n);
            for (gram, c) in counts(cand, n) {
                self.totals[n - 1] += c;
                self.matches[n - 1] += c.min(ref_counts.get(&gram).copied().unwrap_or(0));
            }
        }
    }

    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_N {
            if self.matches[n] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[n] as f64 / self.totals[n] as f64).ln();
        }
        let c = self.candidate_len as f64;
        let r = self.reference_len as f64;
        let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
        bp * (log_sum / MAX_N as f64).exp()
    }
}

fn counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect())
                .or_insert(0) += 1;
        }
    }
    out
}

/// Corpus BLEU over whitespace tokens with a single reference per
/// candidate. Case-sensitive, unsmoothed: any zero n-gram precision gives 0.
pub fn bleu<C, S>(candidates: &[C], references: &[C]) -> Result<f64>
where
    C: AsRef<[S]>,
    S: AsRef<str>,
{
    if candidates.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut stats = NgramStats::default();
    for (c, r) in candidates.iter().zip(references) {
        stats.add_sentence(c.as_ref(), r.as_ref());
    }
    Ok(stats.score())
}

/// [`bleu`] over word tokens; form codes and `[eos]` never take part.
pub fn bleu_texts(candidates: &[TaggedText], references: &[TaggedText]) -> Result<f64> {
    let c: Vec<&[String]> = candidates.iter().map(TaggedText::tokens).collect();
    let r: Vec<&[String]> = references.iter().map(TaggedText::tokens).collect();
    bleu(&c, &r)
}

/// `2ab / (a + b)`, or 0 when both are 0.
pub fn harmonic_mean(accuracy: f64, bleu: f64) -> Result<f64> {
    for (name, v) in [("accuracy", accuracy), ("bleu", bleu)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} {v} outside [0, 1]")));
        }
    }
    if accuracy + bleu == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * accuracy * bleu / (accuracy + bleu))
}
