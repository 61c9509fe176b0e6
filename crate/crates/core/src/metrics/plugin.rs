use std::collections::HashMap;

use crate::corpus::TaggedText;
use crate::error::{Error, Result};

/// A corpus-level semantic similarity scorer (BERTScore, BLEURT, COMET and
/// the like plug in here).
pub trait SemanticScorer: Sync {
    fn name(&self) -> &str;
    fn score(&self, candidates: &[TaggedText], references: &[TaggedText]) -> Result<f64>;
}

/// Mean per-sentence F1 of bag-of-token overlap.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1;

impl SemanticScorer for TokenF1 {
    fn name(&self) -> &str {
        "token-f1"
    }

    fn score(&self, candidates: &[TaggedText], references: &[TaggedText]) -> Result<f64> {
        if candidates.len() != references.len() {
            return Err(Error::invalid("candidate and reference counts differ"));
        }
        if candidates.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let total: f64 = candidates
            .iter()
            .zip(references)
            .map(|(c, r)| sentence_f1(c.tokens(), r.tokens()))
            .sum();
        Ok(total / candidates.len() as f64)
    }
}

fn sentence_f1(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let mut bag: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *bag.entry(t).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for t in cand {
        if let Some(c) = bag.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}
