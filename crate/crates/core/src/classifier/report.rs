use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FormScorer;
use crate::corpus::{FormCode, ParallelPair, TaggedText};
use crate::error::{Error, Result};

/// Precision, recall and F1 of a classifier on a labelled test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_test: usize,
}

impl ClassifierReport {
    /// From `(predicted, actual)` labels.
    pub fn from_predictions(labels: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut fp, mut fneg, mut n) = (0usize, 0usize, 0usize, 0usize);
        for (pred, actual) in labels {
            n += 1;
            match (pred, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fneg);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassifierReport {
            precision,
            recall,
            f1,
            n_test: n,
        }
    }
}

/// Scores `clf` on pairs: targets are positives, sources negatives.
pub fn evaluate_classifier(clf: &dyn FormScorer, pairs: &[ParallelPair]) -> ClassifierReport {
    let labels = pairs.iter().flat_map(|p| {
        [
            (clf.predict_proba(p.target.tokens()) > 0.5, true),
            (clf.predict_proba(p.source.tokens()) > 0.5, false),
        ]
    });
    ClassifierReport::from_predictions(labels.collect::<Vec<_>>())
}

/// Fraction of `texts` scored strictly above 0.5.
pub fn form_accuracy(clf: &dyn FormScorer, texts: &[TaggedText]) -> Result<f64> {
    if texts.is_empty() {
        return Err(Error::NoOutputs);
    }
    let hits = texts
        .iter()
        .filter(|t| clf.predict_proba(t.tokens()) > 0.5)
        .count();
    Ok(hits as f64 / texts.len() as f64)
}

/// F1 of every classifier (rows) on every form's test set (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFormMatrix {
    pub forms: Vec<FormCode>,
    pub f1: Vec<Vec<f64>>,
}

impl CrossFormMatrix {
    pub fn get(&self, classifier: FormCode, test_set: FormCode) -> Option<f64> {
        let i = self.forms.iter().position(|&f| f == classifier)?;
        let j = self.forms.iter().position(|&f| f == test_set)?;
        Some(self.f1[i][j])
    }

    /// Every diagonal entry is at least every other entry in its row.
    pub fn is_row_diagonal_dominant(&self) -> bool {
        self.f1
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&v| v <= row[i]))
    }
}

pub fn cross_form_matrix<C: FormScorer>(
    classifiers: &BTreeMap<FormCode, C>,
    test_sets: &BTreeMap<FormCode, Vec<ParallelPair>>,
) -> Result<CrossFormMatrix> {
    for form in FormCode::FIGURATIVE {
        if !classifiers.contains_key(&form) || !test_sets.contains_key(&form) {
            return Err(Error::MissingForm(form));
        }
    }
    let forms = FormCode::FIGURATIVE.to_vec();
    let f1 = forms
        .iter()
        .map(|row| {
            forms
                .iter()
                .map(|col| evaluate_classifier(&classifiers[row], &test_sets[col]).f1)
                .collect()
        })
        .collect();
    Ok(CrossFormMatrix { forms, f1 })
}
