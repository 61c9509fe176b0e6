//! Binary literal-vs-figurative detectors.
//!
//! Each [`FormClassifier`] is an L2-regularized logistic regression over
//! hashed word (1–3) and character (3–5) n-grams. Anything implementing
//! [`FormScorer`] can stand in for it in filtering and evaluation.

mod features;
mod logistic;
mod report;

use crate::corpus::FormCode;

pub use features::{featurize, SparseVector, HASH_BUCKETS};
pub use logistic::{train_classifier, FormClassifier, TrainParams};
pub use report::{
    cross_form_matrix, evaluate_classifier, form_accuracy, ClassifierReport, CrossFormMatrix,
};

/// Probability that a token sequence bears a particular figurative form.
pub trait FormScorer: Sync {
    fn form(&self) -> FormCode;

    fn predict_proba(&self, tokens: &[String]) -> f64;
}
