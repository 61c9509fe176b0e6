//! Evaluation: corpus BLEU, form strength, harmonic mean, semantic scorer
//! plugins and the encoder PCA probe.

mod bleu;
mod pca;
mod plugin;
mod report;

pub use bleu::{bleu, bleu_texts, harmonic_mean, NgramStats};
pub use pca::{pca, pca_probe, write_probe, Pca, ProbeRow};
pub use plugin::{SemanticScorer, TokenF1};
pub use report::{
    evaluate_direction, read_table, write_table, DirectionData, EvalReport, NotForm, TableRow,
};
