use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, SparseVector, HASH_BUCKETS};
use super::FormScorer;
use crate::corpus::{FormCode, TaggedText};
use crate::error::{Error, Result};

const MODEL_FORMAT: &str = "figlang-form-classifier";
const MODEL_VERSION: u32 = 1;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// SGD settings for [`train_classifier`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 20,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

/// Logistic regression over hashed n-grams for one figurative form.
#[derive(Debug, Clone, PartialEq)]
pub struct FormClassifier {
    form: FormCode,
    weights: Vec<f64>,
    bias: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    form: FormCode,
    hash_buckets: usize,
    bias: f64,
    /// Nonzero weights as `(bucket, weight)`.
    weights: Vec<(u32, f64)>,
}

impl FormClassifier {
    /// A classifier with the given bias and all weights zero.
    pub fn constant(form: FormCode, bias: f64) -> Self {
        FormClassifier {
            form,
            weights: vec![0.0; HASH_BUCKETS],
            bias,
        }
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn decision(&self, features: &SparseVector) -> f64 {
        features.dot(&self.weights) + self.bias
    }

    pub fn predict_text(&self, text: &TaggedText) -> f64 {
        self.predict_proba(text.tokens())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            form: self.form,
            hash_buckets: HASH_BUCKETS,
            bias: self.bias,
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, &w)| (i as u32, w))
                .collect(),
        };
        let json = serde_json::to_string(&file)?;
        crate::error::write_file(path, json.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&json)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported classifier format {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        if file.hash_buckets != HASH_BUCKETS {
            return Err(Error::Checkpoint(format!(
                "{}: hash space {} does not match {}",
                path.display(),
                file.hash_buckets,
                HASH_BUCKETS
            )));
        }
        let mut weights = vec![0.0; HASH_BUCKETS];
        for (i, w) in file.weights {
            *weights
                .get_mut(i as usize)
                .ok_or_else(|| Error::Checkpoint(format!("weight index {i} out of range")))? = w;
        }
        Ok(FormClassifier {
            form: file.form,
            weights,
            bias: file.bias,
        })
    }
}

impl FormScorer for FormClassifier {
    fn form(&self) -> FormCode {
        self.form
    }

    fn predict_proba(&self, tokens: &[String]) -> f64 {
        sigmoid(self.decision(&featurize(tokens)))
    }
}

/// Fits a classifier separating `pos` (texts in `form`) from `neg`.
///
/// Plain SGD on the logistic loss, one example at a time in an order shuffled
/// per epoch from `seed`. Weight decay is applied through a global scale
/// factor so each step only touches the example's active features.
pub fn train_classifier(
    form: FormCode,
    pos: &[TaggedText],
    neg: &[TaggedText],
    seed: u64,
    params: TrainParams,
) -> Result<FormClassifier> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid(format!(
            "classifier for {form} needs both classes (got {} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let data: Vec<(SparseVector, f64)> = pos
        .iter()
        .map(|t| (featurize(t.tokens()), 1.0))
        .chain(neg.iter().map(|t| (featurize(t.tokens()), 0.0)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    // effective weights are scale * raw
    let mut raw = vec![0.0; HASH_BUCKETS];
    let mut scale = 1.0;
    let mut bias = 0.0;
    let decay = 1.0 - params.learning_rate * params.l2;

    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, y) = &data[i];
            let z = scale * x.dot(&raw) + bias;
            let g = sigmoid(z) - y;
            scale *= decay;
            let step = params.learning_rate * g / scale;
            for &(j, v) in &x.0 {
                raw[j as usize] -= step * v;
            }
            bias -= params.learning_rate * g;
            if scale < 1e-6 {
                raw.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
        }
    }
    raw.iter_mut().for_each(|w| *w *= scale);
    Ok(FormClassifier {
        form,
        weights: raw,
        bias,
    })
}
