//! Staged training: denoising pre-training, paraphrase supervision and
//! figurative fine-tuning, with gradient accumulation and early stopping on
//! validation loss.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{mask_words, FormCode, ParallelPair, TaggedText, DEFAULT_MASK_RATE};
use crate::error::{Error, Result};
use crate::model::{Example, ModelParams};
use crate::optim::{Adam, AdamConfig};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Stage {
    Denoise,
    Paraphrase,
    Figurative,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Denoise => "DENOISE",
            Stage::Paraphrase => "PARAPHRASE",
            Stage::Figurative => "FIGURATIVE",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub seed: u64,
    pub stage: Stage,
    pub inject_enabled: bool,
    pub max_epochs: usize,
    /// Word-masking rate for the denoising stage.
    pub mask_rate: f64,
}

impl Default for TrainConfig {
    /// Batch 32, 8 accumulation steps, lr 1e-5, patience 5, at most 50 epochs.
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            grad_accum_steps: 8,
            learning_rate: 1e-5,
            patience: 5,
            seed: 0,
            stage: Stage::Figurative,
            inject_enabled: false,
            max_epochs: 50,
            mask_rate: DEFAULT_MASK_RATE,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.patience == 0 {
            return Err(Error::invalid(
                "batch_size, grad_accum_steps and patience must be at least 1",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(Error::invalid("mask_rate must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn for_stage(mut self, stage: Stage, inject_enabled: bool) -> Self {
        self.stage = stage;
        self.inject_enabled = inject_enabled;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub optimizer_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch run (1-based); 0 when no epoch ran.
    pub stop_epoch: usize,
    pub best_epoch: Option<usize>,
    pub best_valid_loss: Option<f64>,
    /// Where the caller stored the best parameters, if anywhere.
    pub best_checkpoint: Option<String>,
}

impl TrainLog {
    /// One JSON record per epoch.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for rec in &self.epochs {
            serde_json::to_writer(&mut out, rec)?;
            out.push(b'\n');
        }
        crate::error::write_file(path, &out)
    }
}

fn mix(mut x: u64) -> u64 {
    // splitmix64 finalizer
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed_u64, |acc, &p| mix(acc ^ mix(p)))
}

fn stage_tag(stage: Stage) -> u64 {
    stage as u64 + 1
}

/// Mean loss and mean gradient over all examples of the given micro-batches.
///
/// Examples are processed in parallel but summed in input order, so the
/// result does not depend on the thread count. Dropout seeds come from
/// `dropout_seeds` (one per example) when given.
pub fn accumulated_gradient<T: Scalar>(
    params: &ModelParams<T>,
    micro_batches: &[&[Example]],
    dropout_seeds: Option<&[u64]>,
) -> Result<(T, Vec<Array2<T>>)> {
    let examples: Vec<&Example> = micro_batches.iter().flat_map(|b| b.iter()).collect();
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let results: Vec<(T, Vec<Array2<T>>)> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| params.loss_and_grad(ex, dropout_seeds.map(|s| s[i])))
        .collect::<Result<_>>()?;
    let inv = T::from_usize(examples.len()).unwrap().recip();
    let mut iter = results.into_iter();
    let (mut loss, mut grads) = iter.next().expect("nonempty");
    for (l, g) in iter {
        loss += l;
        for (acc, x) in grads.iter_mut().zip(&g) {
            *acc += x;
        }
    }
    grads.iter_mut().for_each(|g| g.mapv_inplace(|v| v * inv));
    Ok((loss * inv, grads))
}

/// Mean teacher-forced loss without dropout.
pub fn mean_loss<T: Scalar>(params: &ModelParams<T>, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses: Vec<T> = examples
        .par_iter()
        .map(|ex| params.sequence_loss(ex))
        .collect::<Result<_>>()?;
    Ok(losses.iter().map(|l| l.as_f64()).sum::<f64>() / examples.len() as f64)
}

/// Number of optimizer steps for an epoch of `n_examples`.
pub fn steps_per_epoch(n_examples: usize, cfg: &TrainConfig) -> usize {
    let batches = n_examples.div_ceil(cfg.batch_size);
    batches.div_ceil(cfg.grad_accum_steps)
}

/// Core loop shared by all stages. `train_set(epoch)` yields that epoch's
/// examples; validation uses `valid` (or the training loss when empty).
fn fit<T, F>(
    mut params: ModelParams<T>,
    cfg: &TrainConfig,
    mut train_set: F,
    valid: &[Example],
) -> Result<(ModelParams<T>, TrainLog)>
where
    T: Scalar,
    F: FnMut(usize) -> Result<Vec<Example>>,
{
    cfg.validate()?;
    let mut log = TrainLog::default();
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.learning_rate), params.tensors());
    let mut best: Option<ModelParams<T>> = None;
    let mut since_best = 0;
    let dropout = params.config().dropout > 0.0;

    for epoch in 1..=cfg.max_epochs {
        let examples = train_set(epoch)?;
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let shuffle_seed = derive_seed(&[cfg.seed, stage_tag(cfg.stage), epoch as u64]);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        let ordered: Vec<Example> = order.iter().map(|&i| examples[i].clone()).collect();

        let batches: Vec<&[Example]> = ordered.chunks(cfg.batch_size).collect();
        let mut loss_sum = 0.0;
        let mut steps = 0;
        let mut offset = 0;
        for group in batches.chunks(cfg.grad_accum_steps) {
            let n: usize = group.iter().map(|b| b.len()).sum();
            let seeds: Vec<u64> = (offset..offset + n)
                .map(|i| derive_seed(&[shuffle_seed, i as u64]))
                .collect();
            let (loss, grads) =
                accumulated_gradient(&params, group, dropout.then_some(&seeds[..]))?;
            loss_sum += loss.as_f64() * n as f64;
            opt.step(params.tensors_mut(), &grads);
            steps += 1;
            offset += n;
        }
        let train_loss = loss_sum / ordered.len() as f64;
        let valid_loss = if valid.is_empty() {
            train_loss
        } else {
            mean_loss(&params, valid)?
        };
        log.epochs.push(EpochRecord {
            stage: cfg.stage,
            epoch,
            train_loss,
            valid_loss,
            optimizer_steps: steps,
        });
        log.stop_epoch = epoch;
        if log.best_valid_loss.is_none_or(|b| valid_loss < b) {
            log.best_valid_loss = Some(valid_loss);
            log.best_epoch = Some(epoch);
            best = Some(params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.unwrap_or(params), log))
}

/// Held-out texts are corrupted once with a fixed seed per position.
fn denoise_examples<T: Scalar>(
    params: &ModelParams<T>,
    texts: &[TaggedText],
    rate: f64,
    seed: u64,
) -> Result<Vec<Example>> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let corrupted = mask_words(t, rate, derive_seed(&[seed, i as u64]));
            params.example(&corrupted, t, false)
        })
        .collect()
}

/// Denoising pre-training on the concatenation of every form's texts.
///
/// Each epoch re-masks the training texts with fresh seeds; the validation
/// texts are masked once. The target form is never injected here.
pub fn pretrain_denoise<T: Scalar>(
    params: ModelParams<T>,
    corpora: &BTreeMap<FormCode, Vec<TaggedText>>,
    valid: &[TaggedText],
    cfg: &TrainConfig,
) -> Result<(ModelParams<T>, TrainLog)> {
    let texts: Vec<TaggedText> = corpora.values().flatten().cloned().collect();
    if texts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cfg = cfg.for_stage(Stage::Denoise, false);
    let valid_ex = denoise_examples(
        &params,
        valid,
        cfg.mask_rate,
        derive_seed(&[cfg.seed, 0xdead]),
    )?;
    let template = params.clone();
    fit(
        params,
        &cfg,
        |epoch| {
            denoise_examples(
                &template,
                &texts,
                cfg.mask_rate,
                derive_seed(&[cfg.seed, epoch as u64]),
            )
        },
        &valid_ex,
    )
}

/// Teacher-forced supervision on parallel pairs; injects the target form
/// when `cfg.inject_enabled`.
pub fn train_supervised<T: Scalar>(
    params: ModelParams<T>,
    pairs: &[ParallelPair],
    valid: &[ParallelPair],
    cfg: &TrainConfig,
) -> Result<(ModelParams<T>, TrainLog)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let to_examples = |ps: &[ParallelPair]| -> Result<Vec<Example>> {
        ps.iter()
            .map(|p| params.example(&p.source, &p.target, cfg.inject_enabled))
            .collect()
    };
    let train = to_examples(pairs)?;
    let valid = to_examples(valid)?;
    fit(params, cfg, |_| Ok(train.clone()), &valid)
}

/// Model recipes compared in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Variant {
    /// Supervised on the concatenated figurative pairs only.
    BartMultiAnalog,
    /// Denoise, paraphrase, figurative; no injection.
    PtToFt,
    /// Same schedule with target-form injection.
    Mflag,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::BartMultiAnalog => "BART-MULTI-ANALOG",
            Variant::PtToFt => "PT-TO-FT",
            Variant::Mflag => "MFLAG",
        }
    }

    pub fn injects(self) -> bool {
        self == Variant::Mflag
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Variant::BartMultiAnalog, Variant::PtToFt, Variant::Mflag]
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

/// Training and validation data for each stage.
#[derive(Debug, Clone, Default)]
pub struct DataBundle {
    pub denoise_train: BTreeMap<FormCode, Vec<TaggedText>>,
    pub denoise_valid: Vec<TaggedText>,
    pub paraphrase_train: Vec<ParallelPair>,
    pub paraphrase_valid: Vec<ParallelPair>,
    pub figurative_train: Vec<ParallelPair>,
    pub figurative_valid: Vec<ParallelPair>,
}

/// Per-stage configs. `paraphrase_inject` applies to MFLAG only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub denoise: TrainConfig,
    pub paraphrase: TrainConfig,
    pub figurative: TrainConfig,
    pub paraphrase_inject: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let base = TrainConfig::default();
        ScheduleConfig {
            denoise: base.for_stage(Stage::Denoise, false),
            paraphrase: base.for_stage(Stage::Paraphrase, false),
            figurative: base.for_stage(Stage::Figurative, false),
            paraphrase_inject: true,
        }
    }
}

/// Runs the remaining stages of `variant` starting from already
/// denoise-pretrained parameters.
pub fn finish_variant<T: Scalar>(
    variant: Variant,
    pretrained: ModelParams<T>,
    data: &DataBundle,
    schedule: &ScheduleConfig,
) -> Result<(ModelParams<T>, Vec<TrainLog>)> {
    let inject = variant.injects();
    if data.figurative_train.is_empty() {
        return Err(Error::MissingStage("FIGURATIVE"));
    }
    let mut logs = Vec::new();
    let mut params = pretrained;
    if variant != Variant::BartMultiAnalog {
        if data.paraphrase_train.is_empty() {
            return Err(Error::MissingStage("PARAPHRASE"));
        }
        let cfg = schedule
            .paraphrase
            .for_stage(Stage::Paraphrase, inject && schedule.paraphrase_inject);
        let (p, log) =
            train_supervised(params, &data.paraphrase_train, &data.paraphrase_valid, &cfg)?;
        params = p;
        logs.push(log);
    }
    let cfg = schedule.figurative.for_stage(Stage::Figurative, inject);
    let (p, log) = train_supervised(params, &data.figurative_train, &data.figurative_valid, &cfg)?;
    logs.push(log);
    Ok((p, logs))
}

/// Trains `variant` from `init` through every stage it uses.
pub fn build_variant<T: Scalar>(
    variant: Variant,
    init: ModelParams<T>,
    data: &DataBundle,
    schedule: &ScheduleConfig,
) -> Result<(ModelParams<T>, Vec<TrainLog>)> {
    if variant == Variant::BartMultiAnalog {
        return finish_variant(variant, init, data, schedule);
    }
    if data.denoise_train.values().all(Vec::is_empty) {
        return Err(Error::MissingStage("DENOISE"));
    }
    if data.paraphrase_train.is_empty() {
        return Err(Error::MissingStage("PARAPHRASE"));
    }
    if data.figurative_train.is_empty() {
        return Err(Error::MissingStage("FIGURATIVE"));
    }
    let (pre, log) = pretrain_denoise(
        init,
        &data.denoise_train,
        &data.denoise_valid,
        &schedule.denoise,
    )?;
    let (params, mut logs) = finish_variant(variant, pre, data, schedule)?;
    logs.insert(0, log);
    Ok((params, logs))
}
