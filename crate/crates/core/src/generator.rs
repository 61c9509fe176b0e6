//! Decoding regimes: direct rewriting into the target form, and two-hop
//! rewriting through the literal form as a pivot.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::io::{parse_form, parse_text, read_rows, write_rows};
use crate::corpus::{FormCode, TaggedText};
use crate::error::{Error, Result};
use crate::model::{is_eos, EncoderInput, ModelParams};
use crate::vocab::{EOS_ID, FIRST_WORD_ID};
use crate::Scalar;

pub const DEFAULT_MAX_NEW_TOKENS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// One pass from the source form straight to the target form.
    Direct,
    /// Source to `LITERAL`, then `LITERAL` to the target form.
    Pivot,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Mode::Direct),
            "pivot" => Ok(Mode::Pivot),
            _ => Err(Error::invalid(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decode {
    Greedy,
    Beam(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenRequest {
    pub source: TaggedText,
    pub target_form: FormCode,
    pub mode: Mode,
    pub decode: Decode,
    pub max_new_tokens: usize,
    /// Inject the target form into the encoder (false for models trained
    /// without injection).
    pub inject: bool,
}

impl GenRequest {
    /// Greedy direct request with injection and default length limit.
    pub fn direct(source: TaggedText, target_form: FormCode) -> Self {
        GenRequest {
            source,
            target_form,
            mode: Mode::Direct,
            decode: Decode::Greedy,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            inject: true,
        }
    }

    pub fn pivot(source: TaggedText, target_form: FormCode) -> Self {
        GenRequest {
            mode: Mode::Pivot,
            ..GenRequest::direct(source, target_form)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Pivot && self.target_form == FormCode::Literal {
            return Err(Error::invalid("pivot mode needs a figurative target form"));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::invalid("max_new_tokens must be at least 1"));
        }
        if self.decode == Decode::Beam(0) {
            return Err(Error::invalid("beam width must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenResult {
    pub output: TaggedText,
    /// Intermediate literal text (pivot mode only).
    pub pivot_text: Option<TaggedText>,
    /// Log-probability of each emitted token of the final hop, `[eos]`
    /// included when emitted.
    pub token_log_probs: Vec<f64>,
    /// No `[eos]` within `max_new_tokens` on some hop.
    pub truncated: bool,
}

impl GenResult {
    pub fn mean_log_prob(&self) -> f64 {
        if self.token_log_probs.is_empty() {
            0.0
        } else {
            self.token_log_probs.iter().sum::<f64>() / self.token_log_probs.len() as f64
        }
    }
}

struct Hop {
    ids: Vec<usize>,
    log_probs: Vec<f64>,
    truncated: bool,
}

/// Only `[eos]` and word tokens may be emitted.
fn emittable(id: usize) -> bool {
    id == EOS_ID || id >= FIRST_WORD_ID
}

fn argmax<T: Scalar>(probs: &[T]) -> usize {
    // first index wins ties
    let mut best = EOS_ID;
    for (i, &p) in probs.iter().enumerate() {
        if emittable(i) && p > probs[best] {
            best = i;
        }
    }
    best
}

fn greedy<T: Scalar>(
    params: &ModelParams<T>,
    enc: &ndarray::Array2<T>,
    form: FormCode,
    max_new: usize,
) -> Result<Hop> {
    let mut prefix = vec![form.token_id()];
    let mut log_probs = Vec::new();
    let limit = max_new.min(params.config().max_len - 1);
    for _ in 0..limit {
        let probs = params.decode_step(enc, &prefix)?;
        let next = argmax(&probs);
        log_probs.push(probs[next].as_f64().ln());
        if is_eos(next) {
            return Ok(Hop {
                ids: prefix[1..].to_vec(),
                log_probs,
                truncated: false,
            });
        }
        prefix.push(next);
    }
    Ok(Hop {
        ids: prefix[1..].to_vec(),
        log_probs,
        truncated: true,
    })
}

#[derive(Clone)]
struct Beam {
    ids: Vec<usize>,
    log_probs: Vec<f64>,
    done: bool,
}

impl Beam {
    fn score(&self) -> f64 {
        self.log_probs.iter().sum::<f64>() / self.log_probs.len().max(1) as f64
    }
}

fn beam_search<T: Scalar>(
    params: &ModelParams<T>,
    enc: &ndarray::Array2<T>,
    form: FormCode,
    width: usize,
    max_new: usize,
) -> Result<Hop> {
    let limit = max_new.min(params.config().max_len - 1);
    let mut beams = vec![Beam {
        ids: vec![form.token_id()],
        log_probs: Vec::new(),
        done: false,
    }];
    for _ in 0..limit {
        if beams.iter().all(|b| b.done) {
            break;
        }
        let mut candidates: Vec<Beam> = Vec::new();
        for beam in &beams {
            if beam.done {
                candidates.push(beam.clone());
                continue;
            }
            let probs = params.decode_step(enc, &beam.ids)?;
            let mut ranked: Vec<usize> = (0..probs.len()).filter(|&i| emittable(i)).collect();
            ranked.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
            for &tok in ranked.iter().take(width) {
                let mut next = beam.clone();
                next.log_probs.push(probs[tok].as_f64().ln());
                if is_eos(tok) {
                    next.done = true;
                } else {
                    next.ids.push(tok);
                }
                candidates.push(next);
            }
        }
        let total = |b: &Beam| b.log_probs.iter().sum::<f64>();
        candidates.sort_by(|a, b| total(b).partial_cmp(&total(a)).unwrap());
        candidates.truncate(width);
        beams = candidates;
    }
    let pick = beams
        .iter()
        .filter(|b| b.done)
        .max_by(|a, b| a.score().partial_cmp(&b.score()).unwrap())
        .or_else(|| beams.first())
        .cloned()
        .expect("at least one beam");
    Ok(Hop {
        ids: pick.ids[1..].to_vec(),
        log_probs: pick.log_probs,
        truncated: !pick.done,
    })
}

fn hop<T: Scalar>(
    params: &ModelParams<T>,
    source: &TaggedText,
    target: FormCode,
    req: &GenRequest,
) -> Result<(TaggedText, Hop)> {
    let token_ids = params.vocab().encode(source);
    let enc = params.encode(&EncoderInput {
        token_ids,
        target_form: req.inject.then_some(target),
    })?;
    let h = match req.decode {
        Decode::Greedy => greedy(params, &enc, target, req.max_new_tokens)?,
        Decode::Beam(w) => beam_search(params, &enc, target, w, req.max_new_tokens)?,
    };
    let words: Vec<String> = h
        .ids
        .iter()
        .map(|&id| params.vocab().token(id).to_string())
        .collect();
    Ok((TaggedText::new(target, words)?, h))
}

/// Rewrites `req.source` into `req.target_form`.
pub fn generate<T: Scalar>(params: &ModelParams<T>, req: &GenRequest) -> Result<GenResult> {
    req.validate()?;
    let src_len = req.source.serialized_len();
    if src_len > params.config().max_len {
        return Err(Error::TooLong {
            len: src_len,
            max_len: params.config().max_len,
        });
    }
    match req.mode {
        Mode::Direct => {
            let (output, h) = hop(params, &req.source, req.target_form, req)?;
            Ok(GenResult {
                output,
                pivot_text: None,
                token_log_probs: h.log_probs,
                truncated: h.truncated,
            })
        }
        Mode::Pivot => {
            let (literal, first) = hop(params, &req.source, FormCode::Literal, req)?;
            // re-tokenize through the text surface before the second hop
            let literal = TaggedText::parse(FormCode::Literal, &literal.text())?;
            let (output, second) = hop(params, &literal, req.target_form, req)?;
            Ok(GenResult {
                output,
                pivot_text: Some(literal),
                token_log_probs: second.log_probs,
                truncated: first.truncated || second.truncated,
            })
        }
    }
}

/// Order-preserving batch generation; each item equals its single-request
/// result. Failures report the index of the offending request.
pub fn generate_batch<T: Scalar>(
    params: &ModelParams<T>,
    requests: &[GenRequest],
) -> Result<Vec<GenResult>> {
    if let Some(first) = requests.first() {
        if let Some(i) = requests
            .iter()
            .position(|r| r.decode != first.decode || r.max_new_tokens != first.max_new_tokens)
        {
            return Err(Error::invalid(format!(
                "request {i}: decode settings differ from request 0"
            )));
        }
    }
    requests
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            generate(params, r).map_err(|e| Error::BatchItem {
                index: i,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Reads `form TAB text TAB target_form` rows.
pub fn read_requests(
    path: impl AsRef<Path>,
    mode: Mode,
    decode: Decode,
    max_new_tokens: usize,
    inject: bool,
) -> Result<Vec<GenRequest>> {
    let path = path.as_ref();
    read_rows(path, 3)?
        .iter()
        .map(|(line, f)| {
            let form = parse_form(path, *line, &f[0])?;
            Ok(GenRequest {
                source: parse_text(path, *line, form, &f[1])?,
                target_form: parse_form(path, *line, &f[2])?,
                mode,
                decode,
                max_new_tokens,
                inject,
            })
        })
        .collect()
}

/// Writes the request columns followed by generated text, pivot text (or
/// `-`) and mean token log-probability.
pub fn write_results(
    path: impl AsRef<Path>,
    requests: &[GenRequest],
    results: &[GenResult],
) -> Result<()> {
    if requests.len() != results.len() {
        return Err(Error::invalid("requests and results differ in length"));
    }
    write_rows(
        path.as_ref(),
        requests.iter().zip(results).map(|(q, r)| {
            vec![
                q.source.form().name().to_string(),
                q.source.text(),
                q.target_form.name().to_string(),
                r.output.text(),
                r.pivot_text
                    .as_ref()
                    .map_or_else(|| "-".to_string(), TaggedText::text),
                format!("{:.6}", r.mean_log_prob()),
            ]
        }),
    )
}

/// Generated texts from a results file written by [`write_results`].
pub fn read_result_outputs(path: impl AsRef<Path>) -> Result<Vec<(GenRequestRow, TaggedText)>> {
    let path = path.as_ref();
    read_rows(path, 6)?
        .iter()
        .map(|(line, f)| {
            let form = parse_form(path, *line, &f[0])?;
            let target = parse_form(path, *line, &f[2])?;
            Ok((
                GenRequestRow {
                    source: parse_text(path, *line, form, &f[1])?,
                    target_form: target,
                },
                parse_text(path, *line, target, &f[3])?,
            ))
        })
        .collect()
}

/// Source columns of a results row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenRequestRow {
    pub source: TaggedText,
    pub target_form: FormCode,
}
