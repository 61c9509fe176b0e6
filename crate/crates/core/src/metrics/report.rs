use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{bleu_texts, harmonic_mean, SemanticScorer};
use crate::classifier::{form_accuracy, FormScorer};
use crate::corpus::{FormCode, TaggedText};
use crate::error::{Error, Result};

/// Scores for one (source form, target form) direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub source_form: FormCode,
    pub target_form: FormCode,
    pub n: usize,
    pub tgt_accuracy: f64,
    /// Only for figurative sources.
    pub src_accuracy: Option<f64>,
    /// Against references (literal source) or against the source texts.
    pub bleu: f64,
    pub hm: f64,
    pub bleu_literal: Option<f64>,
    pub hm_literal: Option<f64>,
    pub plugin_scores: BTreeMap<String, f64>,
}

impl EvalReport {
    pub fn direction(&self) -> String {
        format!("{}->{}", self.source_form, self.target_form)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        crate::error::write_file(path, s.as_bytes())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Texts for one direction. `references` holds gold targets for
/// literal-source directions and the source texts themselves for
/// figurative-source directions.
#[derive(Debug, Clone, Copy)]
pub struct DirectionData<'a> {
    pub source_form: FormCode,
    pub target_form: FormCode,
    pub outputs: &'a [TaggedText],
    pub references: &'a [TaggedText],
    /// Literal counterparts of the sources (figurative sources only).
    pub literal: Option<&'a [TaggedText]>,
}

/// A detector for "not this form", used as the target-form classifier when
/// the target is `LITERAL`.
pub struct NotForm<'a>(pub &'a dyn FormScorer);

impl FormScorer for NotForm<'_> {
    fn form(&self) -> FormCode {
        FormCode::Literal
    }

    fn predict_proba(&self, tokens: &[String]) -> f64 {
        1.0 - self.0.predict_proba(tokens)
    }
}

/// Fills an [`EvalReport`]. `source_clf` is required for figurative sources.
pub fn evaluate_direction(
    data: DirectionData<'_>,
    target_clf: &dyn FormScorer,
    source_clf: Option<&dyn FormScorer>,
    plugins: &[&dyn SemanticScorer],
) -> Result<EvalReport> {
    if data.outputs.is_empty() {
        return Err(Error::NoOutputs);
    }
    if target_clf.form() != data.target_form {
        return Err(Error::invalid(format!(
            "target classifier is for {} but target form is {}",
            target_clf.form(),
            data.target_form
        )));
    }
    let tgt_accuracy = form_accuracy(target_clf, data.outputs)?;
    let bleu = bleu_texts(data.outputs, data.references)?;
    let src_accuracy = if data.source_form.is_figurative() {
        let clf = source_clf.ok_or(Error::MissingForm(data.source_form))?;
        if clf.form() != data.source_form {
            return Err(Error::invalid(format!(
                "source classifier is for {} but source form is {}",
                clf.form(),
                data.source_form
            )));
        }
        Some(form_accuracy(clf, data.outputs)?)
    } else {
        None
    };
    let bleu_literal = data
        .literal
        .map(|lit| bleu_texts(data.outputs, lit))
        .transpose()?;
    let hm_literal = bleu_literal
        .map(|b| harmonic_mean(tgt_accuracy, b))
        .transpose()?;
    let mut plugin_scores = BTreeMap::new();
    for p in plugins {
        plugin_scores.insert(
            p.name().to_string(),
            p.score(data.outputs, data.references)?,
        );
    }
    Ok(EvalReport {
        source_form: data.source_form,
        target_form: data.target_form,
        n: data.outputs.len(),
        tgt_accuracy,
        src_accuracy,
        bleu,
        hm: harmonic_mean(tgt_accuracy, bleu)?,
        bleu_literal,
        hm_literal,
        plugin_scores,
    })
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub system: String,
    pub direction: String,
    pub n: usize,
    pub src: Option<f64>,
    pub tgt: f64,
    pub bleu: f64,
    pub hm: f64,
    pub bleu_literal: Option<f64>,
    pub hm_literal: Option<f64>,
}

impl TableRow {
    pub fn from_report(system: &str, r: &EvalReport) -> Self {
        TableRow {
            system: system.to_string(),
            direction: r.direction(),
            n: r.n,
            src: r.src_accuracy,
            tgt: r.tgt_accuracy,
            bleu: r.bleu,
            hm: r.hm,
            bleu_literal: r.bleu_literal,
            hm_literal: r.hm_literal,
        }
    }

    /// Unweighted mean of per-direction scores. Optional columns are kept
    /// only when every report has them.
    pub fn macro_average(system: &str, direction: &str, reports: &[EvalReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let k = reports.len() as f64;
        let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        let mean_opt = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
            reports
                .iter()
                .map(f)
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / k)
        };
        Ok(TableRow {
            system: system.to_string(),
            direction: direction.to_string(),
            n: reports.iter().map(|r| r.n).sum(),
            src: mean_opt(&|r| r.src_accuracy),
            tgt: mean(&|r| r.tgt_accuracy),
            bleu: mean(&|r| r.bleu),
            hm: mean(&|r| r.hm),
            bleu_literal: mean_opt(&|r| r.bleu_literal),
            hm_literal: mean_opt(&|r| r.hm_literal),
        })
    }
}

const TABLE_HEADER: &str = "system\tdirection\tn\tsrc\ttgt\tbleu\thm\tbleu_literal\thm_literal";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

pub fn write_table(path: impl AsRef<Path>, rows: &[TableRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.system,
            r.direction,
            r.n,
            cell(r.src),
            cell(Some(r.tgt)),
            cell(Some(r.bleu)),
            cell(Some(r.hm)),
            cell(r.bleu_literal),
            cell(r.hm_literal)
        )
        .expect("write to string");
    }
    crate::error::write_file(path, out.as_bytes())
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Vec<TableRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let num = |line: usize, s: &str| -> Result<Option<f64>> {
        if s == "-" {
            return Ok(None);
        }
        s.parse()
            .map(Some)
            .map_err(|_| err(line, format!("bad number {s:?}")))
    };
    let mut rows = Vec::new();
    for (i, l) in text.lines().enumerate().skip(1) {
        let line = i + 1;
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 9 {
            return Err(Error::Columns {
                path: path.to_path_buf(),
                line,
                expected: 9,
                found: f.len(),
            });
        }
        let req = |s: &str| num(line, s)?.ok_or_else(|| err(line, "missing value".into()));
        rows.push(TableRow {
            system: f[0].to_string(),
            direction: f[1].to_string(),
            n: f[2]
                .parse()
                .map_err(|_| err(line, format!("bad count {:?}", f[2])))?,
            src: num(line, f[3])?,
            tgt: req(f[4])?,
            bleu: req(f[5])?,
            hm: req(f[6])?,
            bleu_literal: num(line, f[7])?,
            hm_literal: num(line, f[8])?,
        });
    }
    Ok(rows)
}
