//! Tab-separated corpus files.
//!
//! * parallel: `src_form TAB src_text TAB tgt_form TAB tgt_text`
//! * monolingual: `form TAB text`
//! * scored: the parallel columns plus `p_source_literal TAB p_target_figurative`
//!   with six decimals
//!
//! Texts are tokens joined by single spaces. Tabs and newlines inside a text
//! are rejected by the writers, never escaped.

use std::fs;
use std::path::Path;

use super::{FormCode, ParallelPair, ScoredPair, TaggedText};
use crate::error::{Error, Result};

pub(crate) fn read_rows(path: &Path, expected: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != expected {
            return Err(Error::Columns {
                path: path.to_path_buf(),
                line: line_no,
                expected,
                found: fields.len(),
            });
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

pub(crate) fn write_rows<I>(path: &Path, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut buf = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        if let Some(bad) = row.iter().find(|f| f.contains(['\t', '\n', '\r'])) {
            return Err(Error::invalid(format!(
                "row {}: field {bad:?} contains a tab or newline",
                i + 1
            )));
        }
        buf.extend_from_slice(row.join("\t").as_bytes());
        buf.push(b'\n');
    }
    crate::error::write_file(path, &buf)
}

pub(crate) fn parse_form(path: &Path, line: usize, s: &str) -> Result<FormCode> {
    s.parse().map_err(|e: Error| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

pub(crate) fn parse_text(path: &Path, line: usize, form: FormCode, s: &str) -> Result<TaggedText> {
    TaggedText::parse(form, s).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    })
}

fn parse_prob(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|p| (0.0..=1.0).contains(p))
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("invalid probability {s:?}"),
        })
}

fn pair_fields(p: &ParallelPair) -> Vec<String> {
    vec![
        p.source.form().name().to_string(),
        p.source.text(),
        p.target.form().name().to_string(),
        p.target.text(),
    ]
}

fn parse_pair(path: &Path, line: usize, f: &[String]) -> Result<ParallelPair> {
    let sf = parse_form(path, line, &f[0])?;
    let tf = parse_form(path, line, &f[2])?;
    Ok(ParallelPair::new(
        parse_text(path, line, sf, &f[1])?,
        parse_text(path, line, tf, &f[3])?,
    ))
}

pub fn write_corpus(pairs: &[ParallelPair], path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), pairs.iter().map(pair_fields))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<ParallelPair>> {
    let path = path.as_ref();
    read_rows(path, 4)?
        .iter()
        .map(|(line, f)| parse_pair(path, *line, f))
        .collect()
}

pub fn write_monolingual(texts: &[TaggedText], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        texts
            .iter()
            .map(|t| vec![t.form().name().to_string(), t.text()]),
    )
}

pub fn read_monolingual(path: impl AsRef<Path>) -> Result<Vec<TaggedText>> {
    let path = path.as_ref();
    read_rows(path, 2)?
        .iter()
        .map(|(line, f)| {
            let form = parse_form(path, *line, &f[0])?;
            parse_text(path, *line, form, &f[1])
        })
        .collect()
}

pub fn write_scored(scored: &[ScoredPair], path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        scored.iter().map(|s| {
            let mut row = pair_fields(&s.pair);
            row.push(format!("{:.6}", s.p_source_literal));
            row.push(format!("{:.6}", s.p_target_figurative));
            row
        }),
    )
}

pub fn read_scored(path: impl AsRef<Path>) -> Result<Vec<ScoredPair>> {
    let path = path.as_ref();
    read_rows(path, 6)?
        .iter()
        .map(|(line, f)| {
            let pair = parse_pair(path, *line, &f[..4])?;
            let a = parse_prob(path, *line, &f[4])?;
            let b = parse_prob(path, *line, &f[5])?;
            ScoredPair::new(pair, a, b)
        })
        .collect()
}
