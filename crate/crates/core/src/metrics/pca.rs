use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::corpus::{FormCode, TaggedText};
use crate::error::{Error, Result};
use crate::model::{EncoderInput, ModelParams};
use crate::Scalar;

/// Two-component PCA fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Unit-length principal axes, largest variance first.
    pub components: [Vec<f64>; 2],
    pub explained_variance: [f64; 2],
    pub mean: Vec<f64>,
    /// Projection of every input row onto the two axes.
    pub coords: Vec<[f64; 2]>,
}

/// Fits PCA by eigendecomposition of the centered sample covariance. Each
/// axis is signed so that its first nonzero loading is positive.
pub fn pca(rows: &[Vec<f64>]) -> Result<Pca> {
    if rows.len() < 3 {
        return Err(Error::invalid(format!(
            "PCA needs at least 3 vectors, got {}",
            rows.len()
        )));
    }
    let d = rows[0].len();
    if d < 2 {
        return Err(Error::invalid("PCA needs vectors of dimension at least 2"));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::WidthMismatch {
            expected: d,
            found: bad.len(),
        });
    }
    let n = rows.len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let axis = |k: usize| {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        v
    };
    let components = [axis(0), axis(1)];
    let explained_variance = [
        eig.eigenvalues[order[0]].max(0.0),
        eig.eigenvalues[order[1]].max(0.0),
    ];
    let coords = (0..n)
        .map(|i| {
            let row = centered.row(i);
            let proj = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [proj(&components[0]), proj(&components[1])]
        })
        .collect();
    Ok(Pca {
        components,
        explained_variance,
        mean,
        coords,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub token: String,
    pub x: f64,
    pub y: f64,
    pub sentence_id: usize,
}

/// Encodes both sentences (sentence 0 with `target_form` injected, sentence 1
/// with its own form injected; `None` disables injection for both) and
/// projects every encoder state, control tokens included, onto a shared
/// 2-component PCA.
pub fn pca_probe<T: Scalar>(
    params: &ModelParams<T>,
    sentence_a: &TaggedText,
    target_form: Option<FormCode>,
    sentence_b: &TaggedText,
) -> Result<Vec<ProbeRow>> {
    let mut tokens = Vec::new();
    let mut vectors = Vec::new();
    let mut ids = Vec::new();
    for (sid, (text, inject)) in [
        (sentence_a, target_form),
        (sentence_b, target_form.map(|_| sentence_b.form())),
    ]
    .into_iter()
    .enumerate()
    {
        let states = params.encode(&EncoderInput {
            token_ids: params.vocab().encode(text),
            target_form: inject,
        })?;
        for (tok, row) in text.serialize().into_iter().zip(states.rows()) {
            tokens.push(tok.to_string());
            vectors.push(row.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
            ids.push(sid);
        }
    }
    let fit = pca(&vectors)?;
    Ok(tokens
        .into_iter()
        .zip(fit.coords)
        .zip(ids)
        .map(|((token, [x, y]), sentence_id)| ProbeRow {
            token,
            x,
            y,
            sentence_id,
        })
        .collect())
}

pub fn write_probe(path: impl AsRef<Path>, rows: &[ProbeRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("token\tx\ty\tsentence_id\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{}\n",
            r.token, r.x, r.y, r.sentence_id
        ));
    }
    crate::error::write_file(path, out.as_bytes())
}
