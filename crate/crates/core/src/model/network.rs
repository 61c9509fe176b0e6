use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    apply_mask, attend, attend_backward, dropout_mask, feed_forward, feed_forward_backward,
    layer_norm, layer_norm_backward, multi_head_attention, multi_head_attention_backward,
    softmax_rows, AttnCache, FfnCache, NormCache,
};
use super::ModelParams;
use crate::corpus::{FormCode, TaggedText};
use crate::error::{Error, Result};
use crate::vocab::EOS_ID;
use crate::Scalar;

/// Single-key cross-attention of the rows of `w` against the form embedding
/// `f`, plus a residual connection:
/// `softmax(w fᵀ / √d) f + w`.
///
/// With one key every attention row is exactly 1, so the result is `w` with
/// `f` added to each row.
pub fn inject<T: Scalar>(w: &Array2<T>, f: ArrayView1<T>) -> Result<Array2<T>> {
    if w.ncols() != f.len() {
        return Err(Error::WidthMismatch {
            expected: w.ncols(),
            found: f.len(),
        });
    }
    let key = f.insert_axis(Axis(0));
    let scale = T::from_usize(w.ncols()).unwrap().sqrt().recip();
    let (attended, _) = attend(w.view(), key, key, scale, false);
    Ok(attended + w)
}

/// Encoder input: `[source form] tokens [eos]` ids and the optional form
/// whose embedding is injected. `None` skips injection entirely.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderInput {
    pub token_ids: Vec<usize>,
    pub target_form: Option<FormCode>,
}

/// One teacher-forced training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: EncoderInput,
    /// `[target form] tokens [eos]`.
    pub target_ids: Vec<usize>,
}

struct InjectCache<T> {
    form_id: usize,
    w: Array2<T>,
    probs: Array2<T>,
}

struct EncLayerCache<T> {
    norm_attn: NormCache<T>,
    attn: AttnCache<T>,
    attn_mask: Option<Array2<T>>,
    norm_ffn: NormCache<T>,
    ffn: FfnCache<T>,
    ffn_mask: Option<Array2<T>>,
}

struct EncCache<T> {
    ids: Vec<usize>,
    inject: Option<InjectCache<T>>,
    emb_mask: Option<Array2<T>>,
    layers: Vec<EncLayerCache<T>>,
    norm: NormCache<T>,
}

struct DecLayerCache<T> {
    norm_self: NormCache<T>,
    self_attn: AttnCache<T>,
    self_mask: Option<Array2<T>>,
    norm_cross: NormCache<T>,
    cross_attn: AttnCache<T>,
    cross_mask: Option<Array2<T>>,
    norm_ffn: NormCache<T>,
    ffn: FfnCache<T>,
    ffn_mask: Option<Array2<T>>,
}

struct DecCache<T> {
    ids: Vec<usize>,
    emb_mask: Option<Array2<T>>,
    layers: Vec<DecLayerCache<T>>,
    norm: NormCache<T>,
    hidden: Array2<T>,
}

fn log_softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl<T: Scalar> ModelParams<T> {
    fn embed_scale(&self) -> T {
        T::from_usize(self.config.d_model).unwrap().sqrt()
    }

    fn check_ids(&self, ids: &[usize], what: &str) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::invalid(format!("{what} is empty")));
        }
        if ids.len() > self.config.max_len {
            return Err(Error::TooLong {
                len: ids.len(),
                max_len: self.config.max_len,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::invalid(format!(
                "{what}: token id {bad} out of vocabulary"
            )));
        }
        Ok(())
    }

    /// Scaled token embeddings plus positional encodings.
    fn embed(&self, ids: &[usize]) -> Array2<T> {
        let table = &self.tensors[self.layout.embed];
        let scale = self.embed_scale();
        let mut x = Array2::zeros((ids.len(), self.config.d_model));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row.assign(&table.row(id));
            row.mapv_inplace(|v| v * scale);
            row += &self.positions.row(i);
        }
        x
    }

    /// Form-code embedding used as the injected key/value.
    pub fn form_embedding(&self, form: FormCode) -> Array1<T> {
        let scale = self.embed_scale();
        self.tensors[self.layout.embed]
            .row(form.token_id())
            .mapv(|v| v * scale)
    }

    fn scatter_embedding_grad(&self, grads: &mut [Array2<T>], ids: &[usize], dx: &Array2<T>) {
        let scale = self.embed_scale();
        let g = &mut grads[self.layout.embed];
        for (i, &id) in ids.iter().enumerate() {
            g.row_mut(id).scaled_add(scale, &dx.row(i));
        }
    }

    fn encode_forward(
        &self,
        input: &EncoderInput,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array2<T>, EncCache<T>)> {
        self.check_ids(&input.token_ids, "encoder input")?;
        let p = &self.tensors[..];
        let rate = self.config.dropout;
        let mut x = self.embed(&input.token_ids);
        let inject_cache = match input.target_form {
            Some(form) => {
                let f = self.form_embedding(form);
                let key = f.view().insert_axis(Axis(0));
                let scale = self.embed_scale().recip();
                let (attended, probs) = attend(x.view(), key, key, scale, false);
                let w = x.clone();
                x = attended + &w;
                Some(InjectCache {
                    form_id: form.token_id(),
                    w,
                    probs,
                })
            }
            None => None,
        };
        let emb_mask = dropout_mask(rng.as_deref_mut(), rate, x.dim());
        apply_mask(&mut x, &emb_mask);

        let mut layers = Vec::with_capacity(self.layout.enc.len());
        for l in &self.layout.enc {
            let (a, norm_attn) = layer_norm(p, l.norm_attn, &x);
            let (mut att, attn) =
                multi_head_attention(p, &l.attn, self.config.n_heads, &a, &a, false);
            let attn_mask = dropout_mask(rng.as_deref_mut(), rate, att.dim());
            apply_mask(&mut att, &attn_mask);
            x += &att;
            let (b, norm_ffn) = layer_norm(p, l.norm_ffn, &x);
            let (mut f, ffn) = feed_forward(p, &l.ffn, &b);
            let ffn_mask = dropout_mask(rng.as_deref_mut(), rate, f.dim());
            apply_mask(&mut f, &ffn_mask);
            x += &f;
            layers.push(EncLayerCache {
                norm_attn,
                attn,
                attn_mask,
                norm_ffn,
                ffn,
                ffn_mask,
            });
        }
        let (out, norm) = layer_norm(p, self.layout.enc_norm, &x);
        Ok((
            out,
            EncCache {
                ids: input.token_ids.clone(),
                inject: inject_cache,
                emb_mask,
                layers,
                norm,
            },
        ))
    }

    fn encode_backward(&self, grads: &mut [Array2<T>], cache: &EncCache<T>, d_out: &Array2<T>) {
        let p = &self.tensors[..];
        let heads = self.config.n_heads;
        let mut dx = layer_norm_backward(p, grads, self.layout.enc_norm, &cache.norm, d_out);
        for (l, c) in self.layout.enc.iter().zip(&cache.layers).rev() {
            let mut df = dx.clone();
            apply_mask(&mut df, &c.ffn_mask);
            let db = feed_forward_backward(p, grads, &l.ffn, &c.ffn, &df);
            dx += &layer_norm_backward(p, grads, l.norm_ffn, &c.norm_ffn, &db);

            let mut datt = dx.clone();
            apply_mask(&mut datt, &c.attn_mask);
            let (dq, dkv) = multi_head_attention_backward(p, grads, &l.attn, heads, &c.attn, &datt);
            let da = dq + dkv;
            dx += &layer_norm_backward(p, grads, l.norm_attn, &c.norm_attn, &da);
        }
        apply_mask(&mut dx, &cache.emb_mask);
        if let Some(inj) = &cache.inject {
            let f = self.form_embedding(FormCode::from_token_id(inj.form_id).expect("form id"));
            let key = f.view().insert_axis(Axis(0));
            let scale = self.embed_scale().recip();
            let (dq, dk, dv) =
                attend_backward(inj.w.view(), key, key, &inj.probs, scale, dx.view());
            // residual path
            dx += &dq;
            let df = (dk + dv).sum_axis(Axis(0));
            let embed_scale = self.embed_scale();
            grads[self.layout.embed]
                .row_mut(inj.form_id)
                .scaled_add(embed_scale, &df);
        }
        self.scatter_embedding_grad(grads, &cache.ids, &dx);
    }

    fn decode_forward(
        &self,
        enc: &Array2<T>,
        ids: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<DecCache<T>> {
        self.check_ids(ids, "decoder prefix")?;
        if enc.ncols() != self.config.d_model {
            return Err(Error::WidthMismatch {
                expected: self.config.d_model,
                found: enc.ncols(),
            });
        }
        let p = &self.tensors[..];
        let rate = self.config.dropout;
        let heads = self.config.n_heads;
        let mut x = self.embed(ids);
        let emb_mask = dropout_mask(rng.as_deref_mut(), rate, x.dim());
        apply_mask(&mut x, &emb_mask);
        let mut layers = Vec::with_capacity(self.layout.dec.len());
        for l in &self.layout.dec {
            let (a, norm_self) = layer_norm(p, l.norm_self, &x);
            let (mut sa, self_attn) = multi_head_attention(p, &l.self_attn, heads, &a, &a, true);
            let self_mask = dropout_mask(rng.as_deref_mut(), rate, sa.dim());
            apply_mask(&mut sa, &self_mask);
            x += &sa;
            let (b, norm_cross) = layer_norm(p, l.norm_cross, &x);
            let (mut ca, cross_attn) =
                multi_head_attention(p, &l.cross_attn, heads, &b, enc, false);
            let cross_mask = dropout_mask(rng.as_deref_mut(), rate, ca.dim());
            apply_mask(&mut ca, &cross_mask);
            x += &ca;
            let (c, norm_ffn) = layer_norm(p, l.norm_ffn, &x);
            let (mut f, ffn) = feed_forward(p, &l.ffn, &c);
            let ffn_mask = dropout_mask(rng.as_deref_mut(), rate, f.dim());
            apply_mask(&mut f, &ffn_mask);
            x += &f;
            layers.push(DecLayerCache {
                norm_self,
                self_attn,
                self_mask,
                norm_cross,
                cross_attn,
                cross_mask,
                norm_ffn,
                ffn,
                ffn_mask,
            });
        }
        let (hidden, norm) = layer_norm(p, self.layout.dec_norm, &x);
        Ok(DecCache {
            ids: ids.to_vec(),
            emb_mask,
            layers,
            norm,
            hidden,
        })
    }

    /// Returns the gradient w.r.t. the encoder output.
    fn decode_backward(
        &self,
        grads: &mut [Array2<T>],
        cache: &DecCache<T>,
        d_hidden: &Array2<T>,
        enc_rows: usize,
    ) -> Array2<T> {
        let p = &self.tensors[..];
        let heads = self.config.n_heads;
        let mut d_enc = Array2::zeros((enc_rows, self.config.d_model));
        let mut dx = layer_norm_backward(p, grads, self.layout.dec_norm, &cache.norm, d_hidden);
        for (l, c) in self.layout.dec.iter().zip(&cache.layers).rev() {
            let mut df = dx.clone();
            apply_mask(&mut df, &c.ffn_mask);
            let dc = feed_forward_backward(p, grads, &l.ffn, &c.ffn, &df);
            dx += &layer_norm_backward(p, grads, l.norm_ffn, &c.norm_ffn, &dc);

            let mut dca = dx.clone();
            apply_mask(&mut dca, &c.cross_mask);
            let (db, denc) =
                multi_head_attention_backward(p, grads, &l.cross_attn, heads, &c.cross_attn, &dca);
            d_enc += &denc;
            dx += &layer_norm_backward(p, grads, l.norm_cross, &c.norm_cross, &db);

            let mut dsa = dx.clone();
            apply_mask(&mut dsa, &c.self_mask);
            let (dq, dkv) =
                multi_head_attention_backward(p, grads, &l.self_attn, heads, &c.self_attn, &dsa);
            let da = dq + dkv;
            dx += &layer_norm_backward(p, grads, l.norm_self, &c.norm_self, &da);
        }
        apply_mask(&mut dx, &cache.emb_mask);
        self.scatter_embedding_grad(grads, &cache.ids, &dx);
        d_enc
    }

    fn logits(&self, hidden: &Array2<T>) -> Array2<T> {
        hidden.dot(&self.tensors[self.layout.embed].t())
    }

    /// Encoder states, one row per input token.
    pub fn encode(&self, input: &EncoderInput) -> Result<Array2<T>> {
        Ok(self.encode_forward(input, None)?.0)
    }

    /// Log-probabilities of the next token after every prefix position.
    pub fn decode_log_probs(
        &self,
        encoder_states: &Array2<T>,
        prefix_ids: &[usize],
    ) -> Result<Array2<T>> {
        let cache = self.decode_forward(encoder_states, prefix_ids, None)?;
        Ok(log_softmax_rows(&self.logits(&cache.hidden)))
    }

    /// Next-token distribution after `prefix_ids`.
    pub fn decode_step(&self, encoder_states: &Array2<T>, prefix_ids: &[usize]) -> Result<Vec<T>> {
        let last = prefix_ids.len().saturating_sub(1);
        let cache = self.decode_forward(encoder_states, prefix_ids, None)?;
        let mut logits = self.logits(
            &cache
                .hidden
                .slice(ndarray::s![last..last + 1, ..])
                .to_owned(),
        );
        softmax_rows(&mut logits);
        Ok(logits.row(0).to_vec())
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        if ex.target_ids.len() < 2 {
            return Err(Error::invalid(
                "target needs a form code and at least one token",
            ));
        }
        self.check_ids(&ex.target_ids, "target")
    }

    /// Sum of log-probabilities of the target tokens after the leading form
    /// code, teacher forced.
    pub fn log_likelihood(&self, ex: &Example) -> Result<T> {
        self.check_example(ex)?;
        let enc = self.encode(&ex.input)?;
        let n = ex.target_ids.len() - 1;
        let lp = self.decode_log_probs(&enc, &ex.target_ids[..n])?;
        Ok((0..n).map(|i| lp[[i, ex.target_ids[i + 1]]]).sum())
    }

    /// Mean per-token negative log-likelihood of the target.
    pub fn sequence_loss(&self, ex: &Example) -> Result<T> {
        let n = T::from_usize(ex.target_ids.len().saturating_sub(1)).unwrap();
        Ok(-self.log_likelihood(ex)? / n)
    }

    /// Mean per-token loss and its gradient for every parameter tensor.
    ///
    /// `dropout_seed` enables dropout with a mask stream drawn from that seed;
    /// `None` runs deterministically without dropout.
    pub fn loss_and_grad(
        &self,
        ex: &Example,
        dropout_seed: Option<u64>,
    ) -> Result<(T, Vec<Array2<T>>)> {
        self.check_example(ex)?;
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let (enc, ecache) = self.encode_forward(&ex.input, rng.as_mut())?;
        let n = ex.target_ids.len() - 1;
        let dcache = self.decode_forward(&enc, &ex.target_ids[..n], rng.as_mut())?;
        let logits = self.logits(&dcache.hidden);
        let logp = log_softmax_rows(&logits);
        let inv_n = T::from_usize(n).unwrap().recip();
        let mut loss = T::zero();
        let mut dlogits = logp.mapv(|v| v.exp() * inv_n);
        for i in 0..n {
            let label = ex.target_ids[i + 1];
            loss -= logp[[i, label]];
            dlogits[[i, label]] -= inv_n;
        }
        loss *= inv_n;

        let mut grads = self.zeros_like();
        let table = &self.tensors[self.layout.embed];
        grads[self.layout.embed] += &dlogits.t().dot(&dcache.hidden);
        let d_hidden = dlogits.dot(table);
        let d_enc = self.decode_backward(&mut grads, &dcache, &d_hidden, enc.nrows());
        self.encode_backward(&mut grads, &ecache, &d_enc);
        Ok((loss, grads))
    }

    /// Builds an example from tagged texts. `inject` selects whether the
    /// target form is injected into the encoder.
    pub fn example(
        &self,
        source: &TaggedText,
        target: &TaggedText,
        inject: bool,
    ) -> Result<Example> {
        let token_ids = self.vocab.encode(source);
        let target_ids = self.vocab.encode(target);
        for ids in [&token_ids, &target_ids] {
            if ids.len() > self.config.max_len {
                return Err(Error::TooLong {
                    len: ids.len(),
                    max_len: self.config.max_len,
                });
            }
        }
        Ok(Example {
            input: EncoderInput {
                token_ids,
                target_form: inject.then_some(target.form()),
            },
            target_ids,
        })
    }

    /// Mean NLL of reconstructing `original` from `corrupted`, no injection.
    pub fn denoising_loss(&self, corrupted: &TaggedText, original: &TaggedText) -> Result<T> {
        let ex = self.example(corrupted, original, false)?;
        self.sequence_loss(&ex)
    }
}

/// True when `id` terminates generation.
pub(crate) fn is_eos(id: usize) -> bool {
    id == EOS_ID
}
