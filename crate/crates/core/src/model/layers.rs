//! Forward/backward kernels for the transformer blocks.
//!
//! Every forward returns the activations its backward needs. Backward
//! functions accumulate parameter gradients into `grads` (aligned with the
//! parameter list) and return the gradient w.r.t. their inputs.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::params::{AttnIdx, FfnIdx, LinearIdx, NormIdx};
use crate::Scalar;

const LN_EPS: f64 = 1e-5;

pub(crate) type Tensors<T> = [Array2<T>];

fn add_matmul<T: Scalar>(c: &mut Array2<T>, a: ArrayView2<T>, b: ArrayView2<T>) {
    general_mat_mul(T::one(), &a, &b, T::one(), c);
}

// ---------------------------------------------------------------- linear

pub(crate) fn linear<T: Scalar>(p: &Tensors<T>, idx: LinearIdx, x: &Array2<T>) -> Array2<T> {
    let mut y = x.dot(&p[idx.w]);
    y += &p[idx.b];
    y
}

pub(crate) fn linear_backward<T: Scalar>(
    p: &Tensors<T>,
    g: &mut Tensors<T>,
    idx: LinearIdx,
    x: &Array2<T>,
    dy: &Array2<T>,
) -> Array2<T> {
    add_matmul(&mut g[idx.w], x.t(), dy.view());
    g[idx.b] += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&p[idx.w].t())
}

// ---------------------------------------------------------------- layer norm

pub(crate) struct NormCache<T> {
    xhat: Array2<T>,
    inv_std: Vec<T>,
}

pub(crate) fn layer_norm<T: Scalar>(
    p: &Tensors<T>,
    idx: NormIdx,
    x: &Array2<T>,
) -> (Array2<T>, NormCache<T>) {
    let d = T::from_usize(x.ncols()).unwrap();
    let eps = T::lit(LN_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Vec::with_capacity(x.nrows());
    for mut row in xhat.rows_mut() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        let inv = (var + eps).sqrt().recip();
        row.mapv_inplace(|v| v * inv);
        inv_std.push(inv);
    }
    let mut y = &xhat * &p[idx.gain];
    y += &p[idx.bias];
    (y, NormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    p: &Tensors<T>,
    g: &mut Tensors<T>,
    idx: NormIdx,
    cache: &NormCache<T>,
    dy: &Array2<T>,
) -> Array2<T> {
    g[idx.gain] += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    g[idx.bias] += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d = T::from_usize(dy.ncols()).unwrap();
    let mut dx = dy * &p[idx.gain];
    for ((mut row, xhat), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(&cache.inv_std)
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / d;
        for (v, &xh) in row.iter_mut().zip(xhat) {
            *v = inv * (*v - mean_d - xh * mean_dx);
        }
    }
    dx
}

// ---------------------------------------------------------------- attention core

pub(crate) fn softmax_rows<T: Scalar>(s: &mut Array2<T>) {
    for mut row in s.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// `softmax(q kᵀ · scale) v` for one head; returns the output and the
/// attention probabilities.
pub(crate) fn attend<T: Scalar>(
    q: ArrayView2<T>,
    k: ArrayView2<T>,
    v: ArrayView2<T>,
    scale: T,
    causal: bool,
) -> (Array2<T>, Array2<T>) {
    let mut scores = q.dot(&k.t());
    scores.mapv_inplace(|x| x * scale);
    if causal {
        for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
            row.slice_mut(s![i + 1..]).fill(T::neg_infinity());
        }
    }
    softmax_rows(&mut scores);
    (scores.dot(&v), scores)
}

/// Gradients of [`attend`] w.r.t. q, k and v.
pub(crate) fn attend_backward<T: Scalar>(
    q: ArrayView2<T>,
    k: ArrayView2<T>,
    v: ArrayView2<T>,
    probs: &Array2<T>,
    scale: T,
    dout: ArrayView2<T>,
) -> (Array2<T>, Array2<T>, Array2<T>) {
    let dv = probs.t().dot(&dout);
    let dp = dout.dot(&v.t());
    let mut ds = &dp * probs;
    for (mut row, p_row) in ds.rows_mut().into_iter().zip(probs.rows()) {
        let dot = row.sum();
        for (x, &p) in row.iter_mut().zip(p_row) {
            *x = (*x - p * dot) * scale;
        }
    }
    let dq = ds.dot(&k);
    let dk = ds.t().dot(&q);
    (dq, dk, dv)
}

// ---------------------------------------------------------------- multi-head attention

pub(crate) struct AttnCache<T> {
    q_in: Array2<T>,
    kv_in: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    concat: Array2<T>,
}

pub(crate) fn multi_head_attention<T: Scalar>(
    p: &Tensors<T>,
    idx: &AttnIdx,
    n_heads: usize,
    q_in: &Array2<T>,
    kv_in: &Array2<T>,
    causal: bool,
) -> (Array2<T>, AttnCache<T>) {
    let q = linear(p, idx.q, q_in);
    let k = linear(p, idx.k, kv_in);
    let v = linear(p, idx.v, kv_in);
    let d = q.ncols();
    let dh = d / n_heads;
    let scale = T::from_usize(dh).unwrap().sqrt().recip();
    let mut concat = Array2::zeros((q.nrows(), d));
    let mut probs = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let (out, pr) = attend(q.slice(cols), k.slice(cols), v.slice(cols), scale, causal);
        concat.slice_mut(cols).assign(&out);
        probs.push(pr);
    }
    let out = linear(p, idx.o, &concat);
    (
        out,
        AttnCache {
            q_in: q_in.clone(),
            kv_in: kv_in.clone(),
            q,
            k,
            v,
            probs,
            concat,
        },
    )
}

/// Returns gradients w.r.t. the query input and the key/value input.
pub(crate) fn multi_head_attention_backward<T: Scalar>(
    p: &Tensors<T>,
    g: &mut Tensors<T>,
    idx: &AttnIdx,
    n_heads: usize,
    c: &AttnCache<T>,
    dout: &Array2<T>,
) -> (Array2<T>, Array2<T>) {
    let dconcat = linear_backward(p, g, idx.o, &c.concat, dout);
    let d = c.q.ncols();
    let dh = d / n_heads;
    let scale = T::from_usize(dh).unwrap().sqrt().recip();
    let mut dq = Array2::zeros(c.q.raw_dim());
    let mut dk = Array2::zeros(c.k.raw_dim());
    let mut dv = Array2::zeros(c.v.raw_dim());
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let (gq, gk, gv) = attend_backward(
            c.q.slice(cols),
            c.k.slice(cols),
            c.v.slice(cols),
            &c.probs[h],
            scale,
            dconcat.slice(cols),
        );
        dq.slice_mut(cols).assign(&gq);
        dk.slice_mut(cols).assign(&gk);
        dv.slice_mut(cols).assign(&gv);
    }
    let dq_in = linear_backward(p, g, idx.q, &c.q_in, &dq);
    let mut dkv_in = linear_backward(p, g, idx.k, &c.kv_in, &dk);
    dkv_in += &linear_backward(p, g, idx.v, &c.kv_in, &dv);
    (dq_in, dkv_in)
}

// ---------------------------------------------------------------- feed-forward

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x)
}

pub(crate) struct FfnCache<T> {
    x: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
}

pub(crate) fn feed_forward<T: Scalar>(
    p: &Tensors<T>,
    idx: &FfnIdx,
    x: &Array2<T>,
) -> (Array2<T>, FfnCache<T>) {
    let pre = linear(p, idx.up, x);
    let act = pre.mapv(gelu);
    let y = linear(p, idx.down, &act);
    (
        y,
        FfnCache {
            x: x.clone(),
            pre,
            act,
        },
    )
}

pub(crate) fn feed_forward_backward<T: Scalar>(
    p: &Tensors<T>,
    g: &mut Tensors<T>,
    idx: &FfnIdx,
    c: &FfnCache<T>,
    dy: &Array2<T>,
) -> Array2<T> {
    let mut dact = linear_backward(p, g, idx.down, &c.act, dy);
    dact.zip_mut_with(&c.pre, |d, &x| *d *= gelu_grad(x));
    linear_backward(p, g, idx.up, &c.x, &dact)
}

// ---------------------------------------------------------------- dropout

/// Inverted-dropout mask; `None` means identity.
pub(crate) fn dropout_mask<T: Scalar, R: Rng>(
    rng: Option<&mut R>,
    rate: f64,
    shape: (usize, usize),
) -> Option<Array2<T>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    Some(Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    }))
}

pub(crate) fn apply_mask<T: Scalar>(x: &mut Array2<T>, mask: &Option<Array2<T>>) {
    if let Some(m) = mask {
        *x *= m;
    }
}
