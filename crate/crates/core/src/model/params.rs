use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::Vocab;
use crate::Scalar;

/// Transformer dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ffn_width: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Desk-scale defaults (d=64, 4 heads, 2+2 layers) for a vocabulary.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ffn_width: 128,
            vocab_size,
            max_len: 64,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::invalid(format!("model config: {m}")));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail("d_model must be a positive multiple of n_heads");
        }
        if self.ffn_width == 0 || self.max_len < 2 {
            return fail("ffn_width must be positive and max_len at least 2");
        }
        if self.vocab_size <= crate::vocab::FIRST_WORD_ID {
            return fail("vocab_size must exceed the reserved control and form-code ids");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LinearIdx {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct AttnIdx {
    pub q: LinearIdx,
    pub k: LinearIdx,
    pub v: LinearIdx,
    pub o: LinearIdx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct FfnIdx {
    pub up: LinearIdx,
    pub down: LinearIdx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct EncLayerIdx {
    pub norm_attn: NormIdx,
    pub attn: AttnIdx,
    pub norm_ffn: NormIdx,
    pub ffn: FfnIdx,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct DecLayerIdx {
    pub norm_self: NormIdx,
    pub self_attn: AttnIdx,
    pub norm_cross: NormIdx,
    pub cross_attn: AttnIdx,
    pub norm_ffn: NormIdx,
    pub ffn: FfnIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Embedding,
    Xavier,
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Spec {
    pub name: String,
    pub shape: (usize, usize),
    pub init: Init,
}

/// Positions of every tensor in the flat parameter list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub specs: Vec<Spec>,
    pub embed: usize,
    pub enc: Vec<EncLayerIdx>,
    pub enc_norm: NormIdx,
    pub dec: Vec<DecLayerIdx>,
    pub dec_norm: NormIdx,
}

struct Builder {
    specs: Vec<Spec>,
}

impl Builder {
    fn push(&mut self, name: String, shape: (usize, usize), init: Init) -> usize {
        self.specs.push(Spec { name, shape, init });
        self.specs.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> LinearIdx {
        LinearIdx {
            w: self.push(format!("{name}.weight"), (fan_in, fan_out), Init::Xavier),
            b: self.push(format!("{name}.bias"), (1, fan_out), Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> NormIdx {
        NormIdx {
            gain: self.push(format!("{name}.gain"), (1, d), Init::Ones),
            bias: self.push(format!("{name}.bias"), (1, d), Init::Zeros),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> AttnIdx {
        AttnIdx {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }

    fn ffn(&mut self, name: &str, d: usize, width: usize) -> FfnIdx {
        FfnIdx {
            up: self.linear(&format!("{name}.up"), d, width),
            down: self.linear(&format!("{name}.down"), width, d),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Layout {
        let d = cfg.d_model;
        let mut b = Builder { specs: Vec::new() };
        let embed = b.push("embed".into(), (cfg.vocab_size, d), Init::Embedding);
        let enc = (0..cfg.n_enc_layers)
            .map(|i| EncLayerIdx {
                norm_attn: b.norm(&format!("enc.{i}.norm_attn"), d),
                attn: b.attn(&format!("enc.{i}.attn"), d),
                norm_ffn: b.norm(&format!("enc.{i}.norm_ffn"), d),
                ffn: b.ffn(&format!("enc.{i}.ffn"), d, cfg.ffn_width),
            })
            .collect();
        let enc_norm = b.norm("enc.norm", d);
        let dec = (0..cfg.n_dec_layers)
            .map(|i| DecLayerIdx {
                norm_self: b.norm(&format!("dec.{i}.norm_self"), d),
                self_attn: b.attn(&format!("dec.{i}.self_attn"), d),
                norm_cross: b.norm(&format!("dec.{i}.norm_cross"), d),
                cross_attn: b.attn(&format!("dec.{i}.cross_attn"), d),
                norm_ffn: b.norm(&format!("dec.{i}.norm_ffn"), d),
                ffn: b.ffn(&format!("dec.{i}.ffn"), d, cfg.ffn_width),
            })
            .collect();
        let dec_norm = b.norm("dec.norm", d);
        Layout {
            specs: b.specs,
            embed,
            enc,
            enc_norm,
            dec,
            dec_norm,
        }
    }
}

fn sinusoidal<T: Scalar>(max_len: usize, d: usize) -> Array2<T> {
    Array2::from_shape_fn((max_len, d), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d as f64);
        T::lit(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}

/// All trainable tensors plus the fixed positional table.
///
/// The embedding table is shared by encoder input, decoder input, form codes
/// and the output projection. Form-code injection reads a row of it and adds
/// no tensors of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar> {
    pub(crate) config: ModelConfig,
    pub(crate) vocab: Vocab,
    pub(crate) layout: Layout,
    pub(crate) tensors: Vec<Array2<T>>,
    pub(crate) positions: Array2<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Randomly initialized parameters; `config.vocab_size` must equal
    /// `vocab.len()`.
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.vocab_size != vocab.len() {
            return Err(Error::invalid(format!(
                "vocab_size {} does not match vocabulary of {} tokens",
                config.vocab_size,
                vocab.len()
            )));
        }
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout
            .specs
            .iter()
            .map(|spec| {
                let (r, c) = spec.shape;
                let std = match spec.init {
                    Init::Zeros => return Array2::zeros(spec.shape),
                    Init::Ones => return Array2::ones(spec.shape),
                    Init::Embedding => (1.0 / config.d_model as f64).sqrt(),
                    Init::Xavier => (2.0 / (r + c) as f64).sqrt(),
                };
                let normal = Normal::new(0.0, std).expect("positive std");
                Array2::from_shape_simple_fn(spec.shape, || T::lit(normal.sample(&mut rng)))
            })
            .collect();
        Ok(Self::from_parts(config, vocab, layout, tensors))
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        vocab: Vocab,
        layout: Layout,
        tensors: Vec<Array2<T>>,
    ) -> Self {
        ModelParams {
            positions: sinusoidal(config.max_len, config.d_model),
            config,
            vocab,
            layout,
            tensors,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn tensors(&self) -> &[Array2<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.tensors
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.layout.specs.iter().map(|s| s.name.as_str())
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Zero tensors shaped like the parameters.
    pub fn zeros_like(&self) -> Vec<Array2<T>> {
        self.tensors
            .iter()
            .map(|t| Array2::zeros(t.raw_dim()))
            .collect()
    }

    /// Same parameters in another precision.
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let tensors = self
            .tensors
            .iter()
            .map(|t| t.mapv(|v| U::lit(v.as_f64())))
            .collect();
        ModelParams::from_parts(
            self.config,
            self.vocab.clone(),
            self.layout.clone(),
            tensors,
        )
    }

    pub fn with_dropout(mut self, dropout: f64) -> Result<Self> {
        self.config.dropout = dropout;
        self.config.validate()?;
        Ok(self)
    }
}
