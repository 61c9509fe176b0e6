use serde::{Deserialize, Serialize};

use super::FormCode;
use crate::error::{Error, Result};

pub const PAD: &str = "[pad]";
pub const EOS: &str = "[eos]";
pub const MASK: &str = "[mask]";
pub const UNK: &str = "[unk]";

/// A whitespace-tokenized sentence labelled with its form.
///
/// Tokens never contain whitespace and are never a form code or one of
/// `[pad]`, `[eos]`, `[unk]`. `[mask]` is admitted so that corrupted copies
/// produced by [`mask_words`](super::mask_words) stay representable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaggedText {
    form: FormCode,
    tokens: Vec<String>,
}

impl TaggedText {
    pub fn new<S: Into<String>>(
        form: FormCode,
        tokens: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        for t in &tokens {
            validate_token(t)?;
        }
        Ok(TaggedText { form, tokens })
    }

    /// Splits `text` on whitespace.
    pub fn parse(form: FormCode, text: &str) -> Result<Self> {
        TaggedText::new(form, text.split_whitespace())
    }

    pub fn form(&self) -> FormCode {
        self.form
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Same tokens under a different label.
    pub fn with_form(&self, form: FormCode) -> TaggedText {
        TaggedText {
            form,
            tokens: self.tokens.clone(),
        }
    }

    /// Tokens joined by single spaces, without form code or `[eos]`.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// `[form code] T [eos]`.
    pub fn serialize(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.tokens.len() + 2);
        out.push(self.form.token());
        out.extend(self.tokens.iter().map(String::as_str));
        out.push(EOS);
        out
    }

    pub fn serialized_len(&self) -> usize {
        self.tokens.len() + 2
    }

    pub(crate) fn from_parts_unchecked(form: FormCode, tokens: Vec<String>) -> Self {
        TaggedText { form, tokens }
    }
}

fn validate_token(t: &str) -> Result<()> {
    let reason = if t.is_empty() {
        Some("empty token")
    } else if t.chars().any(char::is_whitespace) {
        Some("token contains whitespace")
    } else if t == PAD || t == EOS || t == UNK || FormCode::from_token(t).is_some() {
        Some("reserved control token")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(Error::InvalidToken {
            token: t.to_string(),
            reason,
        }),
        None => Ok(()),
    }
}

/// A source sentence and its rewrite.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParallelPair {
    pub source: TaggedText,
    pub target: TaggedText,
}

impl ParallelPair {
    pub fn new(source: TaggedText, target: TaggedText) -> Self {
        ParallelPair { source, target }
    }

    /// Both sides carry the same form; only legal as paraphrase data.
    pub fn is_paraphrase(&self) -> bool {
        self.source.form() == self.target.form()
    }

    pub fn reversed(&self) -> ParallelPair {
        ParallelPair {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }
}

/// A candidate pair with classifier probabilities attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: ParallelPair,
    pub p_source_literal: f64,
    pub p_target_figurative: f64,
}

impl ScoredPair {
    pub fn new(
        pair: ParallelPair,
        p_source_literal: f64,
        p_target_figurative: f64,
    ) -> Result<Self> {
        for p in [p_source_literal, p_target_figurative] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(ScoredPair {
            pair,
            p_source_literal,
            p_target_figurative,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serialization_wraps_form_and_eos() {
        let t = TaggedText::parse(FormCode::Simile, "he ran like a cheetah").unwrap();
        assert_eq!(
            t.serialize(),
            vec!["[SIMILE]", "he", "ran", "like", "a", "cheetah", "[eos]"]
        );
        assert_eq!(t.serialized_len(), 7);
    }

    #[test]
    fn control_tokens_rejected() {
        for bad in ["[eos]", "[pad]", "[unk]", "[IDIOM]", "a b", ""] {
            assert!(
                TaggedText::new(FormCode::Literal, [bad]).is_err(),
                "{bad:?}"
            );
        }
        assert!(TaggedText::new(FormCode::Literal, ["[mask]"]).is_ok());
    }

    #[test]
    fn scored_pair_probability_bounds() {
        let t = TaggedText::parse(FormCode::Literal, "x").unwrap();
        let pair = ParallelPair::new(t.clone(), t.with_form(FormCode::Idiom));
        assert!(ScoredPair::new(pair.clone(), 1.0, 0.0).is_ok());
        assert!(ScoredPair::new(pair.clone(), 1.01, 0.5).is_err());
        assert!(ScoredPair::new(pair, 0.5, -0.1).is_err());
    }
}
