use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{FormCode, TaggedText, EOS, MASK, PAD, UNK};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const MASK_ID: usize = 2;
pub const UNK_ID: usize = 3;
/// First id available to word tokens.
pub const FIRST_WORD_ID: usize = 10;

/// Token ↔ id table. Control tokens and form codes occupy fixed ids
/// `0..FIRST_WORD_ID`; words follow in insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    words: Vec<String>,
}

impl TryFrom<VocabRepr> for Vocab {
    type Error = Error;

    fn try_from(r: VocabRepr) -> Result<Self> {
        let v = Vocab::from_words(r.words.iter().map(String::as_str));
        if v.len() != FIRST_WORD_ID + r.words.len() {
            return Err(Error::Checkpoint(
                "duplicate or reserved vocabulary words".into(),
            ));
        }
        Ok(v)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            words: v.tokens[FIRST_WORD_ID..].to_vec(),
        }
    }
}

impl Vocab {
    /// Builds a vocabulary from word tokens; duplicates and reserved tokens
    /// are skipped.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens: Vec<String> = vec![PAD.into(), EOS.into(), MASK.into(), UNK.into()];
        tokens.extend(FormCode::ALL.iter().map(|f| f.token().to_string()));
        debug_assert_eq!(tokens.len(), FIRST_WORD_ID);
        let mut index: HashMap<String, usize> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        for w in words {
            if !index.contains_key(w) {
                index.insert(w.to_string(), tokens.len());
                tokens.push(w.to_string());
            }
        }
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(UNK)
    }

    /// Ids of `[form code] T [eos]`.
    pub fn encode(&self, text: &TaggedText) -> Vec<usize> {
        text.serialize().into_iter().map(|t| self.id(t)).collect()
    }

    /// Word tokens only; control ids other than `[mask]`/`[unk]` and form
    /// codes are dropped.
    pub fn decode_words(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| id == MASK_ID || id == UNK_ID || id >= FIRST_WORD_ID)
            .map(|&id| self.token(id).to_string())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_layout() {
        let v = Vocab::from_words(["a", "b", "a", "[eos]"]);
        assert_eq!(v.len(), FIRST_WORD_ID + 2);
        assert_eq!(v.id(EOS), EOS_ID);
        assert_eq!(v.id(MASK), MASK_ID);
        for f in FormCode::ALL {
            assert_eq!(v.id(f.token()), f.token_id());
        }
        assert_eq!(v.id("zzz"), UNK_ID);
    }

    #[test]
    fn encode_decode() {
        let v = Vocab::from_words(["he", "ran"]);
        let t = TaggedText::parse(FormCode::Idiom, "he ran fast").unwrap();
        let ids = v.encode(&t);
        assert_eq!(
            ids,
            vec![FormCode::Idiom.token_id(), 10, 11, UNK_ID, EOS_ID]
        );
        assert_eq!(v.decode_words(&ids), vec!["he", "ran", "[unk]"]);
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::from_words(["x", "y"]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"words":["x","y"]}"#);
        assert_eq!(serde_json::from_str::<Vocab>(&s).unwrap(), v);
    }
}
