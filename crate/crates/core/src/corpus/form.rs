use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Figure-of-speech label carried by every serialized sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FormCode {
    Literal,
    Hyperbole,
    Idiom,
    Sarcasm,
    Metaphor,
    Simile,
}

/// Vocabulary index of the first form code; ids below are control tokens.
pub(crate) const FORM_ID_BASE: usize = 4;

impl FormCode {
    pub const ALL: [FormCode; 6] = [
        FormCode::Literal,
        FormCode::Hyperbole,
        FormCode::Idiom,
        FormCode::Sarcasm,
        FormCode::Metaphor,
        FormCode::Simile,
    ];

    pub const FIGURATIVE: [FormCode; 5] = [
        FormCode::Hyperbole,
        FormCode::Idiom,
        FormCode::Sarcasm,
        FormCode::Metaphor,
        FormCode::Simile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormCode::Literal => "LITERAL",
            FormCode::Hyperbole => "HYPERBOLE",
            FormCode::Idiom => "IDIOM",
            FormCode::Sarcasm => "SARCASM",
            FormCode::Metaphor => "METAPHOR",
            FormCode::Simile => "SIMILE",
        }
    }

    /// Surface token that prefixes serialized sequences, e.g. `[SIMILE]`.
    pub fn token(self) -> &'static str {
        match self {
            FormCode::Literal => "[LITERAL]",
            FormCode::Hyperbole => "[HYPERBOLE]",
            FormCode::Idiom => "[IDIOM]",
            FormCode::Sarcasm => "[SARCASM]",
            FormCode::Metaphor => "[METAPHOR]",
            FormCode::Simile => "[SIMILE]",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Reserved vocabulary id.
    pub fn token_id(self) -> usize {
        FORM_ID_BASE + self.index()
    }

    pub fn from_token_id(id: usize) -> Option<FormCode> {
        id.checked_sub(FORM_ID_BASE)
            .and_then(|i| FormCode::ALL.get(i).copied())
    }

    pub fn from_token(token: &str) -> Option<FormCode> {
        FormCode::ALL.into_iter().find(|f| f.token() == token)
    }

    pub fn is_figurative(self) -> bool {
        self != FormCode::Literal
    }
}

impl fmt::Display for FormCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FormCode::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownForm(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn six_distinct_ids_above_control_range() {
        let ids: HashSet<_> = FormCode::ALL.iter().map(|f| f.token_id()).collect();
        assert_eq!(ids.len(), 6);
        assert!(ids.iter().all(|&id| id >= FORM_ID_BASE));
    }

    #[test]
    fn name_and_id_round_trip() {
        for f in FormCode::ALL {
            assert_eq!(f.name().parse::<FormCode>().unwrap(), f);
            assert_eq!(FormCode::from_token_id(f.token_id()), Some(f));
            assert_eq!(FormCode::from_token(f.token()), Some(f));
        }
        assert!("literal".parse::<FormCode>().is_err());
        assert_eq!(FormCode::from_token_id(0), None);
        assert_eq!(FormCode::from_token_id(FORM_ID_BASE + 6), None);
    }
}
