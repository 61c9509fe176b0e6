//! Template-grammar benchmark.
//!
//! Literal sentences have the shape
//! `SUBJ VERB the ADJ NOUN ADVERB .` and each figure of speech is a fixed,
//! string-detectable rewrite of one slot:
//!
//! | form      | rewrite                                              | marker                |
//! |-----------|------------------------------------------------------|-----------------------|
//! | HYPERBOLE | adjective to superlative, append `in the whole world` | `in the whole world`  |
//! | IDIOM     | adverb to a fixed idiomatic phrase                   | any idiom phrase      |
//! | SARCASM   | `oh great ,` prefix and `, just wonderful` close      | leading `oh great ,`  |
//! | METAPHOR  | verb to a figurative verb                            | any figurative verb   |
//! | SIMILE    | append `like a X` after the adverb                   | `like a`              |

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FormCode, ParallelPair, TaggedText};

const SUBJECTS: [&str; 10] = [
    "the teacher",
    "my brother",
    "the old man",
    "our neighbor",
    "the student",
    "her sister",
    "the driver",
    "my boss",
    "the child",
    "his friend",
];

const VERBS: [(&str, &str); 10] = [
    ("read", "devoured"),
    ("cleaned", "attacked"),
    ("finished", "crushed"),
    ("fixed", "healed"),
    ("painted", "dressed"),
    ("checked", "interrogated"),
    ("wrote", "birthed"),
    ("carried", "shouldered"),
    ("moved", "wrestled"),
    ("watched", "drank"),
];

const ADJECTIVES: [(&str, &str); 10] = [
    ("long", "longest"),
    ("old", "oldest"),
    ("small", "smallest"),
    ("big", "biggest"),
    ("heavy", "heaviest"),
    ("cheap", "cheapest"),
    ("dirty", "dirtiest"),
    ("new", "newest"),
    ("strange", "strangest"),
    ("short", "shortest"),
];

const NOUNS: [&str; 12] = [
    "report", "car", "kitchen", "letter", "box", "table", "book", "window", "bike", "fence", "map",
    "bag",
];

/// (adverb, idiom, simile vehicle)
const ADVERBS: [(&str, &str, &str); 8] = [
    ("quickly", "in a heartbeat", "cheetah"),
    ("easily", "without breaking a sweat", "pro"),
    ("rarely", "once in a blue moon", "comet"),
    ("early", "at the crack of dawn", "rooster"),
    ("late", "at the eleventh hour", "sloth"),
    ("carefully", "with kid gloves", "surgeon"),
    ("slowly", "at a snail's pace", "turtle"),
    ("finally", "at long last", "marathon runner"),
];

const HYPERBOLE_MARKER: &str = "in the whole world";
const SARCASM_OPEN: &str = "oh great ,";
const SARCASM_CLOSE: &str = ", just wonderful";
const SIMILE_MARKER: &str = "like a";

/// One literal sentence as slot indices into the template tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Sentence {
    subj: usize,
    verb: usize,
    adj: usize,
    noun: usize,
    adverb: usize,
}

impl Sentence {
    fn sample(rng: &mut impl Rng) -> Self {
        Sentence {
            subj: rng.random_range(0..SUBJECTS.len()),
            verb: rng.random_range(0..VERBS.len()),
            adj: rng.random_range(0..ADJECTIVES.len()),
            noun: rng.random_range(0..NOUNS.len()),
            adverb: rng.random_range(0..ADVERBS.len()),
        }
    }

    /// Applies every listed rewrite; each touches its own slot.
    fn render_mixed(&self, forms: &[FormCode]) -> String {
        let has = |f| forms.contains(&f);
        let (verb, fig_verb) = VERBS[self.verb];
        let (adj, sup) = ADJECTIVES[self.adj];
        let (adverb, idiom, vehicle) = ADVERBS[self.adverb];
        let mut out: Vec<&str> = Vec::new();
        if has(FormCode::Sarcasm) {
            out.push(SARCASM_OPEN);
        }
        out.push(SUBJECTS[self.subj]);
        out.push(if has(FormCode::Metaphor) {
            fig_verb
        } else {
            verb
        });
        out.push("the");
        out.push(if has(FormCode::Hyperbole) { sup } else { adj });
        out.push(NOUNS[self.noun]);
        if has(FormCode::Hyperbole) {
            out.push(HYPERBOLE_MARKER);
        }
        out.push(if has(FormCode::Idiom) { idiom } else { adverb });
        if has(FormCode::Simile) {
            out.push(SIMILE_MARKER);
            out.push(vehicle);
        }
        if has(FormCode::Sarcasm) {
            out.push(SARCASM_CLOSE);
        }
        out.push(".");
        out.join(" ")
    }

    /// A partial rewrite that lacks the form's marker.
    fn render_weak(&self, form: FormCode) -> String {
        let subj = SUBJECTS[self.subj];
        let (verb, _) = VERBS[self.verb];
        let (adj, sup) = ADJECTIVES[self.adj];
        let noun = NOUNS[self.noun];
        let (adverb, _, _) = ADVERBS[self.adverb];
        match form {
            FormCode::Literal => format!("{subj} {verb} that {adj} {noun} {adverb} ."),
            FormCode::Hyperbole => format!("{subj} {verb} the {sup} {noun} {adverb} ."),
            FormCode::Idiom => format!("{subj} {verb} the {adj} {noun} very {adverb} ."),
            FormCode::Sarcasm => format!("well , {subj} {verb} the {adj} {noun} {adverb} ."),
            FormCode::Metaphor => format!("{subj} really {verb} the {adj} {noun} {adverb} ."),
            FormCode::Simile => format!("{subj} {verb} the {adj} {noun} {adverb} as usual ."),
        }
    }
}

fn tagged(form: FormCode, text: &str) -> TaggedText {
    TaggedText::parse(form, text).expect("template tokens are valid")
}

fn contains_phrase(text: &str, phrase: &str) -> bool {
    format!(" {text} ").contains(&format!(" {phrase} "))
}

/// Exact string test for the synthetic marker of `form`.
///
/// For `LITERAL` this is true when no figurative marker is present.
pub fn has_marker(form: FormCode, text: &str) -> bool {
    match form {
        FormCode::Literal => FormCode::FIGURATIVE.iter().all(|&f| !has_marker(f, text)),
        FormCode::Hyperbole => contains_phrase(text, HYPERBOLE_MARKER),
        FormCode::Idiom => ADVERBS
            .iter()
            .any(|(_, idiom, _)| contains_phrase(text, idiom)),
        FormCode::Sarcasm => text.starts_with(&format!("{SARCASM_OPEN} ")),
        FormCode::Metaphor => VERBS.iter().any(|(_, v)| contains_phrase(text, v)),
        FormCode::Simile => contains_phrase(text, SIMILE_MARKER),
    }
}

/// Train/valid/test split of one form's pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<ParallelPair>,
    pub valid: Vec<ParallelPair>,
    pub test: Vec<ParallelPair>,
}

impl Splits {
    /// 80/10/10 split in input order.
    pub fn split(mut pairs: Vec<ParallelPair>) -> Splits {
        let n = pairs.len();
        let n_train = n * 8 / 10;
        let n_valid = n / 10;
        let test = pairs.split_off(n_train + n_valid);
        let valid = pairs.split_off(n_train);
        Splits {
            train: pairs,
            valid,
            test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Literal→figurative pairs for every figurative form.
pub type SynthCorpus = BTreeMap<FormCode, Splits>;

fn form_rng(seed: u64, form: FormCode) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + form.index() as u64);
    rng
}

/// Share of each corpus's literal sources that carry one figure other than
/// the corpus's own form. The rewrite keeps that figure.
pub const CROSS_FIGURE_RATE: f64 = 0.2;

/// Generates `n_per_form` distinct sentences per figurative form and pairs
/// each with its rewrite. Sources are literal with respect to the corpus's
/// form; a [`CROSS_FIGURE_RATE`] share already bear another figure, as the
/// "literal" side of a single-figure dataset would. Deterministic given
/// `seed`.
pub fn synth_corpus(n_per_form: usize, seed: u64) -> SynthCorpus {
    FormCode::FIGURATIVE
        .into_iter()
        .map(|form| {
            let mut rng = form_rng(seed, form);
            let others: Vec<FormCode> = FormCode::FIGURATIVE
                .into_iter()
                .filter(|&f| f != form)
                .collect();
            let mut seen = HashSet::new();
            let mut pairs = Vec::with_capacity(n_per_form);
            while pairs.len() < n_per_form {
                let s = Sentence::sample(&mut rng);
                let extra: Vec<FormCode> = rng
                    .random_bool(CROSS_FIGURE_RATE)
                    .then(|| *others.choose(&mut rng).expect("nonempty"))
                    .into_iter()
                    .collect();
                if !seen.insert(s) {
                    continue;
                }
                let mut forms = extra.clone();
                forms.push(form);
                pairs.push(ParallelPair::new(
                    tagged(FormCode::Literal, &s.render_mixed(&extra)),
                    tagged(form, &s.render_mixed(&forms)),
                ));
            }
            (form, Splits::split(pairs))
        })
        .collect()
}

/// Share of paraphrase-pool sources that already carry one figure.
pub const FIGURATIVE_SOURCE_RATE: f64 = 0.3;

/// Raw paraphrase candidates, tagged `LITERAL → LITERAL` as delivered by a
/// generic paraphrase corpus.
///
/// A [`FIGURATIVE_SOURCE_RATE`] share of sources already bear one random
/// figure. Half of the targets keep the source's figure and add a new,
/// different one; a quarter are partial rewrites that lack any marker; a
/// quarter are plain literal paraphrases.
pub fn synth_paraphrase_pool(n: usize, seed: u64) -> Vec<ParallelPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(100);
    let pick = |rng: &mut ChaCha8Rng| *FormCode::FIGURATIVE.choose(rng).expect("nonempty");
    (0..n)
        .map(|_| {
            let s = Sentence::sample(&mut rng);
            let source_form = rng
                .random_bool(FIGURATIVE_SOURCE_RATE)
                .then(|| pick(&mut rng));
            let source: Vec<FormCode> = source_form.into_iter().collect();
            let form = loop {
                let f = pick(&mut rng);
                if source_form != Some(f) {
                    break f;
                }
            };
            let roll: f64 = rng.random();
            let target = if roll < 0.5 {
                let mut forms = source.clone();
                forms.push(form);
                s.render_mixed(&forms)
            } else if roll < 0.75 {
                s.render_weak(form)
            } else {
                s.render_weak(FormCode::Literal)
            };
            ParallelPair::new(
                tagged(FormCode::Literal, &s.render_mixed(&source)),
                tagged(FormCode::Literal, &target),
            )
        })
        .collect()
}

/// Every word the grammar can emit, sorted.
pub fn lexicon() -> Vec<String> {
    let mut words = std::collections::BTreeSet::new();
    let mut add = |s: &str| {
        for w in s.split_whitespace() {
            words.insert(w.to_string());
        }
    };
    for s in SUBJECTS {
        add(s);
    }
    for (a, b) in VERBS.iter().chain(ADJECTIVES.iter()) {
        add(a);
        add(b);
    }
    for n in NOUNS {
        add(n);
    }
    for (a, i, v) in ADVERBS {
        add(a);
        add(i);
        add(v);
    }
    for s in [
        HYPERBOLE_MARKER,
        SARCASM_OPEN,
        SARCASM_CLOSE,
        SIMILE_MARKER,
        "the that very well really as usual .",
    ] {
        add(s);
    }
    words.into_iter().collect()
}
