//! Deterministic synthetic corpora for desk-scale experiments.
//!
//! Labels follow fixed rules, checked in order:
//!
//! 1. the mention's full string repeats a mention from an earlier sentence: `old`
//! 2. it starts with `his`, `her` or `their`: `mediated/syntactic`
//! 3. it contains the coordinator `and`: `mediated/aggregate`
//! 4. it starts with `another` or `further`: `mediated/comparative`
//! 5. otherwise: `new`
//!
//! Rule 1 can only be decided from previous context; rules 2-4 from the
//! mention alone. Possessive entities are never repeated, so a mention
//! starting with a possessive is always `mediated/syntactic`.
//!
//! Every mention string is drawn from the same pool whether it ends up `old`
//! or `new`, so the mention text carries no reliable old/new signal.
//!
//! Each clause opens with a cue word drawn from an old-leaning set with
//! probability [`CUE_RELIABILITY`] when the mention is `old` (and from a
//! new-leaning set otherwise), which makes the local sentence informative but
//! not decisive.
//!
//! Each document is generated from its own stream keyed by `(seed, doc index)`.

use std::collections::HashSet;

use thiserror::Error;

use crate::corpus::{Corpus, Document, IsLabel, Mention, Sentence};
use crate::rng::SeededRng;

pub const POSSESSIVES: [&str; 3] = ["his", "her", "their"];
pub const COMPARATIVES: [&str; 2] = ["another", "further"];
pub const COORDINATOR: &str = "and";

const DETERMINERS: [&str; 2] = ["the", "a"];
const ADJECTIVES: [&str; 6] = ["red", "small", "local", "old", "new", "public"];
const NOUNS: [&str; 24] = [
    "company", "farmer", "market", "price", "report", "city", "bank", "school", "teacher",
    "river", "contract", "budget", "family", "worker", "plant", "vote", "court", "road",
    "minister", "station", "investor", "village", "union", "factory",
];
const VERBS: [&str; 8] = ["rose", "fell", "met", "grew", "closed", "agreed", "waited", "spoke"];
const FILLERS: [&str; 6] = ["yesterday", "quickly", "today", "twice", "there", "early"];
const OLD_CUES: [&str; 3] = ["again", "meanwhile", "still"];
const NEW_CUES: [&str; 3] = ["suddenly", "recently", "now"];

/// Probability that a clause opener agrees with its mention's old/new status.
pub const CUE_RELIABILITY: f64 = 0.8;
const P_REPEAT: f64 = 0.45;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("synthetic corpus sizes must be >= 1 (docs {n_docs}, sentences {sentences_per_doc}, mentions {mentions_per_sentence})")]
pub struct InvalidSizes {
    pub n_docs: usize,
    pub sentences_per_doc: usize,
    pub mentions_per_sentence: usize,
}

pub fn generate_synthetic(
    seed: u64,
    n_docs: usize,
    sentences_per_doc: usize,
    mentions_per_sentence: usize,
) -> Result<Corpus, InvalidSizes> {
    if n_docs == 0 || sentences_per_doc == 0 || mentions_per_sentence == 0 {
        return Err(InvalidSizes {
            n_docs,
            sentences_per_doc,
            mentions_per_sentence,
        });
    }
    let documents = (0..n_docs)
        .map(|i| {
            let mut rng = SeededRng::keyed(seed, &[i as u64]);
            generate_document(&mut rng, format!("doc{i:04}"), sentences_per_doc, mentions_per_sentence)
        })
        .collect();
    Ok(Corpus { documents })
}

struct Surface {
    words: Vec<&'static str>,
    head: usize,
}

fn fresh_surface(rng: &mut SeededRng) -> Surface {
    let r = rng.uniform();
    if r < 0.55 {
        let mut words = vec![*rng.choose(&DETERMINERS)];
        if rng.bernoulli(0.5) {
            words.push(*rng.choose(&ADJECTIVES));
        }
        words.push(*rng.choose(&NOUNS));
        let head = words.len() - 1;
        Surface { words, head }
    } else if r < 0.70 {
        Surface {
            words: vec![*rng.choose(&POSSESSIVES), *rng.choose(&NOUNS)],
            head: 1,
        }
    } else if r < 0.85 {
        let first = rng.below(NOUNS.len());
        let second = (first + 1 + rng.below(NOUNS.len() - 1)) % NOUNS.len();
        Surface {
            words: vec![
                *rng.choose(&DETERMINERS),
                NOUNS[first],
                COORDINATOR,
                *rng.choose(&DETERMINERS),
                NOUNS[second],
            ],
            head: 1,
        }
    } else {
        Surface {
            words: vec![*rng.choose(&COMPARATIVES), *rng.choose(&NOUNS)],
            head: 1,
        }
    }
}

fn is_possessive(words: &[&str]) -> bool {
    POSSESSIVES.contains(&words[0])
}

fn rule_label(words: &[&str], earlier: &HashSet<String>) -> IsLabel {
    if earlier.contains(&words.join(" ")) {
        IsLabel::Old
    } else if POSSESSIVES.contains(&words[0]) {
        IsLabel::Syntactic
    } else if words.contains(&COORDINATOR) {
        IsLabel::Aggregate
    } else if COMPARATIVES.contains(&words[0]) {
        IsLabel::Comparative
    } else {
        IsLabel::New
    }
}

fn generate_document(
    rng: &mut SeededRng,
    id: String,
    n_sentences: usize,
    per_sentence: usize,
) -> Document {
    // Entities available for repetition: those from earlier sentences only.
    let mut introduced: Vec<(Vec<&'static str>, usize)> = Vec::new();
    let mut earlier_strings: HashSet<String> = HashSet::new();
    let mut sentences = Vec::with_capacity(n_sentences);
    let mut mentions = Vec::with_capacity(n_sentences * per_sentence);

    for s in 0..n_sentences {
        let mut words: Vec<&'static str> = Vec::new();
        let mut current: Vec<(Vec<&'static str>, usize)> = Vec::new();
        for k in 0..per_sentence {
            let (mwords, head) = if !introduced.is_empty() && rng.bernoulli(P_REPEAT) {
                introduced[rng.below(introduced.len())].clone()
            } else {
                let f = loop {
                    let f = fresh_surface(rng);
                    if !(is_possessive(&f.words) && earlier_strings.contains(&f.words.join(" "))) {
                        break f;
                    }
                };
                (f.words, f.head)
            };
            let label = rule_label(&mwords, &earlier_strings);
            let cue_agrees = rng.bernoulli(CUE_RELIABILITY);
            let old_cue = (label == IsLabel::Old) == cue_agrees;
            words.push(*rng.choose(if old_cue { &OLD_CUES } else { &NEW_CUES }));

            let start = words.len();
            words.extend_from_slice(&mwords);
            mentions.push(Mention {
                id: format!("s{s}m{k}"),
                sentence_index: s,
                start,
                end: words.len(),
                head_index: start + head,
                label: Some(label),
            });
            words.push(*rng.choose(&VERBS));
            if rng.bernoulli(0.5) {
                words.push(*rng.choose(&FILLERS));
            }
            words.push(if k + 1 == per_sentence { "." } else { "," });
            current.push((mwords, head));
        }
        for (w, h) in current {
            earlier_strings.insert(w.join(" "));
            if !is_possessive(&w) && !introduced.iter().any(|(iw, _)| *iw == w) {
                introduced.push((w, h));
            }
        }
        sentences.push(Sentence::from_words(s, &words));
    }

    Document {
        id,
        sentences,
        mentions,
    }
}
