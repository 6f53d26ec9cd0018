//! Whole-word vocabulary and integer encoding of pseudo sentences.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::context::{build_pseudo_sentence, normalize, ContextMode, PseudoSentence, RESERVED};
use crate::corpus::Corpus;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary io")]
    Io(#[from] std::io::Error),
    #[error("vocabulary line {line}: expected reserved token {expected:?}, found {found:?}")]
    Reserved {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("vocabulary line {line}: duplicate or malformed token {token:?}")]
    BadToken { line: usize, token: String },
}

impl Default for Vocab {
    fn default() -> Self {
        Self::reserved_only()
    }
}

impl Vocab {
    pub fn reserved_only() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, ids }
    }

    fn push(&mut self, token: String) -> bool {
        if self.ids.contains_key(&token) {
            return false;
        }
        self.ids.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
        true
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Id of a surface token: reserved tokens match exactly, everything else
    /// after case folding; unknown tokens map to `[UNK]`.
    pub fn id(&self, surface: &str) -> u32 {
        if let Some(&id) = self.ids.get(surface) {
            if (id as usize) < RESERVED.len() {
                return id;
            }
        }
        self.ids.get(&normalize(surface)).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// File form: one token per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    /// Hex SHA-256 of the file form.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, VocabError> {
        let mut vocab = Vocab {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for (line, token) in text.lines().enumerate() {
            if let Some(&expected) = RESERVED.get(line) {
                if token != expected {
                    return Err(VocabError::Reserved {
                        line,
                        expected,
                        found: token.to_owned(),
                    });
                }
            }
            if token.is_empty() || token.chars().any(char::is_whitespace) || !vocab.push(token.to_owned()) {
                return Err(VocabError::BadToken {
                    line,
                    token: token.to_owned(),
                });
            }
        }
        if vocab.len() < RESERVED.len() {
            return Err(VocabError::Reserved {
                line: vocab.len(),
                expected: RESERVED[vocab.len()],
                found: String::new(),
            });
        }
        Ok(vocab)
    }
}

/// Collects the case-folded content tokens of every pseudo sentence built over
/// `corpus` (untruncated) and keeps those seen at least `min_freq` times.
///
/// Ids: reserved tokens first, then by descending frequency, ties broken
/// lexicographically.
pub fn build_vocab(corpus: &Corpus, mode: ContextMode, min_freq: usize) -> Vocab {
    assert!(min_freq >= 1, "min_freq must be >= 1");
    let mut counts: HashMap<String, usize> = HashMap::new();
    for (doc, m) in corpus.mentions() {
        let ps = build_pseudo_sentence(m, doc, mode, usize::MAX)
            .expect("unbounded budget always fits");
        for t in &ps.surface_tokens {
            if RESERVED.contains(&t.as_str()) {
                continue;
            }
            *counts.entry(normalize(t)).or_default() += 1;
        }
    }
    let mut entries: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut vocab = Vocab::reserved_only();
    for (t, _) in entries {
        vocab.push(t);
    }
    vocab
}

/// Padded integer form of a pseudo sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub segment_ids: Vec<u8>,
    pub is_index: usize,
}

impl EncodedInput {
    /// Number of positions up to and including the last unmasked one.
    pub fn effective_len(&self) -> usize {
        self.attention_mask
            .iter()
            .rposition(|&m| m != 0)
            .map_or(0, |p| p + 1)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("pseudo sentence of {len} tokens exceeds max_len {max_len}")]
pub struct TooLong {
    pub len: usize,
    pub max_len: usize,
}

pub fn encode(ps: &PseudoSentence, vocab: &Vocab, max_len: usize) -> Result<EncodedInput, TooLong> {
    let len = ps.len();
    if len > max_len {
        return Err(TooLong { len, max_len });
    }
    let mut ids: Vec<u32> = ps.surface_tokens.iter().map(|t| vocab.id(t)).collect();
    let mut attention_mask = vec![1u8; len];
    let mut segment_ids = ps.segment_tags.clone();
    ids.resize(max_len, PAD_ID);
    attention_mask.resize(max_len, 0);
    segment_ids.resize(max_len, 0);
    Ok(EncodedInput {
        ids,
        attention_mask,
        segment_ids,
        is_index: ps.is_index,
    })
}
