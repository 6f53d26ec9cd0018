//! Document and mention model, JSON exchange format, and label statistics.
//!
//! A corpus file is a single UTF-8 JSON object:
//!
//! ```json
//! {"documents":[{"id":"d1",
//!   "sentences":[{"index":0,"tokens":["Friends","pitched","in","."]}],
//!   "mentions":[{"id":"m1","sentence_index":0,"start":0,"end":1,
//!                "head_index":0,"label":"new"}]}]}
//! ```
//!
//! Spans are token offsets within a sentence, `start` inclusive and `end`
//! exclusive. `label` may be `null` for corpora that are only predicted on.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Number of information-status classes.
pub const N_LABELS: usize = 8;

/// Fine-grained information status of a mention.
///
/// The discriminant order is the canonical class order used for class
/// indices, confusion matrices and argmax tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IsLabel {
    Old,
    WorldKnowledge,
    Syntactic,
    Aggregate,
    Function,
    Comparative,
    Bridging,
    New,
}

impl IsLabel {
    pub const ALL: [IsLabel; N_LABELS] = [
        IsLabel::Old,
        IsLabel::WorldKnowledge,
        IsLabel::Syntactic,
        IsLabel::Aggregate,
        IsLabel::Function,
        IsLabel::Comparative,
        IsLabel::Bridging,
        IsLabel::New,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IsLabel::Old => "old",
            IsLabel::WorldKnowledge => "mediated/worldKnowledge",
            IsLabel::Syntactic => "mediated/syntactic",
            IsLabel::Aggregate => "mediated/aggregate",
            IsLabel::Function => "mediated/function",
            IsLabel::Comparative => "mediated/comparative",
            IsLabel::Bridging => "mediated/bridging",
            IsLabel::New => "new",
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<IsLabel> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for IsLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown information-status label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for IsLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_owned()))
    }
}

impl Serialize for IsLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for IsLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn from_words<S: AsRef<str>>(index: usize, words: &[S]) -> Self {
        Self {
            index,
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, w)| Token {
                    text: w.as_ref().to_owned(),
                    index: i,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub id: String,
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub head_index: usize,
    pub label: Option<IsLabel>,
}

impl Mention {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<Mention>,
}

impl Document {
    /// Surface tokens of a mention's span.
    pub fn mention_tokens(&self, m: &Mention) -> &[Token] {
        &self.sentences[m.sentence_index].tokens[m.start..m.end]
    }

    pub fn mention_head(&self, m: &Mention) -> &str {
        &self.sentences[m.sentence_index].tokens[m.head_index].text
    }

    /// The span's tokens joined by single spaces.
    pub fn mention_text(&self, m: &Mention) -> String {
        join_tokens(self.mention_tokens(m))
    }

    pub fn mention(&self, id: &str) -> Option<&Mention> {
        self.mentions.iter().find(|m| m.id == id)
    }
}

pub(crate) fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.text);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn n_mentions(&self) -> usize {
        self.documents.iter().map(|d| d.mentions.len()).sum()
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Iterates `(document, mention)` pairs in corpus order.
    pub fn mentions(&self) -> impl Iterator<Item = (&Document, &Mention)> {
        self.documents
            .iter()
            .flat_map(|d| d.mentions.iter().map(move |m| (d, m)))
    }

    /// Sub-corpus holding the selected documents, in corpus order.
    pub fn subset(&self, keep: impl Fn(&Document) -> bool) -> Corpus {
        Corpus {
            documents: self.documents.iter().filter(|d| keep(d)).cloned().collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed corpus JSON")]
    Json(#[from] serde_json::Error),
    #[error("document {document}: duplicate document id")]
    DuplicateDocument { document: String },
    #[error("document {document}: sentence at position {position} has index {found}")]
    SentenceIndex {
        document: String,
        position: usize,
        found: usize,
    },
    #[error("document {document}: sentence {sentence} has no tokens")]
    EmptySentence { document: String, sentence: usize },
    #[error("document {document}: sentence {sentence} token {token} is empty or contains whitespace")]
    BadToken {
        document: String,
        sentence: usize,
        token: usize,
    },
    #[error("document {document}, mention {mention}: duplicate mention id")]
    DuplicateMention { document: String, mention: String },
    #[error("document {document}, mention {mention}: sentence {sentence} does not exist")]
    SentenceOutOfRange {
        document: String,
        mention: String,
        sentence: usize,
    },
    #[error("document {document}, mention {mention}: span [{start},{end}) out of bounds for sentence of {len} tokens")]
    SpanOutOfBounds {
        document: String,
        mention: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("document {document}, mention {mention}: head outside span (head {head}, span [{start},{end}))")]
    HeadOutsideSpan {
        document: String,
        mention: String,
        head: usize,
        start: usize,
        end: usize,
    },
    #[error("document {document}, mention {mention}: missing head_index")]
    MissingHead { document: String, mention: String },
    #[error("document {document}, mention {mention}")]
    Label {
        document: String,
        mention: String,
        source: UnknownLabel,
    },
    #[error("document {document}, mention {mention}: mention is unlabeled")]
    Unlabeled { document: String, mention: String },
}

/// Loader switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Use the last span token as head when `head_index` is absent.
    pub head_fallback: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    documents: Vec<DocumentFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentFile {
    id: String,
    sentences: Vec<SentenceFile>,
    mentions: Vec<MentionFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceFile {
    index: usize,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MentionFile {
    id: String,
    sentence_index: usize,
    start: usize,
    end: usize,
    #[serde(default)]
    head_index: Option<usize>,
    #[serde(default)]
    label: Option<String>,
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    load_corpus_with(path, LoadOptions::default())
}

pub fn load_corpus_with(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_corpus(&text, opts)
}

/// Parses and validates corpus JSON.
pub fn parse_corpus(text: &str, opts: LoadOptions) -> Result<Corpus, CorpusError> {
    let file: CorpusFile = serde_json::from_str(text)?;
    let mut seen_docs = HashSet::new();
    let mut documents = Vec::with_capacity(file.documents.len());
    for doc in file.documents {
        if !seen_docs.insert(doc.id.clone()) {
            return Err(CorpusError::DuplicateDocument { document: doc.id });
        }
        documents.push(convert_document(doc, opts)?);
    }
    Ok(Corpus { documents })
}

fn convert_document(doc: DocumentFile, opts: LoadOptions) -> Result<Document, CorpusError> {
    let did = doc.id;
    let mut sentences = Vec::with_capacity(doc.sentences.len());
    for (position, s) in doc.sentences.into_iter().enumerate() {
        if s.index != position {
            return Err(CorpusError::SentenceIndex {
                document: did,
                position,
                found: s.index,
            });
        }
        if s.tokens.is_empty() {
            return Err(CorpusError::EmptySentence {
                document: did,
                sentence: position,
            });
        }
        if let Some(token) = s
            .tokens
            .iter()
            .position(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(CorpusError::BadToken {
                document: did,
                sentence: position,
                token,
            });
        }
        sentences.push(Sentence::from_words(position, &s.tokens));
    }

    let mut seen = HashSet::new();
    let mut mentions = Vec::with_capacity(doc.mentions.len());
    for m in doc.mentions {
        if !seen.insert(m.id.clone()) {
            return Err(CorpusError::DuplicateMention {
                document: did,
                mention: m.id,
            });
        }
        let Some(sentence) = sentences.get(m.sentence_index) else {
            return Err(CorpusError::SentenceOutOfRange {
                document: did,
                mention: m.id,
                sentence: m.sentence_index,
            });
        };
        if m.start >= m.end || m.end > sentence.len() {
            return Err(CorpusError::SpanOutOfBounds {
                document: did,
                mention: m.id,
                start: m.start,
                end: m.end,
                len: sentence.len(),
            });
        }
        let head = match (m.head_index, opts.head_fallback) {
            (Some(h), _) => h,
            (None, true) => m.end - 1,
            (None, false) => {
                return Err(CorpusError::MissingHead {
                    document: did,
                    mention: m.id,
                })
            }
        };
        if head < m.start || head >= m.end {
            return Err(CorpusError::HeadOutsideSpan {
                document: did,
                mention: m.id,
                head,
                start: m.start,
                end: m.end,
            });
        }
        let label = match m.label {
            None => None,
            Some(s) => match s.parse() {
                Ok(l) => Some(l),
                Err(source) => {
                    return Err(CorpusError::Label {
                        document: did,
                        mention: m.id,
                        source,
                    })
                }
            },
        };
        mentions.push(Mention {
            id: m.id,
            sentence_index: m.sentence_index,
            start: m.start,
            end: m.end,
            head_index: head,
            label,
        });
    }
    mentions.sort_by_key(|m| (m.sentence_index, m.start, m.end));

    Ok(Document {
        id: did,
        sentences,
        mentions,
    })
}

fn to_file(corpus: &Corpus) -> CorpusFile {
    CorpusFile {
        documents: corpus
            .documents
            .iter()
            .map(|d| DocumentFile {
                id: d.id.clone(),
                sentences: d
                    .sentences
                    .iter()
                    .map(|s| SentenceFile {
                        index: s.index,
                        tokens: s.tokens.iter().map(|t| t.text.clone()).collect(),
                    })
                    .collect(),
                mentions: d
                    .mentions
                    .iter()
                    .map(|m| MentionFile {
                        id: m.id.clone(),
                        sentence_index: m.sentence_index,
                        start: m.start,
                        end: m.end,
                        head_index: Some(m.head_index),
                        label: m.label.map(|l| l.as_str().to_owned()),
                    })
                    .collect(),
            })
            .collect(),
    }
}

/// Compact JSON serialization (one line, stable field order).
pub fn corpus_to_json(corpus: &Corpus) -> String {
    serde_json::to_string(&to_file(corpus)).expect("corpus serialization cannot fail")
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut text = corpus_to_json(corpus);
    text.push('\n');
    fs::write(path, text)
}

/// Per-label mention counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LabelStats {
    pub counts: [usize; N_LABELS],
    pub total: usize,
}

impl LabelStats {
    pub fn count(&self, label: IsLabel) -> usize {
        self.counts[label.index()]
    }

    /// `count / total`, or 0 for an empty corpus.
    pub fn fraction(&self, label: IsLabel) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(label) as f64 / self.total as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (IsLabel, usize, f64)> + '_ {
        IsLabel::ALL
            .into_iter()
            .map(move |l| (l, self.count(l), self.fraction(l)))
    }
}

impl fmt::Display for LabelStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, count, frac) in self.iter() {
            writeln!(f, "{:<24} {:>7} {:>6.1}%", label.as_str(), count, 100.0 * frac)?;
        }
        write!(f, "{:<24} {:>7}", "total", self.total)
    }
}

pub fn corpus_stats(corpus: &Corpus) -> Result<LabelStats, CorpusError> {
    let mut stats = LabelStats::default();
    for (doc, m) in corpus.mentions() {
        let label = m.label.ok_or_else(|| CorpusError::Unlabeled {
            document: doc.id.clone(),
            mention: m.id.clone(),
        })?;
        stats.counts[label.index()] += 1;
        stats.total += 1;
    }
    Ok(stats)
}
