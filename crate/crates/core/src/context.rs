//! Overlap features and pseudo-sentence construction.
//!
//! A pseudo sentence is the token sequence the encoder sees for one mention:
//!
//! ```text
//! [STR±] [HEAD±] | <previous k sentences> <local sentence> | [DELIM] <mention> [IS]
//!  overlap part    |  context part                          |  segment 1
//! ```
//!
//! The overlap part only exists in [`ContextKind::LocalContextOverlap`]; the
//! context part and `[DELIM]` only in the two context-bearing kinds. The
//! classifier reads the hidden state at the final `[IS]` token.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{join_tokens, Document, Mention, Token};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const IS: &str = "[IS]";
pub const DELIM: &str = "[DELIM]";
pub const STR_MATCH: &str = "[STR+]";
pub const STR_NO_MATCH: &str = "[STR-]";
pub const HEAD_MATCH: &str = "[HEAD+]";
pub const HEAD_NO_MATCH: &str = "[HEAD-]";

/// Reserved tokens in id order.
pub const RESERVED: [&str; 8] = [
    PAD,
    UNK,
    IS,
    DELIM,
    STR_MATCH,
    STR_NO_MATCH,
    HEAD_MATCH,
    HEAD_NO_MATCH,
];

/// Case-folds a surface string for comparison and vocabulary lookup.
pub fn normalize(s: &str) -> String {
    caseless::default_case_fold_str(s)
}

fn normalized_join(tokens: &[Token]) -> String {
    normalize(&join_tokens(tokens))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlapInfo {
    pub same_string: bool,
    pub same_head: bool,
}

/// Whether the mention's string or head matches some mention in a strictly
/// earlier sentence of the same document.
pub fn compute_overlap(mention: &Mention, document: &Document) -> OverlapInfo {
    let text = normalized_join(document.mention_tokens(mention));
    let head = normalize(document.mention_head(mention));
    let mut info = OverlapInfo::default();
    for other in document
        .mentions
        .iter()
        .filter(|o| o.sentence_index < mention.sentence_index)
    {
        if !info.same_string && normalized_join(document.mention_tokens(other)) == text {
            info.same_string = true;
        }
        if !info.same_head && normalize(document.mention_head(other)) == head {
            info.same_head = true;
        }
        if info.same_string && info.same_head {
            break;
        }
    }
    info
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    /// Mention tokens and `[IS]` only.
    MentionOnly,
    /// Adds the local sentence and the delimiter.
    LocalContext,
    /// Adds the two overlap tokens in front of the local context.
    LocalContextOverlap,
}

impl ContextKind {
    pub const ALL: [ContextKind; 3] = [
        ContextKind::MentionOnly,
        ContextKind::LocalContext,
        ContextKind::LocalContextOverlap,
    ];

    /// Command-line name.
    pub fn flag_name(self) -> &'static str {
        match self {
            ContextKind::MentionOnly => "mention-only",
            ContextKind::LocalContext => "context1",
            ContextKind::LocalContextOverlap => "context2",
        }
    }

    pub fn has_context(self) -> bool {
        !matches!(self, ContextKind::MentionOnly)
    }

    pub fn has_overlap(self) -> bool {
        matches!(self, ContextKind::LocalContextOverlap)
    }

    /// Reserved tokens this kind always emits (overlap, delimiter, `[IS]`).
    pub fn n_reserved(self) -> usize {
        match self {
            ContextKind::MentionOnly => 1,
            ContextKind::LocalContext => 2,
            ContextKind::LocalContextOverlap => 4,
        }
    }
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag_name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown context mode {0:?} (expected mention-only, context1 or context2)")]
pub struct UnknownMode(pub String);

impl FromStr for ContextKind {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mention-only" | "mention_only" => Ok(ContextKind::MentionOnly),
            "context1" | "local_context" => Ok(ContextKind::LocalContext),
            "context2" | "local_context_overlap" => Ok(ContextKind::LocalContextOverlap),
            other => Err(UnknownMode(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextMode {
    pub kind: ContextKind,
    /// Extra preceding sentences placed before the local sentence. Ignored by
    /// [`ContextKind::MentionOnly`].
    pub prev_sentence_window: usize,
}

impl ContextMode {
    pub fn new(kind: ContextKind) -> Self {
        Self {
            kind,
            prev_sentence_window: 0,
        }
    }

    pub fn with_window(kind: ContextKind, prev_sentence_window: usize) -> Self {
        Self {
            kind,
            prev_sentence_window,
        }
    }
}

impl From<ContextKind> for ContextMode {
    fn from(kind: ContextKind) -> Self {
        Self::new(kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoSentence {
    pub surface_tokens: Vec<String>,
    /// 0 for overlap and context tokens, 1 for delimiter, mention and `[IS]`.
    pub segment_tags: Vec<u8>,
    pub is_index: usize,
    pub delimiter_index: Option<usize>,
    /// Set when mention tokens had to be dropped to fit the budget.
    pub truncated: bool,
    /// Context tokens dropped from the front to fit the budget.
    pub context_dropped: usize,
}

impl PseudoSentence {
    pub fn len(&self) -> usize {
        self.surface_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surface_tokens.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("max_len {max_len} cannot hold the {reserved} reserved tokens of mode {kind} plus one mention token")]
pub struct BudgetTooSmall {
    pub max_len: usize,
    pub reserved: usize,
    pub kind: ContextKind,
}

/// Assembles the pseudo sentence for `mention`.
///
/// When the sequence exceeds `max_len`, context tokens are dropped from the
/// front. Overlap tokens, the delimiter, the mention and `[IS]` are kept; if
/// even those do not fit, mention tokens are cut from the end and
/// `truncated` is set.
pub fn build_pseudo_sentence(
    mention: &Mention,
    document: &Document,
    mode: ContextMode,
    max_len: usize,
) -> Result<PseudoSentence, BudgetTooSmall> {
    let kind = mode.kind;
    let reserved = kind.n_reserved();
    if max_len < reserved + 1 {
        return Err(BudgetTooSmall {
            max_len,
            reserved,
            kind,
        });
    }

    let mention_tokens = document.mention_tokens(mention);
    let mut keep_mention = mention_tokens.len();
    let truncated = reserved + keep_mention > max_len;
    if truncated {
        keep_mention = max_len - reserved;
    }

    let mut tokens: Vec<String> = Vec::with_capacity(max_len.min(256));
    let mut segments: Vec<u8> = Vec::with_capacity(max_len.min(256));
    let mut context_dropped = 0;

    if kind.has_overlap() {
        let overlap = compute_overlap(mention, document);
        tokens.push(if overlap.same_string { STR_MATCH } else { STR_NO_MATCH }.to_owned());
        tokens.push(if overlap.same_head { HEAD_MATCH } else { HEAD_NO_MATCH }.to_owned());
        segments.extend([0, 0]);
    }

    let mut delimiter_index = None;
    if kind.has_context() {
        let first = mention.sentence_index.saturating_sub(mode.prev_sentence_window);
        let context: Vec<&str> = document.sentences[first..=mention.sentence_index]
            .iter()
            .flat_map(|s| s.words())
            .collect();
        let budget = max_len - reserved - keep_mention;
        context_dropped = context.len().saturating_sub(budget);
        for w in &context[context_dropped..] {
            tokens.push((*w).to_owned());
            segments.push(0);
        }
        delimiter_index = Some(tokens.len());
        tokens.push(DELIM.to_owned());
        segments.push(1);
    }

    for t in &mention_tokens[..keep_mention] {
        tokens.push(t.text.clone());
        segments.push(1);
    }
    let is_index = tokens.len();
    tokens.push(IS.to_owned());
    segments.push(1);

    debug_assert!(tokens.len() <= max_len);
    Ok(PseudoSentence {
        surface_tokens: tokens,
        segment_tags: segments,
        is_index,
        delimiter_index,
        truncated,
        context_dropped,
    })
}

/// One line of the pseudo-sentence debug dump.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PseudoSentenceRecord {
    pub mention_id: String,
    pub tokens: Vec<String>,
    pub segments: Vec<u8>,
    pub is_index: usize,
    pub truncated: bool,
}

impl PseudoSentenceRecord {
    pub fn new(mention_id: &str, ps: &PseudoSentence) -> Self {
        Self {
            mention_id: mention_id.to_owned(),
            tokens: ps.surface_tokens.clone(),
            segments: ps.segment_tags.clone(),
            is_index: ps.is_index,
            truncated: ps.truncated,
        }
    }
}
