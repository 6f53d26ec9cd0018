//! Shared oracles and fixtures for the integration tests.

#![allow(dead_code)]

use infostat::context::{
    ContextKind, ContextMode, PseudoSentence, DELIM, HEAD_MATCH, HEAD_NO_MATCH, IS, STR_MATCH, STR_NO_MATCH,
};
use infostat::corpus::{Document, Mention};
use infostat::encoder::ModelConfig;

/// Overlap flags recomputed by a direct scan with ASCII lowercasing.
pub fn overlap_oracle(doc: &Document, m: &Mention) -> (bool, bool) {
    let text = |x: &Mention| {
        doc.sentences[x.sentence_index].tokens[x.start..x.end]
            .iter()
            .map(|t| t.text.to_lowercase())
            .collect::<Vec<_>>()
    };
    let head = |x: &Mention| doc.sentences[x.sentence_index].tokens[x.head_index].text.to_lowercase();
    let earlier: Vec<&Mention> = doc.mentions.iter().filter(|o| o.sentence_index < m.sentence_index).collect();
    (
        earlier.iter().any(|o| text(o) == text(m)),
        earlier.iter().any(|o| head(o) == head(m)),
    )
}

/// Checks every structural property of a pseudo sentence against the
/// mention and document it was built from.
pub fn check_pseudo_sentence(
    doc: &Document,
    m: &Mention,
    mode: ContextMode,
    max_len: usize,
    ps: &PseudoSentence,
) -> Result<(), String> {
    let toks = &ps.surface_tokens;
    let n = toks.len();
    let fail = |what: &str| Err(format!("{} in {:?} ({}): {what}: {toks:?}", m.id, mode.kind, max_len));
    if n > max_len {
        return fail("longer than max_len");
    }
    if ps.segment_tags.len() != n {
        return fail("segment tags differ in length");
    }
    if n == 0 || toks[n - 1] != IS || ps.is_index != n - 1 {
        return fail("[IS] is not the final token");
    }
    if toks[..n - 1].iter().any(|t| t == IS) {
        return fail("[IS] appears twice");
    }

    let mut cursor = 0;
    if mode.kind.has_overlap() {
        if n < 2 {
            return fail("missing overlap tokens");
        }
        let (same_string, same_head) = overlap_oracle(doc, m);
        let want = [
            if same_string { STR_MATCH } else { STR_NO_MATCH },
            if same_head { HEAD_MATCH } else { HEAD_NO_MATCH },
        ];
        if toks[0] != want[0] || toks[1] != want[1] {
            return fail("overlap tokens disagree with the oracle");
        }
        cursor = 2;
    } else if toks.iter().any(|t| [STR_MATCH, STR_NO_MATCH, HEAD_MATCH, HEAD_NO_MATCH].contains(&t.as_str())) {
        return fail("overlap token outside context2");
    }

    let delims: Vec<usize> = toks.iter().enumerate().filter(|(_, t)| *t == DELIM).map(|(i, _)| i).collect();
    let mention_start = if mode.kind.has_context() {
        let [d] = delims[..] else {
            return fail("expected exactly one delimiter");
        };
        if ps.delimiter_index != Some(d) {
            return fail("delimiter_index is wrong");
        }
        let first = m.sentence_index.saturating_sub(mode.prev_sentence_window);
        let context: Vec<&str> = doc.sentences[first..=m.sentence_index].iter().flat_map(|s| s.words()).collect();
        let kept = &toks[cursor..d];
        if kept.len() + ps.context_dropped != context.len() {
            return fail("context length does not add up");
        }
        if kept.iter().map(String::as_str).ne(context[ps.context_dropped..].iter().copied()) {
            return fail("context is not a suffix of the window");
        }
        if ps.context_dropped > 0 && n != max_len {
            return fail("context dropped although the budget was not full");
        }
        d + 1
    } else {
        if !delims.is_empty() || ps.delimiter_index.is_some() {
            return fail("delimiter outside context modes");
        }
        if ps.context_dropped != 0 {
            return fail("context_dropped set without context");
        }
        cursor
    };

    let want_segments: Vec<u8> = if mode.kind.has_context() {
        (0..n).map(|i| u8::from(i + 1 >= mention_start)).collect()
    } else {
        vec![1; n]
    };
    if ps.segment_tags != want_segments {
        return fail("segment tags do not split at the delimiter");
    }

    let span: Vec<&str> = doc.mention_tokens(m).iter().map(|t| t.text.as_str()).collect();
    let kept = &toks[mention_start..n - 1];
    if kept.is_empty() {
        return fail("no mention token kept");
    }
    if ps.truncated {
        if kept.len() >= span.len() || kept.iter().map(String::as_str).ne(span[..kept.len()].iter().copied()) {
            return fail("truncated mention is not a proper prefix");
        }
        if n != max_len {
            return fail("mention truncated although the budget was not full");
        }
    } else if kept.iter().map(String::as_str).ne(span.iter().copied()) {
        return fail("mention tokens lost without the truncated flag");
    }
    Ok(())
}

pub fn tiny_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        max_len: 16,
        vocab_size,
        n_classes: 8,
        dropout_rate: 0.0,
    }
}

pub const ALL_KINDS: [ContextKind; 3] = ContextKind::ALL;
