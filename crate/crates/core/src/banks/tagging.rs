use serde::{Deserialize, Serialize};

use super::lemma::base_forms;
use super::Lexicon;
use crate::schema::Span;

/// Tag opening a moral mention in model input.
pub const MENTION_OPEN: &str = "<Morality>";
/// Tag closing a moral mention in model input.
pub const MENTION_CLOSE: &str = "</Morality>";

/// An occurrence of a lexicon entry in a token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoralMention {
    pub token_range: Span,
    /// Row index of the matched lexicon entry.
    pub entry: usize,
}

/// Match a single lowercase token against the lexicon.
///
/// Precedence: exact non-wildcard entry, then the first base-form candidate
/// that is a non-wildcard entry, then the longest matching wildcard prefix
/// (ties go to the lower row).
pub fn match_token(token: &str, lexicon: &Lexicon) -> Option<usize> {
    let lower = token.to_lowercase();
    if let Some(row) = lexicon.exact_row(&lower) {
        return Some(row);
    }
    if let Some(row) = base_forms(&lower)
        .iter()
        .find_map(|b| lexicon.exact_row(b))
    {
        return Some(row);
    }
    lexicon
        .wildcard_rows()
        .iter()
        .filter(|(prefix, _)| lower.starts_with(prefix.as_str()))
        .max_by(|a, b| a.0.len().cmp(&b.0.len()).then(b.1.cmp(&a.1)))
        .map(|(_, row)| *row)
}

/// Tag moral mentions left to right. Mentions are single tokens, so the
/// output is sorted and pairwise disjoint.
pub fn tag_mentions<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> Vec<MoralMention> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !crate::text::is_punctuation(t.as_ref()))
        .filter_map(|(i, t)| {
            match_token(t.as_ref(), lexicon).map(|entry| MoralMention {
                token_range: Span::new(i, i + 1),
                entry,
            })
        })
        .collect()
}

/// A mention located in a tagged token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedMention {
    /// Position of the opening tag.
    pub open: usize,
    /// Position of the closing tag.
    pub close: usize,
    pub entry: Option<usize>,
}

/// Wrap each mention in `<Morality> ... </Morality>`. Mentions must be
/// sorted and disjoint.
pub fn insert_mention_tags<S: AsRef<str>>(
    tokens: &[S],
    mentions: &[MoralMention],
) -> (Vec<String>, Vec<TaggedMention>) {
    let mut out = Vec::with_capacity(tokens.len() + 2 * mentions.len());
    let mut tagged = Vec::with_capacity(mentions.len());
    let mut next = 0;
    for (i, t) in tokens.iter().enumerate() {
        if let Some(m) = mentions.get(next) {
            if m.token_range.start == i {
                tagged.push(TaggedMention {
                    open: out.len(),
                    close: 0,
                    entry: Some(m.entry),
                });
                out.push(MENTION_OPEN.to_string());
            }
        }
        out.push(t.as_ref().to_string());
        if let Some(m) = mentions.get(next) {
            if m.token_range.end == i + 1 {
                tagged.last_mut().unwrap().close = out.len();
                out.push(MENTION_CLOSE.to_string());
                next += 1;
            }
        }
    }
    (out, tagged)
}
