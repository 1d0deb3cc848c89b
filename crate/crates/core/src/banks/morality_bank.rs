use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use super::{Lexicon, MoralMention};
use crate::error::{Error, Result};
use crate::schema::{Morality, Span};
use crate::text::stable_hash;

pub const MIN_TOKENS: usize = 5;
pub const MAX_TOKENS: usize = 80;

/// A dictionary example sentence scraped for one seed moral word.
#[derive(Debug, Clone, PartialEq)]
pub struct MoralityBankSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub mentions: Vec<MoralMention>,
    /// Moralities of the seed mention's lexicon entry.
    pub sentence_moralities: BTreeSet<Morality>,
    pub seed_mention: usize,
}

impl MoralityBankSentence {
    pub fn seed(&self) -> &MoralMention {
        &self.mentions[self.seed_mention]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankLoadReport {
    pub accepted: usize,
    /// Sentences outside the 5..=80 token bound.
    pub rejected_length: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MoralityBankSplit {
    pub train: Vec<MoralityBankSentence>,
    pub validation: Vec<MoralityBankSentence>,
    pub report: BankLoadReport,
}

#[derive(Deserialize)]
struct RawMention {
    start: usize,
    end: usize,
    entry_word: String,
}

#[derive(Deserialize)]
struct RawSentence {
    id: String,
    tokens: Vec<String>,
    mentions: Vec<RawMention>,
    seed_mention: usize,
}

/// Load a Morality Bank JSON-Lines file and split it 95/5 by a seeded hash
/// of the sentence id.
pub fn load_morality_bank(
    path: impl AsRef<Path>,
    lexicon: &Lexicon,
    seed: u64,
) -> Result<MoralityBankSplit> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_morality_bank(&text, path, lexicon, seed)
}

pub fn parse_morality_bank(
    text: &str,
    origin: impl AsRef<Path>,
    lexicon: &Lexicon,
    seed: u64,
) -> Result<MoralityBankSplit> {
    let origin = origin.as_ref();
    let mut report = BankLoadReport::default();
    let mut kept = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::parse(origin, i + 1, msg);
        let raw: RawSentence = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if raw.tokens.len() < MIN_TOKENS || raw.tokens.len() > MAX_TOKENS {
            report.rejected_length += 1;
            continue;
        }
        let mut mentions = Vec::with_capacity(raw.mentions.len());
        let mut last_end = 0;
        for m in &raw.mentions {
            if m.start >= m.end || m.end > raw.tokens.len() || m.start < last_end {
                return Err(err(format!(
                    "sentence {}: mention [{}, {}) is out of range or overlaps",
                    raw.id, m.start, m.end
                )));
            }
            last_end = m.end;
            let entry = lexicon.lookup_word(&m.entry_word).ok_or_else(|| {
                err(format!(
                    "sentence {}: entry word {:?} not in lexicon",
                    raw.id, m.entry_word
                ))
            })?;
            mentions.push(MoralMention {
                token_range: Span::new(m.start, m.end),
                entry: entry.row_index,
            });
        }
        let Some(seed_mention) = mentions.get(raw.seed_mention) else {
            return Err(err(format!(
                "sentence {}: seed mention {} missing ({} mentions)",
                raw.id,
                raw.seed_mention,
                mentions.len()
            )));
        };
        let sentence_moralities = lexicon.entry(seed_mention.entry).moralities.clone();
        kept.push(MoralityBankSentence {
            id: raw.id,
            tokens: raw.tokens,
            mentions,
            sentence_moralities,
            seed_mention: raw.seed_mention,
        });
    }
    report.accepted = kept.len();

    let mut order: Vec<(u64, usize)> = kept
        .iter()
        .enumerate()
        .map(|(i, s)| (stable_hash(seed, &s.id), i))
        .collect();
    order.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| kept[a.1].id.cmp(&kept[b.1].id)));
    let n_train = (kept.len() * 95 + 50) / 100;
    let mut is_train = vec![false; kept.len()];
    for &(_, i) in &order[..n_train] {
        is_train[i] = true;
    }
    let mut split = MoralityBankSplit {
        report,
        ..Default::default()
    };
    for (s, train) in kept.into_iter().zip(is_train) {
        if train {
            split.train.push(s);
        } else {
            split.validation.push(s);
        }
    }
    Ok(split)
}
