use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::banks::{MENTION_CLOSE, MENTION_OPEN};
use crate::retrieval::{MASK, SEPARATOR};
use crate::tasks::{
    EVENT_CLOSE, EVENT_OPEN, NEWS_CLOSE, NEWS_OPEN, TARGET_CLOSE, TARGET_OPEN, TITLE_CLOSE,
    TITLE_OPEN,
};
use crate::text::sha256_hex;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
/// Decoder start token.
pub const BOS: &str = "<s>";
/// End of output; also separates retrieved blocks in the input.
pub const EOS: &str = SEPARATOR;
/// Number of `<extra_id_k>` span-corruption sentinels.
pub const N_SENTINELS: usize = 32;

pub fn sentinel(k: usize) -> String {
    format!("<extra_id_{k}>")
}

/// Closed word-level vocabulary. Special tokens come first, then words in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn specials() -> Vec<String> {
        let mut s: Vec<String> = [
            PAD,
            UNK,
            BOS,
            EOS,
            MASK,
            MENTION_OPEN,
            MENTION_CLOSE,
            TITLE_OPEN,
            TITLE_CLOSE,
            NEWS_OPEN,
            NEWS_CLOSE,
            TARGET_OPEN,
            TARGET_CLOSE,
            EVENT_OPEN,
            EVENT_CLOSE,
        ]
        .iter()
        .map(|t| t.to_string())
        .collect();
        s.extend((0..N_SENTINELS).map(sentinel));
        s
    }

    /// Vocabulary over the given word tokens plus the special tokens.
    pub fn build<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let specials = Self::specials();
        let special_set: BTreeSet<&str> = specials.iter().map(|s| s.as_str()).collect();
        let words: BTreeSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_string())
            .filter(|w| !w.is_empty() && !special_set.contains(w.as_str()))
            .collect();
        Self::from_tokens(specials.into_iter().chain(words).collect())
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    /// Rebuild the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or_else(|| self.index[UNK])
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn content_hash(&self) -> String {
        sha256_hex(self.tokens.join("\n").as_bytes())
    }
}
