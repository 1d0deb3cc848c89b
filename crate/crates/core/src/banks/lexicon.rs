use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Foundation, Morality};
use crate::text::sha256_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    /// Base form as written in the lexicon file, without a trailing `*`.
    pub word: String,
    pub is_prefix_wildcard: bool,
    pub moralities: BTreeSet<Morality>,
    pub row_index: usize,
}

impl LexiconEntry {
    pub fn foundations(&self) -> BTreeSet<Foundation> {
        self.moralities.iter().map(|m| m.foundation()).collect()
    }

    /// Single-token entries are the only ones the tagger can match.
    pub fn is_single_token(&self) -> bool {
        !self.word.contains(char::is_whitespace)
    }
}

/// Morality lexicon with dense row indices `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    exact: HashMap<String, usize>,
    wildcards: Vec<(String, usize)>,
    /// Load-time notices, e.g. multi-token entries that are never tagged.
    pub warnings: Vec<String>,
}

fn key(word: &str, wildcard: bool) -> String {
    let w = word.to_lowercase();
    if wildcard {
        format!("{w}*")
    } else {
        w
    }
}

impl Lexicon {
    /// Build from `(word, moralities)` pairs in file order; a trailing `*`
    /// marks a prefix wildcard. Duplicates merge their morality sets.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, BTreeSet<Morality>)>,
        S: AsRef<str>,
    {
        let mut entries: Vec<LexiconEntry> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (word, moralities) in pairs {
            let raw = word.as_ref().trim();
            let (w, wildcard) = match raw.strip_suffix('*') {
                Some(w) => (w.trim(), true),
                None => (raw, false),
            };
            if w.is_empty() {
                return Err(Error::Validation("lexicon entry with empty word".into()));
            }
            if moralities.is_empty() {
                return Err(Error::Validation(format!("lexicon entry {raw:?} has no morality")));
            }
            let k = key(w, wildcard);
            match index.get(&k) {
                Some(&i) => entries[i].moralities.extend(moralities),
                None => {
                    index.insert(k, entries.len());
                    entries.push(LexiconEntry {
                        word: w.to_string(),
                        is_prefix_wildcard: wildcard,
                        moralities,
                        row_index: entries.len(),
                    });
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::Validation("empty lexicon".into()));
        }
        let mut exact = HashMap::new();
        let mut wildcards = Vec::new();
        let mut warnings = Vec::new();
        for e in &entries {
            if !e.is_single_token() {
                warnings.push(format!(
                    "multi-token entry {:?} is kept in memory but never tagged",
                    e.word
                ));
                continue;
            }
            if e.is_prefix_wildcard {
                wildcards.push((e.word.to_lowercase(), e.row_index));
            } else {
                exact.insert(e.word.to_lowercase(), e.row_index);
            }
        }
        Ok(Lexicon {
            entries,
            exact,
            wildcards,
            warnings,
        })
    }

    /// Parse the TSV format `word<TAB>morality[,morality...]` with `#` comments.
    pub fn parse(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let origin = origin.as_ref();
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (word, labels) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected word<TAB>moralities"))?;
            let mut set = BTreeSet::new();
            for l in labels.split(',').filter(|l| !l.trim().is_empty()) {
                let m: Morality = l
                    .parse()
                    .map_err(|e: String| Error::parse(origin, i + 1, e))?;
                set.insert(m);
            }
            if set.is_empty() {
                return Err(Error::parse(origin, i + 1, "no morality labels"));
            }
            pairs.push((word.to_string(), set));
        }
        Lexicon::from_pairs(pairs)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, row: usize) -> &LexiconEntry {
        &self.entries[row]
    }

    /// Entry whose word (optionally with trailing `*`) equals `word`, ignoring case.
    pub fn lookup_word(&self, word: &str) -> Option<&LexiconEntry> {
        let w = word.trim();
        let (w, wildcard) = match w.strip_suffix('*') {
            Some(w) => (w, true),
            None => (w, false),
        };
        let lw = w.to_lowercase();
        let same_word = |e: &&LexiconEntry| e.word.to_lowercase() == lw;
        self.entries
            .iter()
            .filter(same_word)
            .find(|e| e.is_prefix_wildcard == wildcard)
            .or_else(|| {
                if wildcard {
                    None
                } else {
                    self.entries.iter().find(same_word)
                }
            })
    }

    pub(crate) fn exact_row(&self, lower: &str) -> Option<usize> {
        self.exact.get(lower).copied()
    }

    pub(crate) fn wildcard_rows(&self) -> &[(String, usize)] {
        &self.wildcards
    }

    /// Row indices carrying each morality, indexed by [`Morality::index`].
    pub fn morality_index(&self) -> [BTreeSet<usize>; 10] {
        let mut out: [BTreeSet<usize>; 10] = Default::default();
        for e in &self.entries {
            for m in &e.moralities {
                out[m.index()].insert(e.row_index);
            }
        }
        out
    }

    /// Content hash over words, wildcard flags and moralities in row order.
    pub fn content_hash(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&key(&e.word, e.is_prefix_wildcard));
            s.push('\t');
            let ms: Vec<&str> = e.moralities.iter().map(|m| m.name()).collect();
            s.push_str(&ms.join(","));
            s.push('\n');
        }
        sha256_hex(s.as_bytes())
    }
}

/// Load a lexicon TSV file.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::parse(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_merge_moralities() {
        let lex = Lexicon::parse("exploit\tHarm\nkind\tcare\nexploit\tcheating\n", "t").unwrap();
        assert_eq!(lex.len(), 2);
        let e = lex.lookup_word("Exploit").unwrap();
        assert_eq!(e.row_index, 0);
        assert_eq!(
            e.moralities,
            [Morality::Harm, Morality::Cheating].into_iter().collect()
        );
    }

    #[test]
    fn empty_lexicon_is_an_error() {
        let err = Lexicon::parse("# only a comment\n\n", "t").unwrap_err();
        assert!(err.to_string().contains("empty lexicon"));
    }

    #[test]
    fn unknown_label_names_line() {
        let err = Lexicon::parse("kind\tcare\nmean\tnastiness\n", "lex.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rows_are_dense_and_index_covers_all() {
        let lex = Lexicon::parse("a\tcare\nb*\tharm,care\nc d\tfairness\n", "t").unwrap();
        let rows: Vec<usize> = lex.entries().iter().map(|e| e.row_index).collect();
        assert_eq!(rows, vec![0, 1, 2]);
        let idx = lex.morality_index();
        let covered: BTreeSet<usize> = idx.iter().flatten().copied().collect();
        assert_eq!(covered.len(), 3);
        assert_eq!(lex.warnings.len(), 1);
        assert!(lex.entry(1).is_prefix_wildcard);
    }
}
