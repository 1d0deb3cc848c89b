//! Base-form candidates for inflected words.

use std::collections::HashMap;
use std::sync::OnceLock;

const IRREGULAR: &str = include_str!("irregular_forms.tsv");

fn irregular() -> &'static HashMap<String, String> {
    static TABLE: OnceLock<HashMap<String, String>> = OnceLock::new();
    TABLE.get_or_init(|| {
        IRREGULAR
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .filter_map(|l| l.split_once('\t'))
            .map(|(f, b)| (f.trim().to_lowercase(), b.trim().to_lowercase()))
            .collect()
    })
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Candidate base forms of `word` (already lowercased), most specific first.
///
/// Irregular table hits come first, then suffix stripping for plural `-s`/`-es`/`-ies`
/// and verbal `-ing`/`-ed`/`-ied`, each followed by doubled-consonant undoing and
/// silent-`e` restoration. The word itself is not included.
pub fn base_forms(word: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |s: String| {
        if !s.is_empty() && s != word && !out.contains(&s) {
            out.push(s);
        }
    };
    if let Some(b) = irregular().get(word) {
        push(b.clone());
    }
    if let Some(stem) = word.strip_suffix("ies") {
        push(format!("{stem}y"));
    }
    if let Some(stem) = word.strip_suffix("ied") {
        push(format!("{stem}y"));
    }
    for suffix in ["ing", "ed"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem.chars().count() < 2 {
                continue;
            }
            push(stem.to_string());
            let cs: Vec<char> = stem.chars().collect();
            let n = cs.len();
            if n >= 2 && cs[n - 1] == cs[n - 2] && !is_vowel(cs[n - 1]) {
                push(cs[..n - 1].iter().collect());
            }
            push(format!("{stem}e"));
        }
    }
    if let Some(stem) = word.strip_suffix("es") {
        push(stem.to_string());
    }
    if let Some(stem) = word.strip_suffix('s') {
        if !stem.ends_with('s') {
            push(stem.to_string());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verbal_inflections() {
        assert!(base_forms("threatening").contains(&"threaten".to_string()));
        assert!(base_forms("threatened").contains(&"threaten".to_string()));
        assert!(base_forms("abused").contains(&"abuse".to_string()));
        assert!(base_forms("abusing").contains(&"abuse".to_string()));
        assert!(base_forms("robbed").contains(&"rob".to_string()));
        assert!(base_forms("bullied").contains(&"bully".to_string()));
    }

    #[test]
    fn plurals_and_irregulars() {
        assert_eq!(base_forms("fought"), vec!["fight".to_string()]);
        assert!(base_forms("bullies").contains(&"bully".to_string()));
        assert!(base_forms("crimes").contains(&"crime".to_string()));
        assert!(base_forms("kindness").is_empty());
    }
}
