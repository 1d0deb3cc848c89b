//! Word tokenization shared by the corpus, the knowledge banks and the model.
//!
//! Text is split on whitespace; opening brackets/quotes are peeled off the
//! front of each chunk and closing punctuation off the back, each becoming its
//! own token. `#` and `|` always split. Internal hyphens, apostrophes and
//! slashes stay inside the word, so `Same-Sex`, `don't` and `Care/Harm` are
//! single tokens. Angle-bracket markers such as `<Title>` are never split.
//!
//! The rule is idempotent: tokenizing the space-joined output of
//! [`tokenize`] yields the same tokens again.

use sha2::{Digest, Sha256};

const LEADING: &[char] = &['"', '(', '[', '{', '\u{201c}'];
const TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', '"', ')', ']', '}', '\u{201d}'];
const ALWAYS_SPLIT: &[char] = &['#', '|'];

/// A token with its byte offsets in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Tokenize `text`, keeping byte offsets into the original string.
pub fn tokenize_with_offsets(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chunk_start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                split_chunk(text, s, i, &mut out);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        split_chunk(text, s, text.len(), &mut out);
    }
    out
}

/// Tokenize `text` into owned token strings.
pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_with_offsets(text).into_iter().map(|t| t.text).collect()
}

/// Join tokens with single spaces.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(t.as_ref());
    }
    s
}

fn split_chunk(text: &str, start: usize, end: usize, out: &mut Vec<Token>) {
    // Always-split characters cut the chunk into pieces first.
    let mut piece_start = start;
    for (off, ch) in text[start..end].char_indices() {
        if ALWAYS_SPLIT.contains(&ch) {
            let at = start + off;
            if piece_start < at {
                peel(text, piece_start, at, out);
            }
            out.push(Token {
                text: ch.to_string(),
                start: at,
                end: at + ch.len_utf8(),
            });
            piece_start = at + ch.len_utf8();
        }
    }
    if piece_start < end {
        peel(text, piece_start, end, out);
    }
}

fn is_marker(s: &str) -> bool {
    s.len() > 2
        && s.starts_with('<')
        && s.ends_with('>')
        && s[1..s.len() - 1]
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '/' || c == '_')
}

fn peel(text: &str, mut start: usize, mut end: usize, out: &mut Vec<Token>) {
    if is_marker(&text[start..end]) {
        out.push(Token {
            text: text[start..end].to_string(),
            start,
            end,
        });
        return;
    }
    let mut tail = Vec::new();
    while start < end {
        let c = text[start..end].chars().next().unwrap();
        if !LEADING.contains(&c) {
            break;
        }
        out.push(Token {
            text: c.to_string(),
            start,
            end: start + c.len_utf8(),
        });
        start += c.len_utf8();
    }
    while start < end {
        let c = text[start..end].chars().next_back().unwrap();
        if !TRAILING.contains(&c) {
            break;
        }
        let w = c.len_utf8();
        tail.push(Token {
            text: c.to_string(),
            start: end - w,
            end,
        });
        end -= w;
    }
    if start < end {
        out.push(Token {
            text: text[start..end].to_string(),
            start,
            end,
        });
    }
    out.extend(tail.into_iter().rev());
}

/// True when every character of `token` is punctuation or a symbol.
pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric())
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Platform-stable 64-bit hash of `seed` and `key`.
pub fn stable_hash(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}
