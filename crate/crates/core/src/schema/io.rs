use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_article, Article};
use crate::error::{Error, Result};

/// Schema tag carried by every corpus record.
pub const CORPUS_SCHEMA: &str = "moralevents/v1";

#[derive(Serialize)]
struct RecordRef<'a> {
    schema: &'a str,
    #[serde(flatten)]
    article: &'a Article,
}

#[derive(Deserialize)]
struct Record {
    schema: String,
    #[serde(flatten)]
    article: Article,
}

/// Load a JSON-Lines corpus file. Blank lines are skipped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Article>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path)
}

/// Parse corpus text; `origin` only labels error messages.
pub fn parse_corpus(text: &str, origin: impl AsRef<Path>) -> Result<Vec<Article>> {
    let origin = origin.as_ref();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        if rec.schema != CORPUS_SCHEMA {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("schema {:?}, expected {CORPUS_SCHEMA:?}", rec.schema),
            ));
        }
        validate_article(&rec.article)?;
        out.push(rec.article);
    }
    Ok(out)
}

/// Write articles as JSON-Lines, one record per line.
pub fn write_corpus(path: impl AsRef<Path>, articles: &[Article]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for a in articles {
        serde_json::to_writer(
            &mut buf,
            &RecordRef {
                schema: CORPUS_SCHEMA,
                article: a,
            },
        )?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
