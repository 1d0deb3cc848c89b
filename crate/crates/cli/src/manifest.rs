//! Run manifests, input hashing and output headers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use moral_events::text::sha256_hex;
use moral_events::{Error, Result};

pub const RUN_SCHEMA: &str = "moralevents-run/v1";
pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Content hash of a file, or of every file below a directory (sorted by
/// relative path, run manifests excluded).
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect_files(path, path, &mut files)?;
        files.sort();
        let mut joined = String::new();
        for rel in files {
            let h = hash_path(&path.join(&rel))?;
            joined.push_str(&format!("{}\t{h}\n", rel.display()));
        }
        Ok(sha256_hex(joined.as_bytes()))
    } else {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            out.push(p.strip_prefix(root).expect("below root").to_path_buf());
        }
    }
    Ok(())
}

/// Everything a run records about itself.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    /// Hash of `config`.
    pub config_hash: String,
    /// Path-free settings that determine the outputs.
    pub config: Value,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: Value) -> Self {
        let config_hash = sha256_hex(serde_json::to_string(&config).expect("json value").as_bytes());
        Manifest {
            schema: RUN_SCHEMA,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            config_hash,
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::Validation(format!("input {} does not exist", path.display())));
        }
        self.inputs.insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Header naming the output schema, config hash and seed.
    pub fn header(&self, output_schema: &str) -> Value {
        serde_json::json!({
            "schema": output_schema,
            "config_hash": self.config_hash,
            "seed": self.seed,
        })
    }

    /// `# schema: ...; config_hash: ...; seed: ...` line for CSV outputs.
    pub fn csv_comment(&self, output_schema: &str) -> String {
        format!("# schema: {output_schema}; config_hash: {}; seed: {}\n", self.config_hash, self.seed)
    }

    /// Write the manifest into `dir`, or next to `file` as
    /// `<file>.manifest.json`.
    pub fn write(&self, target: &Path) -> Result<PathBuf> {
        let path = if target.is_dir() {
            target.join(MANIFEST_FILE)
        } else {
            let mut name = target.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            target.with_file_name(name)
        };
        write_text(&path, &(serde_json::to_string_pretty(self)? + "\n"))?;
        Ok(path)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Header line followed by one JSON record per line.
pub fn write_jsonl<T: Serialize>(path: &Path, header: &Value, records: &[T]) -> Result<()> {
    let mut s = serde_json::to_string(header)? + "\n";
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    write_text(path, &s)
}

/// Prepend a comment line to a CSV file.
pub fn prepend_comment(path: &Path, comment: &str) -> Result<()> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    write_text(path, &format!("{comment}{body}"))
}

/// Records of a JSON-Lines file written by [`write_jsonl`]; the header
/// line is recognised by its `schema` key and skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            let v: Value = serde_json::from_str(line)?;
            if v.get("schema").is_some() && v.get("config_hash").is_some() {
                continue;
            }
        }
        out.push(
            serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?,
        );
    }
    Ok(out)
}
