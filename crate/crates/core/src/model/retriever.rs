use std::path::Path;

use super::transformer::Model;
use crate::banks::{ScenarioBank, ScenarioPair};
use crate::error::{Error, Result};
use crate::retrieval::{build_index, load_index, retrieve_filtered, save_index, DenseIndex, RetrievalResult};
use crate::text::tokenize;

/// A dense index together with the frozen encoder that produced its keys.
#[derive(Debug, Clone)]
pub struct Retriever {
    pub encoder: Model,
    pub index: DenseIndex,
}

impl Retriever {
    /// Encode every scenario of `bank` with a memory-free copy of `model`.
    pub fn build(model: &Model, bank: &ScenarioBank) -> Result<Self> {
        let encoder = model.without_memory()?;
        let hash = encoder.snapshot_hash();
        let index = build_index(bank, &hash, |s| encoder.pooled(&tokenize(s)))?;
        Ok(Retriever { encoder, index })
    }

    pub fn new(encoder: Model, index: DenseIndex) -> Result<Self> {
        if encoder.snapshot_hash() != index.encoder_hash {
            return Err(Error::Validation("index keys were produced by a different encoder".into()));
        }
        Ok(Retriever { encoder, index })
    }

    pub fn query<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        self.encoder.pooled(tokens)
    }

    pub fn retrieve<S: AsRef<str>>(&self, tokens: &[S], k: usize) -> Result<RetrievalResult> {
        Ok(retrieve_filtered(&self.query(tokens)?, &self.index, k, |_, _| false))
    }

    /// Top-`k` skipping pairs equal to `own`.
    pub fn retrieve_excluding<S: AsRef<str>>(&self, tokens: &[S], k: usize, own: &ScenarioPair) -> Result<RetrievalResult> {
        Ok(retrieve_filtered(&self.query(tokens)?, &self.index, k, |_, p| p == own))
    }

    /// Index files under `dir`, encoder checkpoint under `dir/encoder`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        save_index(dir, &self.index)?;
        self.encoder.save(&dir.join("encoder"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index = load_index(dir)?;
        let encoder = Model::load(&dir.join("encoder"), None)?;
        Retriever::new(encoder, index)
    }
}
