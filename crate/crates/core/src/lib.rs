//! Moral event extraction from news text.
//!
//! The crate covers the full pipeline: the annotated corpus and its task
//! instances, the morality lexicon and knowledge banks, a small dense-tensor
//! engine with reverse-mode gradients, the lexicon memory and scenario
//! retrieval components, an encoder-decoder model with its training stages,
//! evaluation metrics and the corpus analyses.

pub mod analysis;
pub mod banks;
pub mod memory;
pub mod metrics;
pub mod model;
mod error;
pub mod nn;
pub mod retrieval;
pub mod schema;
pub mod tasks;
pub mod text;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/lexicon.md")]
    mod lexicon {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
