//! Encoder-decoder model, its objectives and the training stages.

mod build;
mod config;
mod corrupt;
mod retriever;
mod train;
mod transformer;
mod vocab;

pub use build::{build_model_memory, collect_vocab, VocabSources};
pub use config::{ModelConfig, Objective, ObjectiveSet, TrainConfig};
pub use corrupt::{corrupt_for_lm, splice, Corruption};
pub use retriever::Retriever;
pub use train::{
    checkpoint_dir, finetune, predict, predict_all, pretrain_scenarios, pretrain_words, scenario_examples, scenario_terms,
    task_input, task_terms, task_tokens, word_terms, write_loss_csv, CurveRow, LossTerms, ScenarioExample, TaskContext,
    TrainReport, DEFAULT_MAX_DECODE,
};
pub use transformer::{
    CheckpointManifest, Encoded, Generation, MemoryLosses, Model, ModelInput, CHECKPOINT_SCHEMA, MEMORY_PARAM,
};
pub use vocab::{sentinel, Vocab, BOS, EOS, N_SENTINELS, PAD, UNK};
