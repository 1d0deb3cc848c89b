use super::transformer::Model;
use super::vocab::Vocab;
use crate::banks::{insert_mention_tags, Lexicon, MoralityBankSentence, ScenarioBank};
use crate::error::Result;
use crate::memory::{build_memory, LexiconMemory};
use crate::nn::Tensor;
use crate::schema::{Foundation, Morality, TaskInstance};
use crate::tasks::{format_instance, render_output, NONE};
use crate::text::tokenize;

/// Everything a vocabulary is collected from.
#[derive(Debug, Clone, Copy, Default)]
pub struct VocabSources<'a> {
    pub instances: &'a [TaskInstance],
    pub lexicon: Option<&'a Lexicon>,
    pub morality_bank: &'a [MoralityBankSentence],
    pub scenario_banks: &'a [ScenarioBank],
    pub token_budget: usize,
}

/// Word-level vocabulary over task inputs and outputs, lexicon words
/// (wildcards by prefix), bank sentences, scenario texts and labels, and
/// every label name.
pub fn collect_vocab(src: &VocabSources<'_>) -> Result<Vocab> {
    let mut words: Vec<String> = Vec::new();
    for inst in src.instances {
        words.extend(format_instance(inst, src.token_budget)?);
        words.extend(tokenize(&render_output(&inst.gold)));
    }
    if let Some(lex) = src.lexicon {
        for e in lex.entries() {
            words.push(e.word.trim_end_matches('*').to_lowercase());
        }
    }
    for s in src.morality_bank {
        words.extend(s.tokens.iter().cloned());
    }
    for b in src.scenario_banks {
        for p in &b.pairs {
            words.extend(tokenize(&p.scenario));
            words.extend(tokenize(&p.label));
        }
        for l in &b.label_set {
            words.extend(tokenize(l));
        }
    }
    words.extend(Morality::ALL.iter().map(|m| m.name().to_string()));
    words.extend(Foundation::ALL.iter().map(|f| f.name().to_string()));
    for w in [NONE, ";", "|", ":", "agents", "patients", "morality", "scenario", "label"] {
        words.push(w.to_string());
    }
    Ok(Vocab::build(words))
}

/// Memory rows from the model's layer-`L1` mention representations over
/// the bank; words without a bank mention use their static embedding.
pub fn build_model_memory(model: &Model, lexicon: &Lexicon, bank: &[MoralityBankSentence]) -> Result<LexiconMemory> {
    let d = model.config.d_model;
    let mut fallback = Vec::with_capacity(lexicon.len() * d);
    for e in lexicon.entries() {
        fallback.extend(model.static_embedding(e.word.trim_end_matches('*')));
    }
    let fallback = Tensor::matrix(lexicon.len(), d, fallback);
    let plain = model.without_memory()?;
    build_memory(lexicon, bank, &fallback, |s| {
        let (tagged, mentions) = insert_mention_tags(&s.tokens, &s.mentions);
        let input = plain.from_tagged(&tagged, mentions)?;
        let q = plain.mention_queries(&input)?;
        Ok(s.mentions.iter().map(|m| m.entry).zip(q).collect())
    })
}
