use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Objective, TrainConfig};
use super::corrupt::corrupt_for_lm;
use super::transformer::{Model, ModelInput};
use super::vocab::BOS;
use crate::banks::{insert_mention_tags, tag_mentions, Lexicon, MoralityBankSentence, ScenarioPair};
use crate::error::{Error, Result};
use crate::nn::{Adam, Gradients, Graph, NodeId};
use crate::retrieval::{augment_input, mask_retrieved_label, MASK};
use crate::schema::TaskInstance;
use crate::tasks::{format_instance, linearize_labels, render_output, Prediction};
use crate::text::{detokenize, tokenize};

use super::retriever::Retriever;

/// Loss values of one training step, averaged over the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    /// Weighted sum of the terms.
    pub total: f64,
    /// Unweighted term values.
    pub terms: BTreeMap<Objective, f64>,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// Summary of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub curve: Vec<CurveRow>,
    /// Mentions without a memory row, summed over all processed examples.
    pub skipped_mentions: usize,
    /// Steps on which the frozen memory was checked to receive no gradient.
    pub memory_grad_checks: usize,
}

/// Unweighted loss nodes built for one example.
#[derive(Debug, Clone, Default)]
pub struct LossTerms {
    pub items: Vec<(Objective, NodeId)>,
    /// Mentions without a memory row.
    pub skipped: usize,
}

impl LossTerms {
    /// Weighted sum of the terms, or `None` when there are none.
    pub fn total(&self, g: &mut Graph<'_>, cfg: &TrainConfig) -> Option<NodeId> {
        let mut total = None;
        for &(o, node) in &self.items {
            let t = g.scale(node, cfg.objectives.weight(o).unwrap_or(0.0));
            total = Some(match total {
                None => t,
                Some(acc) => g.add(acc, t),
            });
        }
        total
    }

    pub fn get(&self, o: Objective) -> Option<NodeId> {
        self.items.iter().find(|(x, _)| *x == o).map(|&(_, n)| n)
    }
}

struct ExampleResult {
    values: Vec<(Objective, f64)>,
    total: f64,
    grads: Option<Gradients>,
    skipped: usize,
}

fn example_seed(seed: u64, step: usize, slot: usize) -> u64 {
    seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (slot as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Write `loss.csv` with one column per objective.
pub fn write_loss_csv(path: &Path, curve: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "total".to_string()];
    header.extend(Objective::ALL.iter().map(|o| o.name().to_string()));
    header.push("grad_norm".into());
    w.write_record(&header)?;
    for row in curve {
        let mut rec = vec![row.step.to_string(), format!("{:.10e}", row.total)];
        for o in Objective::ALL {
            rec.push(row.terms.get(&o).map(|v| format!("{v:.10e}")).unwrap_or_default());
        }
        rec.push(format!("{:.10e}", row.grad_norm));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn check_stage(cfg: &TrainConfig, stage: &str, allowed: &[Objective]) -> Result<()> {
    cfg.validate()?;
    for o in cfg.objectives.enabled_list() {
        if !allowed.contains(&o) {
            return Err(Error::Config(format!("objective {} does not apply to {stage}", o.name())));
        }
    }
    Ok(())
}

/// Shared optimisation loop: seeded epoch shuffling, per-example graphs
/// evaluated in parallel, gradients summed in batch order.
pub(crate) fn run<E, F>(model: &mut Model, examples: &[E], cfg: &TrainConfig, out: Option<&Path>, f: F) -> Result<TrainReport>
where
    E: Sync,
    F: Fn(&Model, &mut Graph<'_>, &E, &mut ChaCha8Rng) -> Result<LossTerms> + Sync,
{
    if examples.is_empty() && cfg.steps > 0 {
        return Err(Error::Validation("no training examples".into()));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("train_config.json");
        std::fs::write(&p, serde_json::to_string_pretty(cfg)? + "\n").map_err(|e| Error::io(&p, e))?;
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;
    let mut adam = Adam::new(cfg.adam.clone());
    let mut report = TrainReport::default();
    let frozen = model.memory_param();
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let m: &Model = model;
        let results: Vec<ExampleResult> = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &i)| {
                let mut rng = ChaCha8Rng::seed_from_u64(example_seed(cfg.seed, step, slot));
                let mut g = Graph::new(&m.store);
                let terms = f(m, &mut g, &examples[i], &mut rng)?;
                if terms.items.is_empty() {
                    return Ok(ExampleResult {
                        values: Vec::new(),
                        total: 0.0,
                        grads: None,
                        skipped: terms.skipped,
                    });
                }
                let values: Vec<(Objective, f64)> = terms.items.iter().map(|&(o, n)| (o, g.value(n).item())).collect();
                let total = terms.total(&mut g, cfg).expect("non-empty terms");
                let tv = g.value(total).item();
                if !tv.is_finite() || values.iter().any(|(_, v)| !v.is_finite()) {
                    let detail: Vec<String> = values.iter().map(|(o, v)| format!("{}={v}", o.name())).collect();
                    return Err(Error::Numeric(format!(
                        "non-finite loss at step {step}, example {i}: {}",
                        detail.join(", ")
                    )));
                }
                let grads = g.backward(total)?;
                Ok(ExampleResult {
                    values,
                    total: tv,
                    grads: Some(grads),
                    skipped: terms.skipped,
                })
            })
            .collect::<Result<_>>()?;
        let mut grads = Gradients::default();
        let mut sums: BTreeMap<Objective, (f64, usize)> = BTreeMap::new();
        let mut total = 0.0;
        for r in &results {
            report.skipped_mentions += r.skipped;
            total += r.total;
            for &(o, v) in &r.values {
                let e = sums.entry(o).or_insert((0.0, 0));
                e.0 += v;
                e.1 += 1;
            }
            if let Some(gr) = &r.grads {
                grads.merge(gr);
            }
        }
        let n = results.len() as f64;
        grads.scale(1.0 / n);
        if let Some(e) = frozen {
            if grads.get(e).is_some_and(|t| t.data().iter().any(|&v| v != 0.0)) {
                return Err(Error::Validation(format!("frozen memory received a gradient at step {step}")));
            }
            report.memory_grad_checks += 1;
        }
        let grad_norm = adam.step(&mut model.store, &grads);
        report.curve.push(CurveRow {
            step,
            total: total / n,
            terms: sums.into_iter().map(|(o, (s, c))| (o, s / c as f64)).collect(),
            grad_norm,
        });
        report.steps = step;
        if let Some(dir) = out {
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                model.save(&dir.join("checkpoints").join(format!("step-{step:06}")))?;
            }
        }
    }
    if let Some(dir) = out {
        write_loss_csv(&dir.join("loss.csv"), &report.curve)?;
    }
    Ok(report)
}

fn clean_input(model: &Model, s: &MoralityBankSentence) -> Result<ModelInput> {
    let (tagged, mentions) = insert_mention_tags(&s.tokens, &s.mentions);
    model.from_tagged(&tagged, mentions)
}

/// Word-knowledge pretraining over Morality Bank sentences with any of
/// LM, MV, MWL and MLA.
pub fn pretrain_words(
    model: &mut Model,
    lexicon: &Lexicon,
    bank: &[MoralityBankSentence],
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainReport> {
    check_stage(cfg, "word pretraining", &[Objective::Lm, Objective::Mv, Objective::Mwl, Objective::Mla])?;
    let needs_memory = cfg.objectives.enabled(Objective::Mwl) || cfg.objectives.enabled(Objective::Mla);
    if needs_memory && model.memory().is_none() {
        return Err(Error::Config("MWL and MLA need a lexicon memory".into()));
    }
    if let Some(m) = model.memory() {
        m.check_lexicon(lexicon)?;
    }
    run(model, bank, cfg, out, |m, g, s, rng| word_terms(m, g, lexicon, s, cfg, rng))
}

/// Word-pretraining loss nodes for one Morality Bank sentence.
pub fn word_terms<R: Rng + ?Sized>(
    m: &Model,
    g: &mut Graph<'_>,
    lexicon: &Lexicon,
    s: &MoralityBankSentence,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossTerms> {
    let needs_memory = cfg.objectives.enabled(Objective::Mwl) || cfg.objectives.enabled(Objective::Mla);
    let mut items = Vec::new();
    let mut skipped = 0;
    if cfg.objectives.enabled(Objective::Lm) {
        let c = corrupt_for_lm(&s.tokens, cfg.noise_density, cfg.mean_span_len, rng);
        let input = m.tag_and_prepare(&c.input, lexicon)?;
        let enc = m.encode(g, &input, false)?;
        items.push((Objective::Lm, m.sequence_loss(g, enc.h, BOS, &c.target)?));
    }
    if cfg.objectives.enabled(Objective::Mv) {
        let seed = s.seed().token_range;
        let mut tokens = s.tokens.clone();
        for t in &mut tokens[seed.start..seed.end] {
            *t = MASK.to_string();
        }
        tokens.drain(seed.start + 1..seed.end);
        let others: Vec<_> = tag_mentions(&tokens, lexicon)
            .into_iter()
            .filter(|mm| mm.token_range.start != seed.start)
            .collect();
        let (tagged, mentions) = insert_mention_tags(&tokens, &others);
        let input = m.from_tagged(&tagged, mentions)?;
        let enc = m.encode(g, &input, false)?;
        let target = tokenize(&linearize_labels(&s.sentence_moralities));
        items.push((Objective::Mv, m.sequence_loss(g, enc.h, BOS, &target)?));
    }
    if needs_memory {
        let input = clean_input(m, s)?;
        let enc = m.encode(g, &input, true)?;
        match m.memory_losses(g, &enc, cfg.mwl_form)? {
            Some(l) => {
                if cfg.objectives.enabled(Objective::Mwl) {
                    items.push((Objective::Mwl, l.mwl));
                }
                if cfg.objectives.enabled(Objective::Mla) {
                    items.push((Objective::Mla, l.mla));
                }
                skipped += l.skipped;
            }
            None => skipped += enc.read_mentions.len(),
        }
    }
    Ok(LossTerms { items, skipped })
}

/// A scenario pretraining example with its retrieval already done.
#[derive(Debug, Clone)]
pub struct ScenarioExample {
    pub pair: ScenarioPair,
    /// Augmented input text.
    pub augmented: String,
    pub retrieved: usize,
}

/// Retrieve for every pair of `pairs`, excluding candidates identical to
/// the query's own pair.
pub fn scenario_examples(retriever: &Retriever, pairs: &[ScenarioPair], k: usize) -> Result<Vec<ScenarioExample>> {
    pairs
        .par_iter()
        .map(|p| {
            let r = retriever.retrieve_excluding(&tokenize(&p.scenario), k, p)?;
            Ok(ScenarioExample {
                pair: p.clone(),
                augmented: augment_input(&p.scenario, &r),
                retrieved: r.items.len(),
            })
        })
        .collect()
}

/// Scenario pretraining: decode each scenario's label from its augmented
/// input (CE), optionally recovering one masked retrieved label (RLM).
pub fn pretrain_scenarios(
    model: &mut Model,
    examples: &[ScenarioExample],
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainReport> {
    check_stage(cfg, "scenario pretraining", &[Objective::Ce, Objective::Rlm])?;
    run(model, examples, cfg, out, |m, g, ex, rng| scenario_terms(m, g, ex, cfg, rng))
}

/// Scenario-pretraining loss nodes for one example.
pub fn scenario_terms<R: Rng + ?Sized>(
    m: &Model,
    g: &mut Graph<'_>,
    ex: &ScenarioExample,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossTerms> {
    let mut items = Vec::new();
    let rlm = cfg.objectives.enabled(Objective::Rlm) && ex.retrieved > 0;
    let (text, masked_label) = if rlm {
        let (t, l) = mask_retrieved_label(&ex.augmented, rng)?;
        (t, Some(l))
    } else {
        (ex.augmented.clone(), None)
    };
    let input = m.prepare(&tokenize(&text), None)?;
    let enc = m.encode(g, &input, false)?;
    if cfg.objectives.enabled(Objective::Ce) {
        items.push((Objective::Ce, m.sequence_loss(g, enc.h, BOS, &tokenize(&ex.pair.label))?));
    }
    if let Some(label) = masked_label {
        items.push((Objective::Rlm, m.sequence_loss(g, enc.h, MASK, &tokenize(&label))?));
    }
    Ok(LossTerms { items, skipped: 0 })
}

/// What a task input is assembled from.
#[derive(Debug, Clone, Copy)]
pub struct TaskContext<'a> {
    /// Tags mentions on the fly when the model has a memory.
    pub lexicon: Option<&'a Lexicon>,
    pub retriever: Option<&'a Retriever>,
    pub k: usize,
    pub token_budget: usize,
}

/// Formatted, retrieval-augmented input tokens of an instance.
pub fn task_tokens(inst: &TaskInstance, ctx: &TaskContext<'_>) -> Result<Vec<String>> {
    let formatted = format_instance(inst, ctx.token_budget)?;
    match ctx.retriever {
        Some(r) if ctx.k > 0 => {
            let res = r.retrieve(&formatted, ctx.k)?;
            Ok(tokenize(&augment_input(&detokenize(&formatted), &res)))
        }
        _ => Ok(formatted),
    }
}

/// Model input of an instance: [`task_tokens`], tagged when the model
/// has a memory and a lexicon is given.
pub fn task_input(model: &Model, inst: &TaskInstance, ctx: &TaskContext<'_>) -> Result<ModelInput> {
    let tokens = task_tokens(inst, ctx)?;
    match (model.memory(), ctx.lexicon) {
        (Some(_), Some(lex)) => model.tag_and_prepare(&tokens, lex),
        _ => model.prepare(&tokens, None),
    }
}

/// Fine-tuning on task instances: CE on the rendered gold output plus MWL
/// and MLA over tagged mentions. Memory terms are dropped when the model
/// has no memory.
pub fn finetune(
    model: &mut Model,
    instances: &[TaskInstance],
    ctx: &TaskContext<'_>,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainReport> {
    check_stage(cfg, "fine-tuning", &[Objective::Ce, Objective::Mwl, Objective::Mla])?;
    let memory_terms = [Objective::Mwl, Objective::Mla].into_iter().any(|o| cfg.objectives.weight(o).is_some());
    if model.memory().is_none() && memory_terms {
        log::warn!("model has no memory; MWL and MLA are skipped");
    }
    if let (Some(m), Some(lex)) = (model.memory(), ctx.lexicon) {
        m.check_lexicon(lex)?;
    }
    let prepared: Vec<(ModelInput, Vec<String>)> = instances
        .par_iter()
        .map(|inst| Ok((task_input(model, inst, ctx)?, tokenize(&render_output(&inst.gold)))))
        .collect::<Result<_>>()?;
    run(model, &prepared, cfg, out, |m, g, (input, target), _| task_terms(m, g, input, target, cfg))
}

/// Fine-tuning loss nodes for one prepared input and its target tokens.
pub fn task_terms<S: AsRef<str>>(
    m: &Model,
    g: &mut Graph<'_>,
    input: &ModelInput,
    target: &[S],
    cfg: &TrainConfig,
) -> Result<LossTerms> {
    let mut items = Vec::new();
    let mut skipped = 0;
    let enc = m.encode(g, input, false)?;
    if cfg.objectives.enabled(Objective::Ce) {
        items.push((Objective::Ce, m.sequence_loss(g, enc.h, BOS, target)?));
    }
    if cfg.objectives.enabled(Objective::Mwl) || cfg.objectives.enabled(Objective::Mla) {
        match m.memory_losses(g, &enc, cfg.mwl_form)? {
            Some(l) => {
                if cfg.objectives.enabled(Objective::Mwl) {
                    items.push((Objective::Mwl, l.mwl));
                }
                if cfg.objectives.enabled(Objective::Mla) {
                    items.push((Objective::Mla, l.mla));
                }
                skipped += l.skipped;
            }
            None => skipped += enc.read_mentions.len(),
        }
    }
    Ok(LossTerms { items, skipped })
}

/// Default decoding length limit.
pub const DEFAULT_MAX_DECODE: usize = 64;

/// Greedy prediction for one instance.
pub fn predict(model: &Model, inst: &TaskInstance, ctx: &TaskContext<'_>, max_len: usize) -> Result<Prediction> {
    let input = task_input(model, inst, ctx)?;
    let gen = model.generate(&input, max_len)?;
    Ok(Prediction::from_raw(inst.id.clone(), inst.task, &gen.text(), gen.truncated))
}

/// Predictions for all instances, in input order.
pub fn predict_all(
    model: &Model,
    instances: &[TaskInstance],
    ctx: &TaskContext<'_>,
    max_len: usize,
) -> Result<Vec<Prediction>> {
    instances.par_iter().map(|i| predict(model, i, ctx, max_len)).collect()
}

/// Directory layout of a training run.
pub fn checkpoint_dir(run: &Path) -> PathBuf {
    run.join("model")
}
