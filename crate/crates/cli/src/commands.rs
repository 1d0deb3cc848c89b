use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::Args;
use log::info;
use serde_json::{json, Value};

use moral_events::analysis::{
    agent_patient_matrix, events_per_segment, foundation_distribution, ideologies_from_corpus,
    load_entity_ideologies, top_entities, Grouping, SEGMENT_LEN,
};
use moral_events::banks::{
    insert_mention_tags, load_lexicon, load_morality_bank, load_scenario_bank, tag_mentions, BankName, Lexicon,
    MoralityBankSentence, ScenarioBank,
};
use moral_events::memory::MwlForm;
use moral_events::metrics::{evaluate, render_table};
use moral_events::model::{
    build_model_memory, collect_vocab, finetune, predict_all, pretrain_scenarios, pretrain_words, scenario_examples,
    Model, ModelConfig, Objective, Retriever, TaskContext, TrainConfig, TrainReport, VocabSources,
    DEFAULT_MAX_DECODE,
};
use moral_events::schema::{
    build_task_instances, load_corpus, split_corpus, write_corpus, Article, SplitBoundaries, Task, TaskInstance,
    CORPUS_SCHEMA,
};
use moral_events::tasks::{dictionary_baseline, linearize_labels, Prediction};
use moral_events::text::tokenize;
use moral_events::{Error, Result};

use crate::config::{parse_objectives, set_objectives, FileConfig};
use crate::manifest::{prepend_comment, read_jsonl, write_jsonl, write_text, Manifest};
use crate::{ArchFlags, Cli, Command, TrainFlags};

pub const PREDICTIONS_SCHEMA: &str = "moralevents-predictions/v1";
pub const METRICS_SCHEMA: &str = "moralevents-metrics/v1";
pub const TAGS_SCHEMA: &str = "moralevents-tags/v1";
pub const RETRIEVAL_SCHEMA: &str = "moralevents-retrieval/v1";
pub const ANALYSIS_SCHEMA: &str = "moralevents-analysis/v1";
pub const SUMMARY_SCHEMA: &str = "moralevents-summary/v1";
pub const LOSS_SCHEMA: &str = "moralevents-loss/v1";

struct Ctx {
    file: FileConfig,
    seed: u64,
}

pub fn run(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    let ctx = Ctx { file, seed };
    match &cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::Tag(a) => tag(&ctx, a),
        Command::BuildMemory(a) => build_memory_cmd(&ctx, a),
        Command::BuildIndex(a) => build_index_cmd(&ctx, a),
        Command::PretrainWords(a) => pretrain_words_cmd(&ctx, a),
        Command::PretrainScenarios(a) => pretrain_scenarios_cmd(&ctx, a),
        Command::Finetune(a) => finetune_cmd(&ctx, a),
        Command::Predict(a) => predict_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate_cmd(&ctx, a),
        Command::Retrieve(a) => retrieve_cmd(&ctx, a),
        Command::Analyze(a) => analyze_cmd(&ctx, a),
    }
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("{s:?}: {e}"))
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse()
}

fn parse_bank(s: &str) -> std::result::Result<BankName, String> {
    s.parse()
}

fn instances(articles: &[Article], tasks: &[Task]) -> Vec<TaskInstance> {
    let mut out = Vec::new();
    for &t in tasks {
        for a in articles {
            out.extend(build_task_instances(a, t));
        }
    }
    out
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn with_header(m: &Manifest, schema: &str, body: Value) -> Value {
    let mut v = m.header(schema);
    if let (Some(obj), Value::Object(b)) = (v.as_object_mut(), body) {
        obj.extend(b);
    }
    v
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus JSON-Lines file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for the split corpora and summary.
    #[arg(long)]
    pub out: PathBuf,
    /// First date (YYYY-MM-DD) of the dev split.
    #[arg(long, value_parser = parse_date)]
    pub dev_start: Option<NaiveDate>,
    /// First date (YYYY-MM-DD) of the test split.
    #[arg(long, value_parser = parse_date)]
    pub test_start: Option<NaiveDate>,
}

fn ingest(ctx: &Ctx, a: &IngestArgs) -> Result<()> {
    let mut bounds = SplitBoundaries::default();
    if let Some(d) = a.dev_start {
        bounds.dev_start = d;
    }
    if let Some(d) = a.test_start {
        bounds.test_start = d;
    }
    if bounds.dev_start > bounds.test_start {
        return Err(Error::Config("dev start is after test start".into()));
    }
    let articles = load_corpus(&a.corpus)?;
    let split = split_corpus(&articles, bounds);
    let mut m = Manifest::new(
        "ingest",
        ctx.seed,
        json!({
            "command": "ingest",
            "dev_start": bounds.dev_start.to_string(),
            "test_start": bounds.test_start.to_string(),
            "input": moral_events::text::sha256_hex(&std::fs::read(&a.corpus).map_err(|e| Error::io(&a.corpus, e))?),
        }),
    );
    m.input(&a.corpus)?;
    create_dir(&a.out)?;
    let mut counts = BTreeMap::new();
    for (name, arts) in [("train", &split.train), ("dev", &split.dev), ("test", &split.test)] {
        let p = a.out.join(format!("{name}.jsonl"));
        write_corpus(&p, arts)?;
        m.output(&p);
        let mut per_task = BTreeMap::new();
        for t in Task::ALL {
            per_task.insert(t.to_string(), instances(arts, &[t]).len());
        }
        counts.insert(
            name,
            json!({
                "articles": arts.len(),
                "events": arts.iter().map(|x| x.events.len()).sum::<usize>(),
                "instances": per_task,
            }),
        );
    }
    let summary = a.out.join("summary.json");
    write_json(
        &summary,
        &with_header(&m, SUMMARY_SCHEMA, json!({"corpus_schema": CORPUS_SCHEMA, "splits": counts})),
    )?;
    m.output(&summary);
    m.write(&a.out)?;
    info!("ingested {} articles", articles.len());
    Ok(())
}

// ------------------------------------------------------------------- tag

#[derive(Debug, Args)]
pub struct TagArgs {
    /// Morality lexicon TSV.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Corpus JSON-Lines file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output JSON-Lines file.
    #[arg(long)]
    pub out: PathBuf,
}

fn tag(ctx: &Ctx, a: &TagArgs) -> Result<()> {
    let lex = load_lexicon(&a.lexicon)?;
    let articles = load_corpus(&a.corpus)?;
    let mut m = Manifest::new("tag", ctx.seed, json!({"command": "tag", "lexicon": lex.content_hash()}));
    m.input(&a.lexicon)?;
    m.input(&a.corpus)?;
    let mut records = Vec::new();
    for art in &articles {
        for (i, s) in art.sentences.iter().enumerate() {
            let mentions = tag_mentions(s, &lex);
            let (tagged, _) = insert_mention_tags(s, &mentions);
            let ms: Vec<Value> = mentions
                .iter()
                .map(|mm| {
                    let e = lex.entry(mm.entry);
                    json!({
                        "start": mm.token_range.start,
                        "end": mm.token_range.end,
                        "entry": e.word,
                        "moralities": e.moralities,
                    })
                })
                .collect();
            records.push(json!({
                "article_id": art.id,
                "sentence_index": i,
                "tokens": tagged,
                "mentions": ms,
            }));
        }
    }
    write_jsonl(&a.out, &m.header(TAGS_SCHEMA), &records)?;
    m.output(&a.out);
    m.write(&a.out)?;
    Ok(())
}

// ------------------------------------------------------- model handling

/// Where a model comes from: a checkpoint, or a fresh initialisation whose
/// vocabulary covers the given sources.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelSource {
    /// Model checkpoint directory. A fresh model is initialised when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Corpus files whose words join a fresh model's vocabulary; repeatable.
    #[arg(long = "vocab-corpus")]
    pub vocab_corpus: Vec<PathBuf>,
    /// Scenario banks (`bank-name=path`) whose words join a fresh model's vocabulary; repeatable.
    #[arg(long = "vocab-scenarios")]
    pub vocab_scenarios: Vec<String>,
    #[command(flatten)]
    pub arch: ArchFlags,
}

#[derive(Default)]
struct Extra<'a> {
    lexicon: Option<&'a Lexicon>,
    morality_bank: &'a [MoralityBankSentence],
    scenario_banks: Vec<ScenarioBank>,
    instances: Vec<TaskInstance>,
}

fn model_config(ctx: &Ctx, arch: &ArchFlags) -> ModelConfig {
    let mut c = ModelConfig::default();
    ctx.file.apply_model(&mut c);
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = arch.$flag { c.$field = v; })*};
    }
    set!(d_model => d_model, encoder_layers => n_encoder_layers, memory_layer => memory_layer,
         decoder_layers => n_decoder_layers, heads => n_heads, d_ff => d_ff, max_len => max_len);
    c.seed = ctx.seed;
    c
}

fn scenario_spec(spec: &str) -> Result<(BankName, PathBuf)> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected bank-name=path, got {spec:?}")))?;
    Ok((name.parse().map_err(Error::Config)?, PathBuf::from(path)))
}

fn load_or_init(ctx: &Ctx, src: &ModelSource, mut extra: Extra<'_>, m: &mut Manifest) -> Result<Model> {
    if let Some(dir) = &src.model {
        m.input(dir)?;
        return Model::load(dir, extra.lexicon);
    }
    for p in &src.vocab_corpus {
        m.input(p)?;
        extra.instances.extend(instances(&load_corpus(p)?, &Task::ALL));
    }
    for spec in &src.vocab_scenarios {
        let (name, p) = scenario_spec(spec)?;
        m.input(&p)?;
        extra.scenario_banks.push(load_scenario_bank(&p, name)?);
    }
    let budget = ctx.file.train.token_budget.unwrap_or(moral_events::tasks::DEFAULT_TOKEN_BUDGET);
    let vocab = collect_vocab(&VocabSources {
        instances: &extra.instances,
        lexicon: extra.lexicon,
        morality_bank: extra.morality_bank,
        scenario_banks: &extra.scenario_banks,
        token_budget: budget,
    })?;
    let config = model_config(ctx, &src.arch);
    info!("initialising a model with {} vocabulary entries", vocab.len());
    Model::new(config, vocab)
}

fn train_config(ctx: &Ctx, flags: &TrainFlags, defaults: &[Objective]) -> Result<TrainConfig> {
    let mut c = TrainConfig::new(defaults);
    ctx.file.apply_train(&mut c)?;
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = flags.$f { c.$f = v; })*};
    }
    set!(steps, batch_size, checkpoint_every, noise_density, mean_span_len);
    if let Some(v) = flags.lr {
        c.adam.lr = v;
    }
    if let Some(v) = flags.clip_norm {
        c.adam.clip_norm = v;
    }
    if let Some(list) = &flags.objectives {
        set_objectives(&mut c, &parse_objectives(list)?);
    }
    for w in &flags.weights {
        let (name, v) = w
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected objective=weight, got {w:?}")))?;
        let o: Objective = name.parse().map_err(Error::Config)?;
        let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("bad weight {v:?}")))?;
        if !c.objectives.enabled(o) {
            return Err(Error::Config(format!("weight given for disabled objective {}", o.name())));
        }
        c.objectives.set(o, Some(v));
    }
    if let Some(f) = &flags.mwl_form {
        c.mwl_form = match f.as_str() {
            "one-minus-alpha" => MwlForm::OneMinusAlpha,
            "neg-log" => MwlForm::NegLog,
            other => return Err(Error::Config(format!("unknown MWL form {other:?}"))),
        };
    }
    c.seed = ctx.seed;
    c.validate()?;
    Ok(c)
}

fn finish_training(m: &mut Manifest, out: &Path, model: &Model, report: &TrainReport) -> Result<()> {
    let dir = out.join("model");
    model.save(&dir)?;
    m.output(&dir);
    let loss = out.join("loss.csv");
    prepend_comment(&loss, &m.csv_comment(LOSS_SCHEMA))?;
    m.output(&loss);
    let summary = out.join("summary.json");
    let last = report.curve.last();
    write_json(
        &summary,
        &with_header(
            m,
            SUMMARY_SCHEMA,
            json!({
                "steps": report.steps,
                "final_loss": last.map(|r| r.total),
                "final_terms": last.map(|r| &r.terms),
                "skipped_mentions": report.skipped_mentions,
                "memory_grad_checks": report.memory_grad_checks,
                "snapshot_hash": model.snapshot_hash(),
            }),
        ),
    )?;
    m.output(&summary);
    m.write(out)?;
    Ok(())
}

// ----------------------------------------------------------- build-memory

#[derive(Debug, Args)]
pub struct BuildMemoryArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Morality lexicon TSV.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Morality Bank JSON-Lines file.
    #[arg(long)]
    pub morality_bank: PathBuf,
    /// Output model checkpoint directory (with the memory attached).
    #[arg(long)]
    pub out: PathBuf,
}

fn build_memory_cmd(ctx: &Ctx, a: &BuildMemoryArgs) -> Result<()> {
    let lex = load_lexicon(&a.lexicon)?;
    let bank = load_morality_bank(&a.morality_bank, &lex, ctx.seed)?;
    let mut m = Manifest::new("build-memory", ctx.seed, Value::Null);
    m.input(&a.lexicon)?;
    m.input(&a.morality_bank)?;
    let all: Vec<MoralityBankSentence> = bank.train.iter().chain(&bank.validation).cloned().collect();
    let mut model = load_or_init(
        ctx,
        &a.source,
        Extra {
            lexicon: Some(&lex),
            morality_bank: &all,
            ..Default::default()
        },
        &mut m,
    )?;
    let memory = build_model_memory(&model, &lex, &bank.train)?;
    let covered = memory.mention_counts.iter().filter(|&&c| c > 0).count();
    model.attach_memory(memory)?;
    m = rebase(m, json!({"command": "build-memory", "model": model.snapshot_hash()}));
    model.save(&a.out)?;
    m.output(&a.out);
    m.write(&a.out)?;
    info!("memory rows with bank mentions: {covered}/{}", lex.len());
    Ok(())
}

/// Replace the config of a manifest whose inputs are already recorded.
fn rebase(m: Manifest, config: Value) -> Manifest {
    let mut config = config;
    if let Value::Object(o) = &mut config {
        o.insert("inputs".into(), json!(m.inputs.values().collect::<Vec<_>>()));
    }
    let mut n = Manifest::new(&m.command, m.seed, config);
    n.inputs = m.inputs;
    n.outputs = m.outputs;
    n
}

// ------------------------------------------------------------ build-index

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    /// Encoder checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Lexicon, needed when the checkpoint carries a memory.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Scenario bank JSON-Lines file.
    #[arg(long)]
    pub scenario_bank: PathBuf,
    /// Scenario bank name.
    #[arg(long, value_parser = parse_bank, default_value = "delphi-judgement")]
    pub bank_name: BankName,
    /// Output index directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn load_lexicon_opt(p: &Option<PathBuf>, m: &mut Manifest) -> Result<Option<Lexicon>> {
    match p {
        Some(p) => {
            m.input(p)?;
            Ok(Some(load_lexicon(p)?))
        }
        None => Ok(None),
    }
}

fn build_index_cmd(ctx: &Ctx, a: &BuildIndexArgs) -> Result<()> {
    let mut m = Manifest::new("build-index", ctx.seed, Value::Null);
    let lex = load_lexicon_opt(&a.lexicon, &mut m)?;
    m.input(&a.model)?;
    m.input(&a.scenario_bank)?;
    let model = Model::load(&a.model, lex.as_ref())?;
    let bank = load_scenario_bank(&a.scenario_bank, a.bank_name)?;
    let r = Retriever::build(&model, &bank)?;
    let mut m = rebase(m, json!({"command": "build-index", "bank": a.bank_name, "encoder": r.index.encoder_hash}));
    r.save(&a.out)?;
    m.output(&a.out);
    m.write(&a.out)?;
    info!("indexed {} pairs", r.index.len());
    Ok(())
}

// --------------------------------------------------------- pretrain-words

#[derive(Debug, Args)]
pub struct PretrainWordsArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Morality lexicon TSV.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Morality Bank JSON-Lines file.
    #[arg(long)]
    pub morality_bank: PathBuf,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

fn pretrain_words_cmd(ctx: &Ctx, a: &PretrainWordsArgs) -> Result<()> {
    let cfg = train_config(ctx, &a.train, &[Objective::Lm, Objective::Mv, Objective::Mwl, Objective::Mla])?;
    let lex = load_lexicon(&a.lexicon)?;
    let bank = load_morality_bank(&a.morality_bank, &lex, ctx.seed)?;
    let mut m = Manifest::new("pretrain-words", ctx.seed, Value::Null);
    m.input(&a.lexicon)?;
    m.input(&a.morality_bank)?;
    let all: Vec<MoralityBankSentence> = bank.train.iter().chain(&bank.validation).cloned().collect();
    let mut model = load_or_init(
        ctx,
        &a.source,
        Extra {
            lexicon: Some(&lex),
            morality_bank: &all,
            ..Default::default()
        },
        &mut m,
    )?;
    let needs_memory = cfg.objectives.enabled(Objective::Mwl) || cfg.objectives.enabled(Objective::Mla);
    if needs_memory && model.memory().is_none() {
        info!("building the lexicon memory from the bank");
        let memory = build_model_memory(&model, &lex, &bank.train)?;
        model.attach_memory(memory)?;
    }
    let mut m = rebase(m, json!({"command": "pretrain-words", "train": cfg, "model": model.snapshot_hash()}));
    create_dir(&a.out)?;
    let report = pretrain_words(&mut model, &lex, &bank.train, &cfg, Some(&a.out))?;
    finish_training(&mut m, &a.out, &model, &report)
}

// ----------------------------------------------------- pretrain-scenarios

#[derive(Debug, Args)]
pub struct PretrainScenariosArgs {
    /// Model checkpoint directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Morality lexicon TSV.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Index directory built from the scenario bank.
    #[arg(long)]
    pub index: PathBuf,
    /// Retrieved pairs per input.
    #[arg(long)]
    pub k: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

fn pretrain_scenarios_cmd(ctx: &Ctx, a: &PretrainScenariosArgs) -> Result<()> {
    let mut cfg = train_config(ctx, &a.train, &[Objective::Ce, Objective::Rlm])?;
    if let Some(k) = a.k {
        cfg.k = k;
    }
    let mut m = Manifest::new("pretrain-scenarios", ctx.seed, Value::Null);
    let lex = load_lexicon_opt(&a.lexicon, &mut m)?;
    m.input(&a.model)?;
    m.input(&a.index)?;
    let mut model = Model::load(&a.model, lex.as_ref())?;
    let retriever = Retriever::load(&a.index)?;
    let examples = scenario_examples(&retriever, &retriever.index.pairs, cfg.k)?;
    let mut m = rebase(m, json!({"command": "pretrain-scenarios", "train": cfg, "model": model.snapshot_hash()}));
    create_dir(&a.out)?;
    let report = pretrain_scenarios(&mut model, &examples, &cfg, Some(&a.out))?;
    finish_training(&mut m, &a.out, &model, &report)
}

// --------------------------------------------------------------- finetune

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub source: ModelSource,
    /// Lexicon for on-the-fly mention tagging.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Scenario index for retrieval augmentation.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Training corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Tasks to train on, comma-separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_task, default_value = "A,B,C")]
    pub tasks: Vec<Task>,
    /// Drop the checkpoint's lexicon memory.
    #[arg(long)]
    pub no_memory: bool,
    /// Retrieved pairs per input.
    #[arg(long)]
    pub k: Option<usize>,
    /// Token budget for the formatted input.
    #[arg(long)]
    pub token_budget: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

fn finetune_cmd(ctx: &Ctx, a: &FinetuneArgs) -> Result<()> {
    let mut cfg = train_config(ctx, &a.train, &[Objective::Ce, Objective::Mwl, Objective::Mla])?;
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(b) = a.token_budget {
        cfg.token_budget = b;
    }
    let mut m = Manifest::new("finetune", ctx.seed, Value::Null);
    let lex = load_lexicon_opt(&a.lexicon, &mut m)?;
    m.input(&a.corpus)?;
    let articles = load_corpus(&a.corpus)?;
    let train = instances(&articles, &a.tasks);
    let mut model = load_or_init(
        ctx,
        &a.source,
        Extra {
            lexicon: lex.as_ref(),
            instances: train.clone(),
            ..Default::default()
        },
        &mut m,
    )?;
    if a.no_memory {
        model = model.without_memory()?;
    }
    let retriever = match &a.index {
        Some(p) => {
            m.input(p)?;
            Some(Retriever::load(p)?)
        }
        None => None,
    };
    let tctx = TaskContext {
        lexicon: lex.as_ref(),
        retriever: retriever.as_ref(),
        k: cfg.k,
        token_budget: cfg.token_budget,
    };
    let mut m = rebase(
        m,
        json!({
            "command": "finetune",
            "tasks": a.tasks,
            "train": cfg,
            "model": model.snapshot_hash(),
            "memory": model.memory().is_some(),
            "retrieval": retriever.is_some(),
        }),
    );
    create_dir(&a.out)?;
    let report = finetune(&mut model, &train, &tctx, &cfg, Some(&a.out))?;
    finish_training(&mut m, &a.out, &model, &report)
}

// ---------------------------------------------------------------- predict

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model checkpoint.
    #[arg(long, required_unless_present = "dictionary")]
    pub model: Option<PathBuf>,
    /// Use the dictionary-counting baseline (Task A only) instead of a model.
    #[arg(long, conflicts_with = "model")]
    pub dictionary: bool,
    /// Morality lexicon TSV.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Index directory built from a scenario bank.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Corpus to predict on.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Task: A, B or C.
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    /// Retrieved pairs per input.
    #[arg(long)]
    pub k: Option<usize>,
    /// Token budget for the formatted input.
    #[arg(long)]
    pub token_budget: Option<usize>,
    /// Maximum decoded tokens.
    #[arg(long)]
    pub max_decode: Option<usize>,
    /// Output JSON-Lines file.
    #[arg(long)]
    pub out: PathBuf,
}

fn predict_cmd(ctx: &Ctx, a: &PredictArgs) -> Result<()> {
    let mut m = Manifest::new("predict", ctx.seed, Value::Null);
    let lex = load_lexicon_opt(&a.lexicon, &mut m)?;
    m.input(&a.corpus)?;
    let articles = load_corpus(&a.corpus)?;
    let inst = instances(&articles, &[a.task]);
    let k = a.k.or(ctx.file.train.k).unwrap_or(moral_events::retrieval::DEFAULT_K);
    let budget = a
        .token_budget
        .or(ctx.file.train.token_budget)
        .unwrap_or(moral_events::tasks::DEFAULT_TOKEN_BUDGET);
    let max_decode = a.max_decode.or(ctx.file.train.max_decode).unwrap_or(DEFAULT_MAX_DECODE);
    let (preds, config) = if a.dictionary {
        if a.task != Task::A {
            return Err(Error::Config("the dictionary baseline predicts Task A only".into()));
        }
        let lex = lex
            .as_ref()
            .ok_or_else(|| Error::Config("the dictionary baseline needs --lexicon".into()))?;
        let preds: Vec<Prediction> = inst
            .iter()
            .map(|i| Prediction::from_raw(i.id.clone(), Task::A, &linearize_labels(dictionary_baseline(i, lex)), false))
            .collect();
        (preds, json!({"command": "predict", "task": a.task, "baseline": "dictionary"}))
    } else {
        let dir = a.model.as_ref().expect("required by clap");
        m.input(dir)?;
        let model = Model::load(dir, lex.as_ref())?;
        let retriever = match &a.index {
            Some(p) => {
                m.input(p)?;
                Some(Retriever::load(p)?)
            }
            None => None,
        };
        let tctx = TaskContext {
            lexicon: lex.as_ref(),
            retriever: retriever.as_ref(),
            k,
            token_budget: budget,
        };
        let preds = predict_all(&model, &inst, &tctx, max_decode)?;
        (
            preds,
            json!({
                "command": "predict",
                "task": a.task,
                "model": model.snapshot_hash(),
                "k": k,
                "token_budget": budget,
                "max_decode": max_decode,
                "retrieval": retriever.is_some(),
            }),
        )
    };
    let mut m = rebase(m, config);
    write_jsonl(&a.out, &m.header(PREDICTIONS_SCHEMA), &preds)?;
    m.output(&a.out);
    m.write(&a.out)?;
    let malformed = preds.iter().filter(|p| p.malformed).count();
    info!("{} predictions, {malformed} malformed", preds.len());
    Ok(())
}

// --------------------------------------------------------------- evaluate

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Task: A, B or C.
    #[arg(long, value_parser = parse_task)]
    pub task: Task,
    /// Prediction JSON-Lines file.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Break scores down by event status.
    #[arg(long)]
    pub by_status: bool,
    /// Output metrics JSON file.
    #[arg(long)]
    pub out: PathBuf,
}

fn evaluate_cmd(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let mut m = Manifest::new("evaluate", ctx.seed, Value::Null);
    m.input(&a.corpus)?;
    m.input(&a.predictions)?;
    let gold = instances(&load_corpus(&a.corpus)?, &[a.task]);
    let preds: Vec<Prediction> = read_jsonl(&a.predictions)?;
    let report = evaluate(a.task, &gold, &preds, a.by_status)?;
    let mut m = rebase(m, json!({"command": "evaluate", "task": a.task, "by_status": a.by_status}));
    write_json(&a.out, &with_header(&m, METRICS_SCHEMA, json!({ "report": report })))?;
    m.output(&a.out);
    m.write(&a.out)?;
    print!("{}", render_table(&report));
    Ok(())
}

// --------------------------------------------------------------- retrieve

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    /// Index directory built from a scenario bank.
    #[arg(long, visible_alias = "bank")]
    pub index: PathBuf,
    /// Query text; repeatable.
    #[arg(long, required = true)]
    pub query: Vec<String>,
    /// Pairs per query.
    #[arg(long, default_value_t = moral_events::retrieval::DEFAULT_K)]
    pub k: usize,
    /// Also write the results to this JSON-Lines file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn retrieve_cmd(ctx: &Ctx, a: &RetrieveArgs) -> Result<()> {
    let mut m = Manifest::new("retrieve", ctx.seed, Value::Null);
    m.input(&a.index)?;
    let r = Retriever::load(&a.index)?;
    let mut records = Vec::new();
    for q in &a.query {
        let res = r.retrieve(&tokenize(q), a.k)?;
        records.push(json!({"query": q, "k": a.k, "items": res.items}));
    }
    let mut m = rebase(m, json!({"command": "retrieve", "k": a.k, "queries": a.query}));
    for rec in &records {
        println!("{}", serde_json::to_string(rec)?);
    }
    if let Some(out) = &a.out {
        write_jsonl(out, &m.header(RETRIEVAL_SCHEMA), &records)?;
        m.output(out);
        m.write(out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- analyze

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Corpus JSON-Lines file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Entity ideology TSV (`entity<TAB>L|R`); defaults to the corpus codes.
    #[arg(long)]
    pub ideologies: Option<PathBuf>,
    /// Number of entities in the frequency ranking.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Segment length in words.
    #[arg(long, default_value_t = SEGMENT_LEN)]
    pub segment_len: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

fn write_csv(path: &Path, comment: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    write_text(path, &format!("{comment}{}", String::from_utf8_lossy(&bytes)))
}

fn analyze_cmd(ctx: &Ctx, a: &AnalyzeArgs) -> Result<()> {
    if a.segment_len == 0 {
        return Err(Error::Config("segment length must be positive".into()));
    }
    let mut m = Manifest::new("analyze", ctx.seed, Value::Null);
    m.input(&a.corpus)?;
    let articles = load_corpus(&a.corpus)?;
    let ideologies: HashMap<_, _> = match &a.ideologies {
        Some(p) => {
            m.input(p)?;
            load_entity_ideologies(p)?
        }
        None => ideologies_from_corpus(&articles),
    };
    let mut m = rebase(m, json!({"command": "analyze", "top_k": a.top_k, "segment_len": a.segment_len}));
    create_dir(&a.out)?;
    let comment = m.csv_comment(ANALYSIS_SCHEMA);

    let seg: Vec<Vec<String>> = events_per_segment(&articles, a.segment_len)
        .into_iter()
        .map(|r| {
            vec![
                r.outlet_ideology.to_string(),
                r.segment.to_string(),
                r.articles.to_string(),
                r.events.to_string(),
                format!("{:.6}", r.mean_events),
            ]
        })
        .collect();
    let p = a.out.join("segments.csv");
    write_csv(&p, &comment, &["outlet_ideology", "segment", "articles", "events", "mean_events"], &seg)?;
    m.output(&p);

    let dist = foundation_distribution(&articles);
    let rows: Vec<Vec<String>> = dist
        .iter()
        .map(|r| {
            vec![
                r.foundation.name().to_string(),
                r.virtue.to_string(),
                r.vice.to_string(),
                r.total.to_string(),
                format!("{:.4}", r.percent),
            ]
        })
        .collect();
    let p = a.out.join("foundations.csv");
    write_csv(&p, &comment, &["foundation", "virtue", "vice", "total", "percent"], &rows)?;
    m.output(&p);

    let mut rows = Vec::new();
    let mut excluded = BTreeMap::new();
    for grouping in [Grouping::OutletMorality, Grouping::Morality] {
        for f in moral_events::schema::Foundation::ALL {
            let mat = agent_patient_matrix(&articles, &ideologies, f, grouping);
            excluded.insert(format!("{}:{:?}", f.name(), grouping), (mat.included_events, mat.excluded_events));
            for c in mat.cells {
                rows.push(vec![
                    format!("{grouping:?}"),
                    f.name().to_string(),
                    c.outlet_ideology.map(|o| o.to_string()).unwrap_or_else(|| "All".into()),
                    c.morality.to_string(),
                    c.agent_ideology.to_string(),
                    c.patient_ideology.to_string(),
                    c.count.to_string(),
                    format!("{:.4}", c.column_pct),
                ]);
            }
        }
    }
    let p = a.out.join("agent_patient.csv");
    write_csv(
        &p,
        &comment,
        &["grouping", "foundation", "outlet_ideology", "morality", "agent", "patient", "count", "column_pct"],
        &rows,
    )?;
    m.output(&p);

    let top: Vec<Vec<String>> = top_entities(&articles, a.top_k)
        .into_iter()
        .map(|(n, c)| vec![n, c.to_string()])
        .collect();
    let p = a.out.join("top_entities.csv");
    write_csv(&p, &comment, &["entity", "articles"], &top)?;
    m.output(&p);

    let p = a.out.join("analysis.json");
    let events: Value = excluded
        .into_iter()
        .map(|(k, (inc, exc))| (k, json!({"included": inc, "excluded": exc})))
        .collect::<serde_json::Map<_, _>>()
        .into();
    write_json(
        &p,
        &with_header(
            &m,
            ANALYSIS_SCHEMA,
            json!({"articles": articles.len(), "foundations": dist, "matrix_events": events}),
        ),
    )?;
    m.output(&p);
    m.write(&a.out)?;
    Ok(())
}
