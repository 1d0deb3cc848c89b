#![allow(dead_code)]

use std::path::PathBuf;

use moral_events::banks::{
    load_lexicon, load_morality_bank, load_scenario_bank, BankName, Lexicon, MoralityBankSplit, ScenarioBank,
};
use moral_events::memory::MwlForm;
use moral_events::model::{
    build_model_memory, collect_vocab, scenario_examples, scenario_terms, task_input, task_terms, word_terms, Model,
    ModelConfig, Objective, Retriever, TaskContext, TrainConfig, VocabSources,
};
use moral_events::nn::{grad_check, GradCheckReport, Graph, ParamId};
use moral_events::schema::{build_task_instances, load_corpus, Article, Task, TaskInstance};
use moral_events::tasks::render_output;
use moral_events::text::tokenize;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy")
}

pub struct Toy {
    pub articles: Vec<Article>,
    pub lexicon: Lexicon,
    pub bank: MoralityBankSplit,
    pub scenarios: ScenarioBank,
}

impl Toy {
    pub fn load() -> Toy {
        let dir = toy_dir();
        let lexicon = load_lexicon(dir.join("lexicon.tsv")).unwrap();
        Toy {
            articles: load_corpus(dir.join("corpus.jsonl")).unwrap(),
            bank: load_morality_bank(dir.join("morality_bank.jsonl"), &lexicon, 0).unwrap(),
            scenarios: load_scenario_bank(dir.join("delphi_judgement.jsonl"), BankName::DelphiJudgement).unwrap(),
            lexicon,
        }
    }

    pub fn instances(&self, tasks: &[Task]) -> Vec<TaskInstance> {
        let mut out = Vec::new();
        for &t in tasks {
            for a in &self.articles {
                out.extend(build_task_instances(a, t));
            }
        }
        out
    }

    pub fn model(&self, config: ModelConfig, memory: bool) -> Model {
        let instances = self.instances(&Task::ALL);
        let vocab = collect_vocab(&VocabSources {
            instances: &instances,
            lexicon: Some(&self.lexicon),
            morality_bank: &self.bank.train,
            scenario_banks: std::slice::from_ref(&self.scenarios),
            token_budget: 256,
        })
        .unwrap();
        let mut model = Model::new(config, vocab).unwrap();
        if memory {
            let m = build_model_memory(&model, &self.lexicon, &self.bank.train).unwrap();
            model.attach_memory(m).unwrap();
        }
        model
    }

    pub fn tiny(&self, memory: bool) -> Model {
        self.model(ModelConfig::tiny(), memory)
    }
}

/// Finite-difference check of every training objective through the full
/// tiny model. Returns `(objective, report)` pairs.
pub fn gradient_suite(toy: &Toy, samples: usize) -> Vec<(String, GradCheckReport)> {
    let model = toy.tiny(true);
    let retriever = Retriever::build(&model, &toy.scenarios).unwrap();
    let scenario = scenario_examples(&retriever, &toy.scenarios.pairs[..1], 2).unwrap().remove(0);
    let sentence = toy.bank.train.iter().find(|s| s.mentions.len() > 1).unwrap().clone();
    let inst = toy.instances(&[Task::B]).remove(0);
    let ctx = TaskContext {
        lexicon: Some(&toy.lexicon),
        retriever: Some(&retriever),
        k: 2,
        token_budget: 256,
    };
    let input = task_input(&model, &inst, &ctx).unwrap();
    let target = tokenize(&render_output(&inst.gold));
    let params: Vec<ParamId> = model.store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();

    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases: [(&str, Objective, MwlForm); 8] = [
        ("lm", Objective::Lm, MwlForm::OneMinusAlpha),
        ("mv", Objective::Mv, MwlForm::OneMinusAlpha),
        ("mwl", Objective::Mwl, MwlForm::OneMinusAlpha),
        ("mwl-neglog", Objective::Mwl, MwlForm::NegLog),
        ("mla", Objective::Mla, MwlForm::OneMinusAlpha),
        ("rlm", Objective::Rlm, MwlForm::OneMinusAlpha),
        ("ce-scenario", Objective::Ce, MwlForm::OneMinusAlpha),
        ("ce-task", Objective::Ce, MwlForm::OneMinusAlpha),
    ];
    for (name, o, form) in cases {
        let mut cfg = TrainConfig::new(&[o]);
        cfg.mwl_form = form;
        let m = &model;
        let report = {
            let f = |g: &mut Graph<'_>| {
                let mut r = ChaCha8Rng::seed_from_u64(5);
                let terms = match (name, o) {
                    ("ce-task", _) => task_terms(m, g, &input, &target, &cfg)?,
                    (_, Objective::Rlm | Objective::Ce) => scenario_terms(m, g, &scenario, &cfg, &mut r)?,
                    _ => word_terms(m, g, &toy.lexicon, &sentence, &cfg, &mut r)?,
                };
                Ok(terms.get(o).expect("objective term present"))
            };
            let mut store = model.store.clone();
            grad_check(&mut store, &params, 1e-5, samples, &mut rng, f).unwrap()
        };
        out.push((name.to_string(), report));
    }
    out
}
