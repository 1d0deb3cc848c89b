mod common;

use common::Toy;
use moral_events::banks::insert_mention_tags;
use moral_events::model::{
    finetune, predict, pretrain_scenarios, pretrain_words, scenario_examples, Objective, Retriever, TaskContext,
    TrainConfig,
};
use moral_events::schema::Task;
use moral_events::tasks::render_output;
use moral_events::text::{detokenize, tokenize};

#[test]
fn mwl_drives_attention_to_the_gold_row() {
    let toy = Toy::load();
    let mut model = toy.tiny(true);
    let s = toy.bank.train.iter().find(|s| s.mentions.len() == 1).unwrap().clone();
    let (tagged, mentions) = insert_mention_tags(&s.tokens, &s.mentions);
    let input = model.from_tagged(&tagged, mentions).unwrap();
    let gold = s.mentions[0].entry;
    let before = model.memory_attention(&input).unwrap().unwrap().get(0, gold);
    let mut cfg = TrainConfig::new(&[Objective::Mwl]);
    cfg.steps = 200;
    cfg.batch_size = 1;
    cfg.adam.lr = 3e-3;
    pretrain_words(&mut model, &toy.lexicon, std::slice::from_ref(&s), &cfg, None).unwrap();
    let after = model.memory_attention(&input).unwrap().unwrap().get(0, gold);
    assert!(after > 0.9, "alpha_gold {before} -> {after}");
}

#[test]
fn scenario_labels_are_learned() {
    let toy = Toy::load();
    let mut model = toy.tiny(false);
    let retriever = Retriever::build(&model, &toy.scenarios).unwrap();
    let examples = scenario_examples(&retriever, &toy.scenarios.pairs, 2).unwrap();
    assert!(examples.iter().all(|e| e.retrieved == 2));
    let mut cfg = TrainConfig::new(&[Objective::Ce]);
    cfg.steps = 400;
    cfg.adam.lr = 3e-3;
    pretrain_scenarios(&mut model, &examples, &cfg, None).unwrap();
    let correct = examples
        .iter()
        .filter(|e| {
            let input = model.prepare(&tokenize(&e.augmented), None).unwrap();
            detokenize(&model.generate(&input, 8).unwrap().tokens) == e.pair.label
        })
        .count();
    let acc = correct as f64 / examples.len() as f64;
    assert!(acc >= 0.95, "label accuracy {acc}");
}

#[test]
fn masked_label_recovery_trains_alongside_ce() {
    let toy = Toy::load();
    let mut model = toy.tiny(false);
    let retriever = Retriever::build(&model, &toy.scenarios).unwrap();
    let examples = scenario_examples(&retriever, &toy.scenarios.pairs, 3).unwrap();
    let mut cfg = TrainConfig::new(&[Objective::Ce, Objective::Rlm]);
    cfg.steps = 200;
    cfg.adam.lr = 3e-3;
    let report = pretrain_scenarios(&mut model, &examples, &cfg, None).unwrap();
    let first = &report.curve[0].terms;
    let last = &report.curve.last().unwrap().terms;
    for o in [Objective::Ce, Objective::Rlm] {
        assert!(last[&o] < 0.1 * first[&o], "{o:?}: {} -> {}", first[&o], last[&o]);
    }
}

#[test]
fn generation_reproduces_an_overfit_target() {
    let toy = Toy::load();
    let mut model = toy.tiny(true);
    let inst = toy.instances(&[Task::C]).into_iter().find(|i| !i.gold.agents.is_empty()).unwrap();
    let ctx = TaskContext {
        lexicon: Some(&toy.lexicon),
        retriever: None,
        k: 0,
        token_budget: 256,
    };
    let mut cfg = TrainConfig::new(&[Objective::Ce]);
    cfg.steps = 150;
    cfg.batch_size = 1;
    cfg.adam.lr = 3e-3;
    finetune(&mut model, std::slice::from_ref(&inst), &ctx, &cfg, None).unwrap();
    let p = predict(&model, &inst, &ctx, 64).unwrap();
    assert_eq!(tokenize(&p.raw_output), tokenize(&render_output(&inst.gold)));
    assert!(!p.malformed);
    assert_eq!(p.parsed, inst.gold);
}
