mod common;

use common::Toy;
use moral_events::banks::{insert_mention_tags, tag_mentions, MENTION_CLOSE, MENTION_OPEN};
use moral_events::memory::MwlForm;
use moral_events::model::{
    finetune, pretrain_words, task_input, task_terms, task_tokens, Model, ModelInput, Objective, Retriever,
    TaskContext, TrainConfig, BOS,
};
use moral_events::nn::Graph;
use moral_events::schema::Task;
use moral_events::tasks::{format_instance, render_output};
use moral_events::text::tokenize;
use moral_events::Error;

const PLAIN: &str = "the council met on tuesday to discuss the budget .";

fn logits(model: &Model, input: &ModelInput) -> Vec<f64> {
    let mut g = Graph::new(&model.store);
    let enc = model.encode(&mut g, input, false).unwrap();
    let dec = model.vocab.ids(&tokenize("<s> none"));
    let out = model.decode(&mut g, enc.h, &dec).unwrap();
    g.value(out).data().to_vec()
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn mention_input(toy: &Toy, model: &Model) -> ModelInput {
    let s = &toy.bank.train[0];
    let (tagged, mentions) = insert_mention_tags(&s.tokens, &s.mentions);
    model.from_tagged(&tagged, mentions).unwrap()
}

#[test]
fn same_seed_gives_bit_identical_logits() {
    let toy = Toy::load();
    let a = toy.tiny(true);
    let b = toy.tiny(true);
    let input = mention_input(&toy, &a);
    assert_eq!(bits(&logits(&a, &input)), bits(&logits(&b, &input)));
    assert_eq!(bits(&logits(&a, &input)), bits(&logits(&a, &input)));
    assert_eq!(a.snapshot_hash(), b.snapshot_hash());
}

#[test]
fn zero_mention_forward_ignores_memory() {
    let toy = Toy::load();
    let with = toy.tiny(true);
    let without = with.without_memory().unwrap();
    let tokens = tokenize(PLAIN);
    assert!(tag_mentions(&tokens, &toy.lexicon).is_empty());
    let a = with.tag_and_prepare(&tokens, &toy.lexicon).unwrap();
    let b = without.prepare(&tokens, None).unwrap();
    assert_eq!(a.ids, b.ids);
    assert_eq!(bits(&logits(&with, &a)), bits(&logits(&without, &b)));
}

#[test]
fn one_mention_gives_one_read_with_normalized_attention() {
    let toy = Toy::load();
    let model = toy.tiny(true);
    let s = toy.bank.train.iter().find(|s| s.mentions.len() == 1).expect("single-mention sentence");
    let (tagged, mentions) = insert_mention_tags(&s.tokens, &s.mentions);
    let input = model.from_tagged(&tagged, mentions).unwrap();
    let mut g = Graph::new(&model.store);
    let enc = model.encode(&mut g, &input, false).unwrap();
    assert_eq!(enc.read_mentions.len(), 1);
    assert!(enc.read.is_some());
    let alpha = model.memory_attention(&input).unwrap().unwrap();
    assert_eq!(alpha.rows(), 1);
    assert_eq!(alpha.cols(), toy.lexicon.len());
    let sum: f64 = alpha.row(0).iter().sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert!(alpha.row(0).iter().all(|&a| a > 0.0));
}

#[test]
fn memory_weights_get_no_gradient_without_mentions() {
    let toy = Toy::load();
    let model = toy.tiny(true);
    let input = model.tag_and_prepare(&tokenize(PLAIN), &toy.lexicon).unwrap();
    assert!(input.mentions.is_empty());
    let cfg = TrainConfig::new(&[Objective::Ce, Objective::Mwl, Objective::Mla]);
    let mut g = Graph::new(&model.store);
    let terms = task_terms(&model, &mut g, &input, &tokenize("none"), &cfg).unwrap();
    let total = terms.total(&mut g, &cfg).unwrap();
    let grads = g.backward(total).unwrap();
    let (w1, w2) = model.memory_weights();
    for p in [w1, w2] {
        if let Some(t) = grads.get(p) {
            assert!(t.data().iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn disabling_mla_removes_exactly_its_weighted_term() {
    let toy = Toy::load();
    let model = toy.tiny(true);
    let input = mention_input(&toy, &model);
    let target = tokenize("Care/Harm");
    let mut on = TrainConfig::new(&[Objective::Ce, Objective::Mwl, Objective::Mla]);
    on.objectives.set(Objective::Mla, Some(0.7));
    let off = TrainConfig::new(&[Objective::Ce, Objective::Mwl]);

    let mut g = Graph::new(&model.store);
    let t_on = task_terms(&model, &mut g, &input, &target, &on).unwrap();
    let total_on = t_on.total(&mut g, &on).unwrap();
    let mla = g.value(t_on.get(Objective::Mla).unwrap()).item();
    let total_on = g.value(total_on).item();

    let mut g = Graph::new(&model.store);
    let t_off = task_terms(&model, &mut g, &input, &target, &off).unwrap();
    assert!(t_off.get(Objective::Mla).is_none());
    let total_off = t_off.total(&mut g, &off).map(|n| g.value(n).item()).unwrap();
    assert!(mla > 0.0);
    assert!((total_on - total_off - 0.7 * mla).abs() < 1e-12);
}

#[test]
fn first_logged_loss_matches_independent_term_sum() {
    let toy = Toy::load();
    let mut model = toy.tiny(true);
    let instances = toy.instances(&[Task::A]);
    let ctx = TaskContext {
        lexicon: Some(&toy.lexicon),
        retriever: None,
        k: 0,
        token_budget: 256,
    };
    let mut cfg = TrainConfig::new(&[Objective::Ce, Objective::Mwl, Objective::Mla]);
    cfg.objectives.set(Objective::Mwl, Some(0.5));
    cfg.objectives.set(Objective::Mla, Some(2.0));
    cfg.steps = 1;
    cfg.batch_size = instances.len();

    let mut expected = 0.0;
    for inst in &instances {
        let input = task_input(&model, inst, &ctx).unwrap();
        let target = tokenize(&render_output(&inst.gold));
        let mut g = Graph::new(&model.store);
        let enc = model.encode(&mut g, &input, false).unwrap();
        let ce = model.sequence_loss(&mut g, enc.h, BOS, &target).unwrap();
        let mut sum = g.value(ce).item();
        if let Some(l) = model.memory_losses(&mut g, &enc, MwlForm::OneMinusAlpha).unwrap() {
            sum += 0.5 * g.value(l.mwl).item() + 2.0 * g.value(l.mla).item();
        }
        expected += sum;
    }
    expected /= instances.len() as f64;
    let report = finetune(&mut model, &instances, &ctx, &cfg, None).unwrap();
    assert_eq!(report.curve.len(), 1);
    assert!((report.curve[0].total - expected).abs() < 1e-10, "{} vs {expected}", report.curve[0].total);
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let toy = Toy::load();
    let model = toy.tiny(true);
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path()).unwrap();
    let back = Model::load(dir.path(), Some(&toy.lexicon)).unwrap();
    let input = mention_input(&toy, &model);
    assert_eq!(bits(&logits(&model, &input)), bits(&logits(&back, &input)));
    assert_eq!(model.snapshot_hash(), back.snapshot_hash());
    assert!(matches!(Model::load(dir.path(), None), Err(Error::Config(_))));
}

#[test]
fn mentions_without_memory_rows_are_skipped_and_counted() {
    let toy = Toy::load();
    let model = toy.tiny(true);
    // "blorp" is not in the lexicon; "betray" is.
    let tokens = [MENTION_OPEN, "blorp", MENTION_CLOSE, "did", MENTION_OPEN, "betray", MENTION_CLOSE, "."];
    let input = model.prepare(&tokens, Some(&toy.lexicon)).unwrap();
    assert_eq!(input.mentions.len(), 2);
    assert!(input.mentions[0].entry.is_none());
    assert!(input.mentions[1].entry.is_some());
    let mut g = Graph::new(&model.store);
    let enc = model.encode(&mut g, &input, false).unwrap();
    let l = model.memory_losses(&mut g, &enc, MwlForm::OneMinusAlpha).unwrap().unwrap();
    assert_eq!((l.used, l.skipped), (1, 1));
}

#[test]
fn malformed_tags_are_rejected() {
    let toy = Toy::load();
    let model = toy.tiny(false);
    for tokens in [
        vec![MENTION_OPEN, "a", MENTION_OPEN, "b", MENTION_CLOSE],
        vec!["a", MENTION_CLOSE],
        vec![MENTION_OPEN, "a"],
    ] {
        assert!(matches!(model.prepare(&tokens, None), Err(Error::Validation(_))), "{tokens:?}");
    }
    let long = vec!["the"; model.config.max_len + 1];
    assert!(matches!(model.prepare(&long, None), Err(Error::Validation(_))));
}

#[test]
fn zero_k_leaves_the_input_unaugmented() {
    let toy = Toy::load();
    let model = toy.tiny(false);
    let retriever = Retriever::build(&model, &toy.scenarios).unwrap();
    let inst = &toy.instances(&[Task::B])[0];
    let ctx = TaskContext {
        lexicon: None,
        retriever: Some(&retriever),
        k: 0,
        token_budget: 256,
    };
    assert_eq!(task_tokens(inst, &ctx).unwrap(), format_instance(inst, 256).unwrap());
    let ctx = TaskContext { k: 2, ..ctx };
    assert!(task_tokens(inst, &ctx).unwrap().len() > format_instance(inst, 256).unwrap().len());
}

#[test]
fn memory_stays_frozen_through_training() {
    let toy = Toy::load();
    let mut model = toy.tiny(true);
    let before = model.memory().unwrap().e.clone();
    let mut cfg = TrainConfig::new(&[Objective::Lm, Objective::Mv, Objective::Mwl, Objective::Mla]);
    cfg.steps = 10;
    cfg.batch_size = 4;
    let report = pretrain_words(&mut model, &toy.lexicon, &toy.bank.train, &cfg, None).unwrap();
    assert_eq!(report.memory_grad_checks, 10);
    let e = model.store.value(model.memory_param().unwrap());
    assert_eq!(bits(e.data()), bits(before.data()));
    assert!(report.curve.iter().all(|r| r.total.is_finite()));
}

#[test]
fn training_rejects_empty_or_misplaced_objectives() {
    let toy = Toy::load();
    let mut model = toy.tiny(true);
    let none = TrainConfig::new(&[]);
    assert!(matches!(
        pretrain_words(&mut model, &toy.lexicon, &toy.bank.train, &none, None),
        Err(Error::Config(_))
    ));
    let ce = TrainConfig::new(&[Objective::Ce]);
    assert!(matches!(
        pretrain_words(&mut model, &toy.lexicon, &toy.bank.train, &ce, None),
        Err(Error::Config(_))
    ));
    let mut bare = toy.tiny(false);
    let mwl = TrainConfig::new(&[Objective::Mwl]);
    assert!(matches!(
        pretrain_words(&mut bare, &toy.lexicon, &toy.bank.train, &mwl, None),
        Err(Error::Config(_))
    ));
}

#[test]
fn zero_steps_leave_parameters_untouched() {
    let toy = Toy::load();
    let mut model = toy.tiny(true);
    let before = model.snapshot_hash();
    let mut cfg = TrainConfig::new(&[Objective::Lm]);
    cfg.steps = 0;
    let report = pretrain_words(&mut model, &toy.lexicon, &toy.bank.train, &cfg, None).unwrap();
    assert_eq!(report.steps, 0);
    assert_eq!(model.snapshot_hash(), before);
}

#[test]
fn empty_input_decodes() {
    let toy = Toy::load();
    let model = toy.tiny(false);
    let input = model.prepare::<&str>(&[], None).unwrap();
    let gen = model.generate(&input, 5).unwrap();
    assert!(gen.tokens.len() <= 5);
}
