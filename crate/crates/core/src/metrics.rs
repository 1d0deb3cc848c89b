//! Evaluation measures for the three tasks.
//!
//! Participant names are compared after this normalization, applied in
//! order:
//!
//! 1. lowercase (Unicode);
//! 2. delete every ASCII punctuation character (`same-sex` becomes `samesex`);
//! 3. delete the whole words `a`, `an`, `the`;
//! 4. split on whitespace and rejoin with single spaces.
//!
//! Token F1 between two names counts common tokens as a multiset. Two empty
//! names score 1; one empty name scores 0.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{Display, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{EventStatus, Foundation, Morality, Task, TaskInstance, TriggerRef};
use crate::tasks::{Prediction, TaskOutput};

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances carrying the label.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelReport {
    /// Labels with gold support or at least one prediction, in label-space order.
    pub labels: Vec<LabelScores>,
    /// Per-label F1 weighted by gold support.
    pub weighted_f1: f64,
    /// Fraction of instances whose predicted set equals the gold set.
    pub accuracy: f64,
    /// Fraction of correct (instance, label) decisions over the label space.
    pub label_accuracy: f64,
}

/// Per-label precision, recall and F1 over parallel lists of label sets.
pub fn multilabel_prf<L: Ord + Display>(
    gold: &[BTreeSet<L>],
    pred: &[BTreeSet<L>],
    label_space: &[L],
) -> Result<MultiLabelReport> {
    if gold.len() != pred.len() {
        return Err(Error::Validation(format!(
            "{} gold instances but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let mut labels = Vec::new();
    let (mut weighted, mut total_support) = (0.0, 0usize);
    let mut correct_decisions = 0;
    for l in label_space {
        let (mut tp, mut fp, mut fnn) = (0, 0, 0);
        for (g, p) in gold.iter().zip(pred) {
            match (g.contains(l), p.contains(l)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fnn += 1,
                (false, false) => {}
            }
        }
        correct_decisions += gold.len() - fp - fnn;
        let support = tp + fnn;
        if support == 0 && fp == 0 {
            continue;
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, support);
        let f = f1(precision, recall);
        weighted += f * support as f64;
        total_support += support;
        labels.push(LabelScores {
            label: l.to_string(),
            precision,
            recall,
            f1: f,
            support,
        });
    }
    let exact = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    Ok(MultiLabelReport {
        labels,
        weighted_f1: if total_support == 0 { 0.0 } else { weighted / total_support as f64 },
        accuracy: ratio(exact, gold.len()),
        label_accuracy: ratio(correct_decisions, gold.len() * label_space.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

/// Micro precision/recall/F1 over per-instance referent sets. A prediction
/// counts only if the same instance's gold set contains it.
pub fn trigger_f1<R: Ord>(gold: &[BTreeSet<R>], pred: &[BTreeSet<R>]) -> Result<Prf> {
    if gold.len() != pred.len() {
        return Err(Error::Validation(format!(
            "{} gold instances but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let tp: usize = gold.iter().zip(pred).map(|(g, p)| g.intersection(p).count()).sum();
    let np: usize = pred.iter().map(|p| p.len()).sum();
    let ng: usize = gold.iter().map(|g| g.len()).sum();
    let (precision, recall) = (ratio(tp, np), ratio(tp, ng));
    Ok(Prf {
        precision,
        recall,
        f1: f1(precision, recall),
        true_positives: tp,
        predicted: np,
        gold: ng,
    })
}

/// Fraction of instances whose predicted set equals the gold set.
pub fn set_exact_match<R: Ord>(gold: &[BTreeSet<R>], pred: &[BTreeSet<R>]) -> f64 {
    ratio(gold.iter().zip(pred).filter(|(g, p)| g == p).count(), gold.len())
}

/// Name normalizer for participant matching; see the module docs.
pub fn normalize_name(s: &str) -> String {
    let lower = s.to_lowercase();
    let stripped: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token F1 between two already normalized names.
pub fn token_f1(gold: &str, pred: &str) -> f64 {
    let g: Vec<&str> = gold.split_whitespace().collect();
    let p: Vec<&str> = pred.split_whitespace().collect();
    if g.is_empty() || p.is_empty() {
        return if g.is_empty() && p.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    f1(ratio(common, p.len()), ratio(common, g.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScores {
    pub exact_match: f64,
    pub token_f1: f64,
}

/// Greedy one-to-one assignment of predictions to golds by highest token
/// F1; among equal F1 an exact match wins, then the lower gold and
/// prediction positions. Returns `(gold, pred, f1, exact)` per pair.
pub fn greedy_assignment(gold: &[String], pred: &[String]) -> Vec<(usize, usize, f64, bool)> {
    let mut cands = Vec::new();
    for (i, g) in gold.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            let f = token_f1(g, p);
            if f > 0.0 {
                cands.push((i, j, f, g == p));
            }
        }
    }
    cands.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(b.3.cmp(&a.3))
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    let (mut used_g, mut used_p) = (vec![false; gold.len()], vec![false; pred.len()]);
    let mut out = Vec::new();
    for c in cands {
        if !used_g[c.0] && !used_p[c.1] {
            used_g[c.0] = true;
            used_p[c.1] = true;
            out.push(c);
        }
    }
    out
}

/// Span exact match and token F1 between two name sets, normalized first.
/// Both are averaged over `max(|gold|, |pred|)`; two empty sets score 1.
pub fn span_em_and_token_f1(gold: &BTreeSet<String>, pred: &BTreeSet<String>) -> SpanScores {
    let g: Vec<String> = gold.iter().map(|s| normalize_name(s)).collect();
    let p: Vec<String> = pred.iter().map(|s| normalize_name(s)).collect();
    let denom = g.len().max(p.len());
    if denom == 0 {
        return SpanScores {
            exact_match: 1.0,
            token_f1: 1.0,
        };
    }
    let pairs = greedy_assignment(&g, &p);
    SpanScores {
        exact_match: pairs.iter().filter(|x| x.3).count() as f64 / denom as f64,
        token_f1: pairs.iter().map(|x| x.2).sum::<f64>() / denom as f64,
    }
}

fn mean_span(scores: &[SpanScores]) -> SpanScores {
    let n = scores.len().max(1) as f64;
    SpanScores {
        exact_match: scores.iter().map(|s| s.exact_match).sum::<f64>() / n,
        token_f1: scores.iter().map(|s| s.token_f1).sum::<f64>() / n,
    }
}

/// Scores of one task over aligned gold and predicted outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub n_instances: usize,
    /// Foundations (Task A) or moralities (Task C).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<MultiLabelReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<Prf>,
    /// Sentences whose trigger set is predicted exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_exact_match: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<SpanScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patients: Option<SpanScores>,
    pub malformed: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_status: BTreeMap<EventStatus, MetricReport>,
}

/// Score aligned outputs. `malformed` is carried through unchanged.
pub fn score_outputs(task: Task, gold: &[&TaskOutput], pred: &[&TaskOutput], malformed: usize) -> Result<MetricReport> {
    if gold.len() != pred.len() {
        return Err(Error::Validation(format!(
            "{} gold instances but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let mut r = MetricReport {
        task,
        n_instances: gold.len(),
        labels: None,
        trigger: None,
        trigger_exact_match: None,
        agents: None,
        patients: None,
        malformed,
        by_status: BTreeMap::new(),
    };
    match task {
        Task::A => {
            let g: Vec<_> = gold.iter().map(|o| o.foundations.clone()).collect();
            let p: Vec<_> = pred.iter().map(|o| o.foundations.clone()).collect();
            r.labels = Some(multilabel_prf(&g, &p, &Foundation::ALL)?);
        }
        Task::B => {
            let g: Vec<BTreeSet<TriggerRef>> = gold.iter().map(|o| o.triggers.clone()).collect();
            let p: Vec<BTreeSet<TriggerRef>> = pred.iter().map(|o| o.triggers.clone()).collect();
            r.trigger = Some(trigger_f1(&g, &p)?);
            r.trigger_exact_match = Some(set_exact_match(&g, &p));
        }
        Task::C => {
            let g: Vec<_> = gold.iter().map(|o| o.moralities.clone()).collect();
            let p: Vec<_> = pred.iter().map(|o| o.moralities.clone()).collect();
            r.labels = Some(multilabel_prf(&g, &p, &Morality::ALL)?);
            let ag: Vec<SpanScores> = gold
                .iter()
                .zip(pred)
                .map(|(g, p)| span_em_and_token_f1(&g.agents, &p.agents))
                .collect();
            let pa: Vec<SpanScores> = gold
                .iter()
                .zip(pred)
                .map(|(g, p)| span_em_and_token_f1(&g.patients, &p.patients))
                .collect();
            r.agents = Some(mean_span(&ag));
            r.patients = Some(mean_span(&pa));
        }
    }
    Ok(r)
}

/// Align predictions to gold instances by id and score them.
pub fn evaluate(task: Task, gold: &[TaskInstance], preds: &[Prediction], by_status: bool) -> Result<MetricReport> {
    if gold.len() != preds.len() {
        return Err(Error::Validation(format!(
            "{} gold instances but {} predictions",
            gold.len(),
            preds.len()
        )));
    }
    let by_id: HashMap<&str, &Prediction> = preds.iter().map(|p| (p.instance_id.as_str(), p)).collect();
    if by_id.len() != preds.len() {
        return Err(Error::Validation("duplicate instance id in predictions".into()));
    }
    let mut aligned = Vec::with_capacity(gold.len());
    for g in gold {
        if g.task != task {
            return Err(Error::Validation(format!("instance {} is task {}, not {task}", g.id, g.task)));
        }
        let p = by_id
            .get(g.id.as_str())
            .ok_or_else(|| Error::Validation(format!("no prediction for instance {}", g.id)))?;
        if p.task != task {
            return Err(Error::Validation(format!("prediction {} is task {}", p.instance_id, p.task)));
        }
        aligned.push((g, *p));
    }
    let malformed = aligned.iter().filter(|(_, p)| p.malformed).count();
    let go: Vec<&TaskOutput> = aligned.iter().map(|(g, _)| &g.gold).collect();
    let po: Vec<&TaskOutput> = aligned.iter().map(|(_, p)| &p.parsed).collect();
    let mut report = score_outputs(task, &go, &po, malformed)?;
    if by_status {
        report.by_status = breakdown_by_status(task, &aligned)?;
    }
    Ok(report)
}

/// Scores recomputed within each gold event status; empty partitions are
/// omitted.
///
/// Tasks A and C partition instances by their event's status. Task B
/// partitions gold triggers by status; a sentence enters partition `s` when
/// it has a gold trigger of status `s`, and its spurious predictions count
/// in every partition it enters.
pub fn breakdown_by_status(
    task: Task,
    aligned: &[(&TaskInstance, &Prediction)],
) -> Result<BTreeMap<EventStatus, MetricReport>> {
    let mut out = BTreeMap::new();
    for s in EventStatus::ALL {
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        let mut malformed = 0;
        for (g, p) in aligned {
            match task {
                Task::A | Task::C => {
                    if g.status == Some(s) {
                        gold.push(g.gold.clone());
                        pred.push(p.parsed.clone());
                        malformed += p.malformed as usize;
                    }
                }
                Task::B => {
                    let mut go = TaskOutput::empty(Task::B);
                    go.triggers = g
                        .trigger_statuses
                        .iter()
                        .filter(|(_, st)| **st == s)
                        .map(|(t, _)| t.clone())
                        .collect();
                    if go.triggers.is_empty() {
                        continue;
                    }
                    let mut po = TaskOutput::empty(Task::B);
                    po.triggers = p
                        .parsed
                        .triggers
                        .iter()
                        .filter(|t| g.trigger_statuses.get(t).is_none_or(|st| *st == s))
                        .cloned()
                        .collect();
                    gold.push(go);
                    pred.push(po);
                    malformed += p.malformed as usize;
                }
            }
        }
        if gold.is_empty() {
            continue;
        }
        let gr: Vec<&TaskOutput> = gold.iter().collect();
        let pr: Vec<&TaskOutput> = pred.iter().collect();
        out.insert(s, score_outputs(task, &gr, &pr, malformed)?);
    }
    Ok(out)
}

/// Fixed-width text rendering of a report.
pub fn render_table(r: &MetricReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "task {}  instances {}  malformed {}", r.task, r.n_instances, r.malformed);
    if let Some(l) = &r.labels {
        let _ = writeln!(s, "{:<24} {:>9} {:>9} {:>9} {:>8}", "label", "precision", "recall", "f1", "support");
        for x in &l.labels {
            let _ = writeln!(
                s,
                "{:<24} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                x.label, x.precision, x.recall, x.f1, x.support
            );
        }
        let _ = writeln!(s, "{:<24} {:>9.4}", "weighted f1", l.weighted_f1);
        let _ = writeln!(s, "{:<24} {:>9.4}", "accuracy", l.accuracy);
    }
    if let Some(t) = &r.trigger {
        let _ = writeln!(
            s,
            "{:<24} {:>9.4} {:>9.4} {:>9.4}",
            "trigger p/r/f1", t.precision, t.recall, t.f1
        );
    }
    if let Some(em) = r.trigger_exact_match {
        let _ = writeln!(s, "{:<24} {:>9.4}", "trigger exact match", em);
    }
    for (name, v) in [("agents", &r.agents), ("patients", &r.patients)] {
        if let Some(v) = v {
            let _ = writeln!(s, "{:<24} {:>9.4} {:>9.4}", format!("{name} em/token f1"), v.exact_match, v.token_f1);
        }
    }
    for (st, sub) in &r.by_status {
        let _ = writeln!(s, "-- status {st}");
        s.push_str(&render_table(sub));
    }
    s
}
