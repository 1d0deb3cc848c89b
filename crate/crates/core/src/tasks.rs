//! Input templates, output linearization and parsing, and the dictionary
//! counting baseline.
//!
//! Model input for one instance:
//!
//! ```text
//! <Title> title </Title> <News> prev </News> <Target> target </Target> <News> next </News>
//! ```
//!
//! Tasks A and C wrap the conditioning span of the target in
//! `<Event> ... </Event>`. Absent or fully truncated context blocks are
//! omitted together with their tags.
//!
//! Decoder targets:
//!
//! | task | output |
//! |------|--------|
//! | A | `Care/Harm; Fairness/Cheating` |
//! | B | `ruled#1; invalidated#1` |
//! | C | `agents: X; Y \| patients: Z \| morality: Care; Fairness` |
//!
//! Empty sets render as `none`.

use std::collections::BTreeSet;
use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::banks::{tag_mentions, Lexicon};
use crate::error::{Error, Result};
use crate::schema::{Foundation, Morality, Task, TaskInstance, TriggerRef};

pub const TITLE_OPEN: &str = "<Title>";
pub const TITLE_CLOSE: &str = "</Title>";
pub const NEWS_OPEN: &str = "<News>";
pub const NEWS_CLOSE: &str = "</News>";
pub const TARGET_OPEN: &str = "<Target>";
pub const TARGET_CLOSE: &str = "</Target>";
pub const EVENT_OPEN: &str = "<Event>";
pub const EVENT_CLOSE: &str = "</Event>";

/// Default cap on formatted input length, in tokens.
pub const DEFAULT_TOKEN_BUDGET: usize = 256;

/// Rendering of the empty label set.
pub const NONE: &str = "none";
const JOIN: &str = "; ";

/// Structured output of one task instance; only the task's fields are used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskOutput {
    pub task: Task,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub foundations: BTreeSet<Foundation>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub triggers: BTreeSet<TriggerRef>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub agents: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub patients: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub moralities: BTreeSet<Morality>,
}

impl TaskOutput {
    pub fn empty(task: Task) -> Self {
        TaskOutput {
            task,
            foundations: BTreeSet::new(),
            triggers: BTreeSet::new(),
            agents: BTreeSet::new(),
            patients: BTreeSet::new(),
            moralities: BTreeSet::new(),
        }
    }
}

/// Join labels with `"; "` in iteration order, or `none` when empty.
pub fn linearize_labels<I, T>(labels: I) -> String
where
    I: IntoIterator<Item = T>,
    T: Display,
{
    let parts: Vec<String> = labels.into_iter().map(|l| l.to_string()).collect();
    if parts.is_empty() {
        NONE.to_string()
    } else {
        parts.join(JOIN)
    }
}

/// Decoder target text for `output`.
pub fn render_output(output: &TaskOutput) -> String {
    match output.task {
        Task::A => linearize_labels(&output.foundations),
        Task::B => linearize_labels(&output.triggers),
        Task::C => format!(
            "agents: {} | patients: {} | morality: {}",
            linearize_labels(&output.agents),
            linearize_labels(&output.patients),
            linearize_labels(&output.moralities)
        ),
    }
}

/// Result of parsing decoder text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedOutput {
    pub output: TaskOutput,
    pub malformed: bool,
    /// Label strings that did not name a known label.
    pub dropped: usize,
}

fn split_list(text: &str) -> impl Iterator<Item = &str> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case(NONE))
}

fn parse_labels<T: std::str::FromStr + Ord>(text: &str, dropped: &mut usize) -> BTreeSet<T> {
    let mut out = BTreeSet::new();
    for part in split_list(text) {
        match part.parse() {
            Ok(v) => {
                out.insert(v);
            }
            Err(_) => *dropped += 1,
        }
    }
    out
}

/// Parse decoder text. Never fails: unknown labels are dropped and
/// counted, and structurally broken text sets `malformed`.
pub fn parse_output(text: &str, task: Task) -> ParsedOutput {
    let mut out = TaskOutput::empty(task);
    let mut dropped = 0;
    let text = text.trim();
    if text.is_empty() {
        return ParsedOutput {
            output: out,
            malformed: true,
            dropped,
        };
    }
    let mut malformed = false;
    match task {
        Task::A => out.foundations = parse_labels(text, &mut dropped),
        Task::B => out.triggers = parse_labels(text, &mut dropped),
        Task::C => {
            let mut seen = [false; 3];
            for field in text.split('|') {
                let Some((key, value)) = field.split_once(':') else {
                    malformed = true;
                    continue;
                };
                match key.trim().to_lowercase().as_str() {
                    "agents" => {
                        seen[0] = true;
                        out.agents = split_list(value).map(str::to_string).collect();
                    }
                    "patients" => {
                        seen[1] = true;
                        out.patients = split_list(value).map(str::to_string).collect();
                    }
                    "morality" => {
                        seen[2] = true;
                        out.moralities = parse_labels(value, &mut dropped);
                    }
                    _ => malformed = true,
                }
            }
            malformed |= !seen.iter().all(|&s| s);
        }
    }
    ParsedOutput {
        output: out,
        malformed,
        dropped,
    }
}

fn push_block(out: &mut Vec<String>, open: &str, body: &[String], close: &str) {
    out.push(open.to_string());
    out.extend(body.iter().cloned());
    out.push(close.to_string());
}

/// Render the model input tokens of `inst` within `budget` tokens.
///
/// Overlong input is cut from the tail of the succeeding sentence, then
/// the preceding sentence, then the title. The target sentence is never
/// cut; if it alone exceeds the budget the call fails.
pub fn format_instance(inst: &TaskInstance, budget: usize) -> Result<Vec<String>> {
    let mut target: Vec<String> = Vec::with_capacity(inst.target.len() + 2);
    match (inst.task.is_conditioned(), inst.conditioning_span) {
        (true, Some(span)) => {
            for (i, t) in inst.target.iter().enumerate() {
                if i == span.start {
                    target.push(EVENT_OPEN.to_string());
                }
                target.push(t.clone());
                if i + 1 == span.end {
                    target.push(EVENT_CLOSE.to_string());
                }
            }
        }
        (true, None) => {
            return Err(Error::Validation(format!(
                "instance {} of task {} has no conditioning span",
                inst.id, inst.task
            )))
        }
        (false, _) => target.extend(inst.target.iter().cloned()),
    }
    let fixed = target.len() + 2;
    if fixed > budget {
        return Err(Error::Validation(format!(
            "instance {}: target sentence needs {fixed} tokens, budget is {budget}",
            inst.id
        )));
    }
    let mut title = inst.title.clone();
    let mut prev = inst.preceding.clone().unwrap_or_default();
    let mut next = inst.succeeding.clone().unwrap_or_default();
    let cost = |b: &Vec<String>| if b.is_empty() { 0 } else { b.len() + 2 };
    let mut excess = (fixed + cost(&title) + cost(&prev) + cost(&next)).saturating_sub(budget);
    for block in [&mut next, &mut prev, &mut title] {
        if excess == 0 {
            break;
        }
        if block.len() > excess {
            block.truncate(block.len() - excess);
            excess = 0;
        } else {
            excess = excess.saturating_sub(cost(block));
            block.clear();
        }
    }
    let mut out = Vec::with_capacity(budget);
    if !title.is_empty() {
        push_block(&mut out, TITLE_OPEN, &title, TITLE_CLOSE);
    }
    if !prev.is_empty() {
        push_block(&mut out, NEWS_OPEN, &prev, NEWS_CLOSE);
    }
    push_block(&mut out, TARGET_OPEN, &target, TARGET_CLOSE);
    if !next.is_empty() {
        push_block(&mut out, NEWS_OPEN, &next, NEWS_CLOSE);
    }
    debug_assert!(out.len() <= budget);
    Ok(out)
}

/// Top three foundations by lexicon-mention count over every word of the
/// instance window, highest first, ties in canonical order. A mention adds
/// one to each foundation its entry carries.
pub fn dictionary_baseline(inst: &TaskInstance, lexicon: &Lexicon) -> Vec<Foundation> {
    let tokens: Vec<&String> = inst.all_tokens().collect();
    let mut counts = [0usize; 5];
    for m in tag_mentions(&tokens, lexicon) {
        for f in lexicon.entry(m.entry).foundations() {
            counts[f.index()] += 1;
        }
    }
    let mut ranked: Vec<Foundation> = Foundation::ALL
        .into_iter()
        .filter(|f| counts[f.index()] > 0)
        .collect();
    ranked.sort_by(|a, b| counts[b.index()].cmp(&counts[a.index()]).then(a.cmp(b)));
    ranked.truncate(3);
    ranked
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub task: Task,
    pub raw_output: String,
    pub parsed: TaskOutput,
    pub malformed: bool,
    #[serde(default)]
    pub truncated: bool,
}

impl Prediction {
    pub fn from_raw(instance_id: impl Into<String>, task: Task, raw: &str, truncated: bool) -> Self {
        let p = parse_output(raw, task);
        Prediction {
            instance_id: instance_id.into(),
            task,
            raw_output: raw.to_string(),
            parsed: p.output,
            malformed: p.malformed,
            truncated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Span;
    use std::collections::BTreeMap;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn inst(task: Task) -> TaskInstance {
        TaskInstance {
            id: "x:1".into(),
            article_id: "x".into(),
            task,
            sentence_index: 1,
            title: words("Court ruling"),
            preceding: Some(words("It was a long day .")),
            target: words("The court invalidated a law on Friday ."),
            succeeding: Some(words("Protests followed .")),
            conditioning_span: Some(Span::new(2, 5)),
            gold: TaskOutput::empty(task),
            status: None,
            trigger_statuses: BTreeMap::new(),
        }
    }

    #[test]
    fn task_b_has_no_event_tags() {
        let mut i = inst(Task::B);
        i.conditioning_span = None;
        let f = format_instance(&i, 256).unwrap();
        assert!(!f.iter().any(|t| t == EVENT_OPEN || t == EVENT_CLOSE));
    }

    #[test]
    fn task_a_wraps_span() {
        let f = format_instance(&inst(Task::A), 256).unwrap().join(" ");
        assert!(f.contains("<Event> invalidated a law </Event>"), "{f}");
    }

    #[test]
    fn missing_preceding_drops_block() {
        let mut i = inst(Task::A);
        i.preceding = None;
        let f = format_instance(&i, 256).unwrap();
        assert_eq!(f.iter().filter(|t| *t == NEWS_OPEN).count(), 1);
        assert_eq!(f[4], TARGET_OPEN);
    }

    #[test]
    fn budget_truncates_context_then_fails_on_target() {
        let i = inst(Task::A);
        let full = format_instance(&i, 256).unwrap();
        for budget in 12..=full.len() {
            let f = format_instance(&i, budget).unwrap();
            assert!(f.len() <= budget, "{budget}: {f:?}");
            assert!(f.join(" ").contains("<Target> The court <Event>"));
        }
        assert!(format_instance(&i, 11).is_err());
    }

    #[test]
    fn linearize_is_canonical() {
        let s: BTreeSet<Morality> = [Morality::Fairness, Morality::Care].into();
        assert_eq!(linearize_labels(&s), "Care; Fairness");
        let f: BTreeSet<Foundation> = [Foundation::CareHarm].into();
        assert_eq!(linearize_labels(&f), "Care/Harm");
        assert_eq!(linearize_labels(BTreeSet::<Morality>::new()), "none");
    }

    #[test]
    fn exhaustive_roundtrips() {
        for mask in 0u32..1 << 10 {
            let mut o = TaskOutput::empty(Task::C);
            o.moralities = Morality::ALL
                .into_iter()
                .filter(|m| mask >> m.index() & 1 == 1)
                .collect();
            let p = parse_output(&render_output(&o), Task::C);
            assert_eq!(p.output, o);
            assert!(!p.malformed);
        }
        for mask in 0u32..1 << 5 {
            let mut o = TaskOutput::empty(Task::A);
            o.foundations = Foundation::ALL
                .into_iter()
                .filter(|f| mask >> f.index() & 1 == 1)
                .collect();
            let p = parse_output(&render_output(&o), Task::A);
            assert_eq!(p.output, o);
        }
    }

    #[test]
    fn parses_task_c_record() {
        let p = parse_output(
            "agents: Supreme Court of the United States | patients: Same-Sex Couples | morality: Fairness; Care",
            Task::C,
        );
        assert!(!p.malformed);
        assert_eq!(p.output.agents, ["Supreme Court of the United States".to_string()].into());
        assert_eq!(p.output.patients, ["Same-Sex Couples".to_string()].into());
        assert_eq!(p.output.moralities, [Morality::Care, Morality::Fairness].into());
    }

    #[test]
    fn parse_is_total() {
        let p = parse_output("", Task::C);
        assert!(p.malformed);
        assert_eq!(p.output, TaskOutput::empty(Task::C));
        let p = parse_output("Care/Harm; Care/Harm; Kindness", Task::A);
        assert_eq!(p.output.foundations.len(), 1);
        assert_eq!(p.dropped, 1);
        let p = parse_output("ruled # 1;  invalidated#2 ; junk", Task::B);
        assert_eq!(p.output.triggers.len(), 2);
        assert_eq!(p.dropped, 1);
        assert!(parse_output("agents: a | morality: Care", Task::C).malformed);
    }

    #[test]
    fn baseline_counts_and_caps() {
        let lex = Lexicon::from_pairs([
            ("kill", [Morality::Harm].into()),
            ("hurt", [Morality::Harm].into()),
            ("fair", [Morality::Fairness].into()),
            ("loyal", [Morality::Loyalty].into()),
            ("obey", [Morality::Authority].into()),
        ])
        .unwrap();
        let mut i = inst(Task::A);
        i.title = words("they kill and hurt");
        i.preceding = Some(words("a fair deal"));
        i.target = words("nothing here");
        i.succeeding = None;
        assert_eq!(
            dictionary_baseline(&i, &lex),
            vec![Foundation::CareHarm, Foundation::FairnessCheating]
        );
        i.succeeding = Some(words("loyal people obey"));
        assert_eq!(dictionary_baseline(&i, &lex).len(), 3);
        i.title = words("plain");
        i.preceding = None;
        i.succeeding = None;
        assert!(dictionary_baseline(&i, &lex).is_empty());
    }
}
