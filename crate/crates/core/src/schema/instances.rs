use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Article, EventStatus, Span};
use crate::tasks::TaskOutput;

/// The three extraction tasks: foundation prediction (A), trigger
/// detection (B) and argument extraction (C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    A,
    B,
    C,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::A, Task::B, Task::C];

    pub fn is_conditioned(self) -> bool {
        matches!(self, Task::A | Task::C)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "A" | "a" => Ok(Task::A),
            "B" | "b" => Ok(Task::B),
            "C" | "c" => Ok(Task::C),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// A trigger named by its word and 1-based occurrence among identical
/// tokens of the target sentence, rendered `word#k`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriggerRef {
    pub word: String,
    pub occurrence: usize,
}

impl TriggerRef {
    pub fn new(word: impl Into<String>, occurrence: usize) -> Self {
        TriggerRef {
            word: word.into(),
            occurrence,
        }
    }

    /// Referent for token `index` of `tokens`.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], index: usize) -> Self {
        let word = tokens[index].as_ref();
        let occurrence = tokens[..=index]
            .iter()
            .filter(|t| t.as_ref() == word)
            .count();
        TriggerRef::new(word, occurrence)
    }

    /// Token index this referent points to, if it exists in `tokens`.
    pub fn resolve<S: AsRef<str>>(&self, tokens: &[S]) -> Option<usize> {
        tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.as_ref() == self.word)
            .nth(self.occurrence.checked_sub(1)?)
            .map(|(i, _)| i)
    }
}

impl fmt::Display for TriggerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.word, self.occurrence)
    }
}

impl FromStr for TriggerRef {
    type Err = String;

    /// Parses `word#k`, tolerating whitespace around `#`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (w, k) = s
            .trim()
            .rsplit_once('#')
            .ok_or_else(|| format!("trigger {s:?} lacks '#'"))?;
        let w = w.trim();
        let k: usize = k.trim().parse().map_err(|_| format!("bad occurrence in {s:?}"))?;
        if w.is_empty() || k == 0 {
            return Err(format!("bad trigger {s:?}"));
        }
        Ok(TriggerRef::new(w, k))
    }
}

impl Serialize for TriggerRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TriggerRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A four-sentence document window plus task conditioning and gold labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub article_id: String,
    pub task: Task,
    pub sentence_index: usize,
    pub title: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preceding: Option<Vec<String>>,
    pub target: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub succeeding: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning_span: Option<Span>,
    pub gold: TaskOutput,
    /// Gold event status (Tasks A and C).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<EventStatus>,
    /// Status of each gold trigger (Task B).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trigger_statuses: BTreeMap<TriggerRef, EventStatus>,
}

impl TaskInstance {
    /// All words of the window, title first.
    pub fn all_tokens(&self) -> impl Iterator<Item = &String> {
        self.title
            .iter()
            .chain(self.preceding.iter().flatten())
            .chain(self.target.iter())
            .chain(self.succeeding.iter().flatten())
    }
}

/// Build the task instances of one validated article.
///
/// Task B yields one instance per sentence; Tasks A and C one per event.
pub fn build_task_instances(article: &Article, task: Task) -> Vec<TaskInstance> {
    let title = article.title_tokens();
    let n = article.sentences.len();
    let window = |i: usize| {
        (
            i.checked_sub(1).map(|p| article.sentences[p].clone()),
            article.sentences[i].clone(),
            (i + 1 < n).then(|| article.sentences[i + 1].clone()),
        )
    };
    match task {
        Task::B => (0..n)
            .map(|i| {
                let (preceding, target, succeeding) = window(i);
                let mut gold = TaskOutput::empty(Task::B);
                let mut trigger_statuses = BTreeMap::new();
                for ae in article.events.iter().filter(|e| e.sentence_index == i) {
                    let r = TriggerRef::from_tokens(&target, ae.event.trigger);
                    trigger_statuses.entry(r.clone()).or_insert(ae.event.status);
                    gold.triggers.insert(r);
                }
                TaskInstance {
                    id: format!("{}:{}", article.id, i),
                    article_id: article.id.clone(),
                    task,
                    sentence_index: i,
                    title: title.clone(),
                    preceding,
                    target,
                    succeeding,
                    conditioning_span: None,
                    gold,
                    status: None,
                    trigger_statuses,
                }
            })
            .collect(),
        Task::A | Task::C => article
            .events
            .iter()
            .enumerate()
            .map(|(k, ae)| {
                let (preceding, target, succeeding) = window(ae.sentence_index);
                let ev = &ae.event;
                let mut gold = TaskOutput::empty(task);
                if task == Task::A {
                    gold.foundations = ev.foundations();
                } else {
                    gold.agents = ev.agents.iter().map(|e| e.canonical_name.clone()).collect();
                    gold.patients = ev.patients.iter().map(|e| e.canonical_name.clone()).collect();
                    gold.moralities = ev.moralities.clone();
                }
                TaskInstance {
                    id: format!("{}:{}:e{}", article.id, ae.sentence_index, k),
                    article_id: article.id.clone(),
                    task,
                    sentence_index: ae.sentence_index,
                    title: title.clone(),
                    preceding,
                    target,
                    succeeding,
                    conditioning_span: Some(ev.event_span),
                    gold,
                    status: Some(ev.status),
                    trigger_statuses: BTreeMap::new(),
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigger_ref_round_trip() {
        let toks = ["a", "ruled", "b", "ruled"];
        let r = TriggerRef::from_tokens(&toks, 3);
        assert_eq!(r.to_string(), "ruled#2");
        assert_eq!(r.resolve(&toks), Some(3));
        assert_eq!("ruled # 2".parse::<TriggerRef>().unwrap(), r);
        assert_eq!(TriggerRef::new("ruled", 3).resolve(&toks), None);
        assert!("ruled#0".parse::<TriggerRef>().is_err());
    }
}
