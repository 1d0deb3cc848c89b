//! Articles, entities and moral events, plus corpus ingestion and splitting.

mod instances;
mod io;
mod split;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use instances::{build_task_instances, Task, TaskInstance, TriggerRef};
pub use io::{load_corpus, parse_corpus, write_corpus, CORPUS_SCHEMA};
pub use split::{split_corpus, CorpusSplit, SplitBoundaries};

/// One of the ten moralities: a polarity of one of the five foundations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Morality {
    Care,
    Harm,
    Fairness,
    Cheating,
    Loyalty,
    Betrayal,
    Authority,
    Subversion,
    Sanctity,
    Degradation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Foundation {
    #[serde(rename = "Care/Harm")]
    CareHarm,
    #[serde(rename = "Fairness/Cheating")]
    FairnessCheating,
    #[serde(rename = "Loyalty/Betrayal")]
    LoyaltyBetrayal,
    #[serde(rename = "Authority/Subversion")]
    AuthoritySubversion,
    #[serde(rename = "Sanctity/Degradation")]
    SanctityDegradation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Virtue,
    Vice,
}

impl Morality {
    pub const ALL: [Morality; 10] = [
        Morality::Care,
        Morality::Harm,
        Morality::Fairness,
        Morality::Cheating,
        Morality::Loyalty,
        Morality::Betrayal,
        Morality::Authority,
        Morality::Subversion,
        Morality::Sanctity,
        Morality::Degradation,
    ];

    /// Position in the canonical enumeration, `0..10`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn foundation(self) -> Foundation {
        morality_to_foundation(self)
    }

    pub fn polarity(self) -> Polarity {
        if self.index() % 2 == 0 {
            Polarity::Virtue
        } else {
            Polarity::Vice
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Morality::Care => "Care",
            Morality::Harm => "Harm",
            Morality::Fairness => "Fairness",
            Morality::Cheating => "Cheating",
            Morality::Loyalty => "Loyalty",
            Morality::Betrayal => "Betrayal",
            Morality::Authority => "Authority",
            Morality::Subversion => "Subversion",
            Morality::Sanctity => "Sanctity",
            Morality::Degradation => "Degradation",
        }
    }
}

/// Map a morality to the foundation that owns it.
pub fn morality_to_foundation(m: Morality) -> Foundation {
    Foundation::ALL[m.index() / 2]
}

impl Foundation {
    pub const ALL: [Foundation; 5] = [
        Foundation::CareHarm,
        Foundation::FairnessCheating,
        Foundation::LoyaltyBetrayal,
        Foundation::AuthoritySubversion,
        Foundation::SanctityDegradation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn virtue(self) -> Morality {
        Morality::ALL[self.index() * 2]
    }

    pub fn vice(self) -> Morality {
        Morality::ALL[self.index() * 2 + 1]
    }

    pub fn moralities(self) -> [Morality; 2] {
        [self.virtue(), self.vice()]
    }

    pub fn name(self) -> &'static str {
        match self {
            Foundation::CareHarm => "Care/Harm",
            Foundation::FairnessCheating => "Fairness/Cheating",
            Foundation::LoyaltyBetrayal => "Loyalty/Betrayal",
            Foundation::AuthoritySubversion => "Authority/Subversion",
            Foundation::SanctityDegradation => "Sanctity/Degradation",
        }
    }
}

impl fmt::Display for Morality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Foundation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Morality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        Morality::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| format!("unknown morality {t:?}"))
    }
}

impl FromStr for Foundation {
    type Err = String;

    /// Accepts `Care/Harm` and the dashed `care-harm` spelling.
    fn from_str(s: &str) -> Result<Self, String> {
        let t: String = s.trim().chars().filter(|c| !c.is_whitespace()).collect();
        let t = t.replace('-', "/");
        Foundation::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(&t))
            .ok_or_else(|| format!("unknown foundation {:?}", s.trim()))
    }
}

/// Factuality of a moral event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventStatus {
    Actual,
    Intentional,
    Speculative,
}

impl EventStatus {
    pub const ALL: [EventStatus; 3] = [
        EventStatus::Actual,
        EventStatus::Intentional,
        EventStatus::Speculative,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    Person,
    Organization,
    GeoPolitical,
    Other,
}

/// Binary ideology coding of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OutletIdeology {
    Left,
    Center,
    Right,
}

impl fmt::Display for OutletIdeology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for EventStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub canonical_name: String,
    pub entity_type: EntityType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideology: Option<Side>,
}

impl Entity {
    pub fn new(name: impl Into<String>, entity_type: EntityType) -> Self {
        Entity {
            canonical_name: name.into(),
            entity_type,
            ideology: None,
        }
    }
}

/// Half-open token range `[start, end)` within one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoralEvent {
    pub agents: Vec<Entity>,
    pub patients: Vec<Entity>,
    pub event_span: Span,
    pub trigger: usize,
    pub moralities: BTreeSet<Morality>,
    pub status: EventStatus,
}

impl MoralEvent {
    pub fn foundations(&self) -> BTreeSet<Foundation> {
        self.moralities.iter().map(|m| m.foundation()).collect()
    }
}

/// A moral event anchored to a sentence of its article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedEvent {
    pub sentence_index: usize,
    #[serde(flatten)]
    pub event: MoralEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub sentences: Vec<Vec<String>>,
    pub outlet: String,
    pub outlet_ideology: OutletIdeology,
    pub publish_date: NaiveDate,
    pub story_id: String,
    pub events: Vec<AnnotatedEvent>,
}

impl Article {
    pub fn title_tokens(&self) -> Vec<String> {
        crate::text::tokenize(&self.title)
    }

    /// Number of word tokens (punctuation excluded) in the body.
    pub fn word_count(&self) -> usize {
        self.sentences
            .iter()
            .flatten()
            .filter(|t| !crate::text::is_punctuation(t))
            .count()
    }

    /// Word offset of token `token` of sentence `sentence` within the body,
    /// counting only non-punctuation tokens before it.
    pub fn word_offset(&self, sentence: usize, token: usize) -> usize {
        let before: usize = self.sentences[..sentence]
            .iter()
            .flatten()
            .filter(|t| !crate::text::is_punctuation(t))
            .count();
        let within = self.sentences[sentence][..token]
            .iter()
            .filter(|t| !crate::text::is_punctuation(t))
            .count();
        before + within
    }
}

fn check_entities(
    article: &str,
    what: &str,
    list: &[Entity],
    seen: &mut HashMap<String, (EntityType, Option<Side>)>,
) -> Result<()> {
    let mut names = BTreeSet::new();
    for e in list {
        if e.canonical_name.trim().is_empty() {
            return Err(Error::Validation(format!(
                "article {article}: {what} with empty canonical name"
            )));
        }
        if !names.insert(e.canonical_name.as_str()) {
            return Err(Error::Validation(format!(
                "article {article}: duplicate {what} {:?} in one event",
                e.canonical_name
            )));
        }
        let key = (e.entity_type, e.ideology);
        if let Some(prev) = seen.insert(e.canonical_name.clone(), key) {
            if prev != key {
                return Err(Error::Validation(format!(
                    "article {article}: entity {:?} coded inconsistently",
                    e.canonical_name
                )));
            }
        }
    }
    Ok(())
}

/// Check every invariant of an article and its events.
pub fn validate_article(a: &Article) -> Result<()> {
    let id = &a.id;
    if id.trim().is_empty() {
        return Err(Error::Validation("article with empty id".into()));
    }
    if a.sentences.is_empty() {
        return Err(Error::Validation(format!("article {id}: no sentences")));
    }
    if let Some(i) = a.sentences.iter().position(|s| s.is_empty()) {
        return Err(Error::Validation(format!("article {id}: sentence {i} is empty")));
    }
    let mut seen = HashMap::new();
    for (k, ae) in a.events.iter().enumerate() {
        let ev = &ae.event;
        let Some(sentence) = a.sentences.get(ae.sentence_index) else {
            return Err(Error::Validation(format!(
                "article {id}: event {k} sentence_index {} out of range",
                ae.sentence_index
            )));
        };
        if ev.agents.is_empty() {
            return Err(Error::Validation(format!("article {id}: event {k} has no agent")));
        }
        if ev.patients.is_empty() {
            return Err(Error::Validation(format!("article {id}: event {k} has no patient")));
        }
        if ev.moralities.is_empty() {
            return Err(Error::Validation(format!(
                "article {id}: event {k} has no morality"
            )));
        }
        if ev.event_span.is_empty() {
            return Err(Error::Validation(format!("article {id}: event {k} has an empty span")));
        }
        if ev.event_span.end > sentence.len() {
            return Err(Error::Validation(format!(
                "article {id}: event {k} span {:?} crosses the end of sentence {} ({} tokens)",
                ev.event_span,
                ae.sentence_index,
                sentence.len()
            )));
        }
        if !ev.event_span.contains(ev.trigger) {
            return Err(Error::Validation(format!(
                "article {id}: event {k} trigger {} outside span {:?}",
                ev.trigger, ev.event_span
            )));
        }
        check_entities(id, "agent", &ev.agents, &mut seen)?;
        check_entities(id, "patient", &ev.patients, &mut seen)?;
    }
    Ok(())
}
