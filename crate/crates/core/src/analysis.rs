//! Corpus-level media analyses: event density along articles, the
//! distribution of foundations, agent-to-patient ideology matrices and
//! entity frequencies.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Article, Foundation, Morality, OutletIdeology, Side};

/// Default segment length in words.
pub const SEGMENT_LEN: usize = 100;

/// Events per consecutive `segment_len`-word segment of the body of one
/// article. Bins are half-open, so word offset 100 opens segment 1.
/// Offsets count non-punctuation tokens; the title is excluded.
pub fn segment_counts(article: &Article, segment_len: usize) -> Vec<usize> {
    assert!(segment_len > 0, "segment length must be positive");
    let words = article.word_count();
    let n = words.div_ceil(segment_len);
    let mut counts = vec![0; n];
    for ae in &article.events {
        let off = article.word_offset(ae.sentence_index, ae.event.trigger);
        // a trailing punctuation trigger can sit one past the last word
        let seg = (off / segment_len).min(n.saturating_sub(1));
        if n > 0 {
            counts[seg] += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub outlet_ideology: OutletIdeology,
    pub segment: usize,
    /// Articles long enough to have this segment.
    pub articles: usize,
    pub events: usize,
    pub mean_events: f64,
}

/// Mean events per segment index for each outlet ideology, averaged over
/// the articles that reach that segment.
pub fn events_per_segment(articles: &[Article], segment_len: usize) -> Vec<SegmentRow> {
    let mut acc: BTreeMap<(OutletIdeology, usize), (usize, usize)> = BTreeMap::new();
    for a in articles {
        for (i, c) in segment_counts(a, segment_len).into_iter().enumerate() {
            let e = acc.entry((a.outlet_ideology, i)).or_default();
            e.0 += 1;
            e.1 += c;
        }
    }
    acc.into_iter()
        .map(|((outlet_ideology, segment), (articles, events))| SegmentRow {
            outlet_ideology,
            segment,
            articles,
            events,
            mean_events: events as f64 / articles as f64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoundationRow {
    pub foundation: Foundation,
    pub virtue: u64,
    pub vice: u64,
    pub total: u64,
    /// Share of all (event, morality) pairs, in percent.
    pub percent: f64,
}

/// Per-foundation counts and shares from per-morality counts indexed by
/// [`Morality::index`].
pub fn foundation_distribution_from_counts(counts: &[u64; 10]) -> Vec<FoundationRow> {
    let grand: u64 = counts.iter().sum();
    Foundation::ALL
        .into_iter()
        .map(|f| {
            let virtue = counts[f.virtue().index()];
            let vice = counts[f.vice().index()];
            let total = virtue + vice;
            FoundationRow {
                foundation: f,
                virtue,
                vice,
                total,
                percent: if grand == 0 { 0.0 } else { 100.0 * total as f64 / grand as f64 },
            }
        })
        .collect()
}

/// Count every (event, morality) pair of the corpus.
pub fn morality_counts(articles: &[Article]) -> [u64; 10] {
    let mut c = [0u64; 10];
    for ae in articles.iter().flat_map(|a| &a.events) {
        for m in &ae.event.moralities {
            c[m.index()] += 1;
        }
    }
    c
}

pub fn foundation_distribution(articles: &[Article]) -> Vec<FoundationRow> {
    foundation_distribution_from_counts(&morality_counts(articles))
}

/// How matrix columns are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// One column per (outlet ideology, morality).
    #[default]
    OutletMorality,
    /// One column per morality, pooled over outlets.
    Morality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPatientCell {
    /// `None` when columns pool all outlets.
    pub outlet_ideology: Option<OutletIdeology>,
    pub morality: Morality,
    pub agent_ideology: Side,
    pub patient_ideology: Side,
    pub count: usize,
    pub column_pct: f64,
}

/// Ideology pairs contributed by one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventPairs {
    pub article_id: String,
    pub event_index: usize,
    pub moralities: Vec<Morality>,
    pub pairs: Vec<(Side, Side)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPatientMatrix {
    pub foundation: Foundation,
    pub grouping: Grouping,
    pub cells: Vec<AgentPatientCell>,
    pub included_events: usize,
    /// Events of the foundation lacking a coded agent or a coded patient.
    pub excluded_events: usize,
    pub events: Vec<EventPairs>,
}

/// Agent-to-patient ideology counts for events carrying a morality of
/// `foundation`.
///
/// Each event adds one count per (coded agent, coded patient) combination
/// to the column of each of its moralities within the foundation. Columns
/// are normalized to 100 percent; all four cells of a non-empty column are
/// emitted.
pub fn agent_patient_matrix(
    articles: &[Article],
    ideologies: &HashMap<String, Side>,
    foundation: Foundation,
    grouping: Grouping,
) -> AgentPatientMatrix {
    type Col = (Option<OutletIdeology>, Morality);
    let mut counts: BTreeMap<Col, BTreeMap<(Side, Side), usize>> = BTreeMap::new();
    let (mut included, mut excluded) = (0, 0);
    let mut events = Vec::new();
    let sides = |list: &[crate::schema::Entity]| -> Vec<Side> {
        list.iter()
            .filter_map(|e| ideologies.get(&e.canonical_name).copied())
            .collect()
    };
    for a in articles {
        for (k, ae) in a.events.iter().enumerate() {
            let ms: Vec<Morality> = ae
                .event
                .moralities
                .iter()
                .copied()
                .filter(|m| m.foundation() == foundation)
                .collect();
            if ms.is_empty() {
                continue;
            }
            let (ag, pa) = (sides(&ae.event.agents), sides(&ae.event.patients));
            if ag.is_empty() || pa.is_empty() {
                excluded += 1;
                continue;
            }
            included += 1;
            let pairs: Vec<(Side, Side)> = ag
                .iter()
                .flat_map(|&x| pa.iter().map(move |&y| (x, y)))
                .collect();
            let outlet = match grouping {
                Grouping::OutletMorality => Some(a.outlet_ideology),
                Grouping::Morality => None,
            };
            for &m in &ms {
                let col = counts.entry((outlet, m)).or_default();
                for &p in &pairs {
                    *col.entry(p).or_default() += 1;
                }
            }
            events.push(EventPairs {
                article_id: a.id.clone(),
                event_index: k,
                moralities: ms,
                pairs,
            });
        }
    }
    let mut cells = Vec::new();
    for ((outlet, m), col) in counts {
        let total: usize = col.values().sum();
        for agent in [Side::Left, Side::Right] {
            for patient in [Side::Left, Side::Right] {
                let count = col.get(&(agent, patient)).copied().unwrap_or(0);
                cells.push(AgentPatientCell {
                    outlet_ideology: outlet,
                    morality: m,
                    agent_ideology: agent,
                    patient_ideology: patient,
                    count,
                    column_pct: 100.0 * count as f64 / total as f64,
                });
            }
        }
    }
    AgentPatientMatrix {
        foundation,
        grouping,
        cells,
        included_events: included,
        excluded_events: excluded,
        events,
    }
}

/// Ideology codes carried by the corpus entities themselves.
pub fn ideologies_from_corpus(articles: &[Article]) -> HashMap<String, Side> {
    let mut out = HashMap::new();
    for ae in articles.iter().flat_map(|a| &a.events) {
        for e in ae.event.agents.iter().chain(&ae.event.patients) {
            if let Some(s) = e.ideology {
                out.insert(e.canonical_name.clone(), s);
            }
        }
    }
    out
}

/// Parse `entity<TAB>L|R` lines; blank lines and `#` comments are skipped.
pub fn parse_entity_ideologies(text: &str, origin: impl AsRef<Path>) -> Result<HashMap<String, Side>> {
    let origin = origin.as_ref();
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim_end_matches('\r');
        if t.trim().is_empty() || t.trim_start().starts_with('#') {
            continue;
        }
        let (name, code) = t
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected entity<TAB>L|R"))?;
        let side = match code.trim() {
            "L" => Side::Left,
            "R" => Side::Right,
            other => return Err(Error::parse(origin, i + 1, format!("ideology code {other:?} is not L or R"))),
        };
        if out.insert(name.trim().to_string(), side).is_some_and(|prev| prev != side) {
            return Err(Error::parse(origin, i + 1, format!("conflicting code for {:?}", name.trim())));
        }
    }
    Ok(out)
}

pub fn load_entity_ideologies(path: impl AsRef<Path>) -> Result<HashMap<String, Side>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_entity_ideologies(&text, path)
}

/// Entities ranked by the number of distinct articles in which they take
/// part in an event, ties by name; at most `k`.
pub fn top_entities(articles: &[Article], k: usize) -> Vec<(String, usize)> {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for a in articles {
        let names: BTreeSet<&str> = a
            .events
            .iter()
            .flat_map(|ae| ae.event.agents.iter().chain(&ae.event.patients))
            .map(|e| e.canonical_name.as_str())
            .collect();
        for n in names {
            *freq.entry(n).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().map(|(n, c)| (n.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{AnnotatedEvent, Entity, EntityType, EventStatus, MoralEvent, Span};

    fn entity(name: &str) -> Entity {
        Entity::new(name, EntityType::Other)
    }

    fn event(sentence: usize, trigger: usize, agents: &[&str], patients: &[&str], ms: &[Morality]) -> AnnotatedEvent {
        AnnotatedEvent {
            sentence_index: sentence,
            event: MoralEvent {
                agents: agents.iter().map(|n| entity(n)).collect(),
                patients: patients.iter().map(|n| entity(n)).collect(),
                event_span: Span::new(trigger, trigger + 1),
                trigger,
                moralities: ms.iter().copied().collect(),
                status: EventStatus::Actual,
            },
        }
    }

    fn article(id: &str, sentences: Vec<Vec<String>>, events: Vec<AnnotatedEvent>) -> Article {
        Article {
            id: id.into(),
            title: "t".into(),
            sentences,
            outlet: "o".into(),
            outlet_ideology: OutletIdeology::Left,
            publish_date: chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            story_id: "s".into(),
            events,
        }
    }

    fn words(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn segment_placement() {
        let a = article(
            "a",
            vec![words(250)],
            vec![
                event(0, 30, &["x"], &["y"], &[Morality::Care]),
                event(0, 120, &["x"], &["y"], &[Morality::Care]),
                event(0, 130, &["x"], &["y"], &[Morality::Care]),
            ],
        );
        assert_eq!(segment_counts(&a, 100), vec![1, 2, 0]);
        let b = article("b", vec![words(150)], vec![event(0, 100, &["x"], &["y"], &[Morality::Harm])]);
        assert_eq!(segment_counts(&b, 100), vec![0, 1]);
        let c = article("c", vec![words(150)], vec![]);
        assert_eq!(segment_counts(&c, 100), vec![0, 0]);
        let rows = events_per_segment(&[a, b, c], 100);
        assert_eq!(rows.iter().map(|r| r.events).sum::<usize>(), 4);
        assert_eq!(rows[0].articles, 3);
        assert_eq!(rows[2].articles, 1);
    }

    #[test]
    fn distribution_from_reported_counts() {
        let counts = [1348, 2060, 531, 453, 329, 257, 1140, 418, 19, 46];
        let rows = foundation_distribution_from_counts(&counts);
        assert_eq!(rows.iter().map(|r| r.total).sum::<u64>(), 6601);
        let pct: Vec<f64> = rows.iter().map(|r| (r.percent * 10.0).round() / 10.0).collect();
        assert_eq!(pct, vec![51.6, 14.9, 8.9, 23.6, 1.0]);
    }

    #[test]
    fn single_event_with_two_moralities_counts_twice() {
        let a = article("a", vec![words(5)], vec![event(0, 1, &["x"], &["y"], &[Morality::Care, Morality::Fairness])]);
        assert_eq!(morality_counts(&[a]).iter().sum::<u64>(), 2);
    }

    #[test]
    fn matrix_basics() {
        let ideo: HashMap<String, Side> =
            [("L1".to_string(), Side::Left), ("R1".to_string(), Side::Right)].into();
        let a = article("a", vec![words(5)], vec![event(0, 1, &["L1"], &["R1"], &[Morality::Care])]);
        let m = agent_patient_matrix(&[a.clone()], &ideo, Foundation::CareHarm, Grouping::OutletMorality);
        let lr = m
            .cells
            .iter()
            .find(|c| c.agent_ideology == Side::Left && c.patient_ideology == Side::Right)
            .unwrap();
        assert_eq!(lr.column_pct, 100.0);
        let none = agent_patient_matrix(&[a], &HashMap::new(), Foundation::CareHarm, Grouping::Morality);
        assert!(none.cells.is_empty());
        assert_eq!(none.excluded_events, 1);
    }

    #[test]
    fn entity_frequency_counts_articles() {
        let a = article(
            "a",
            vec![words(5)],
            vec![
                event(0, 1, &["Americans"], &["Court"], &[Morality::Care]),
                event(0, 2, &["Americans"], &["Court"], &[Morality::Harm]),
            ],
        );
        let b = article("b", vec![words(5)], vec![event(0, 1, &["Court"], &["Zed"], &[Morality::Care])]);
        let top = top_entities(&[a, b], 10);
        assert_eq!(top, vec![("Court".into(), 2), ("Americans".into(), 1), ("Zed".into(), 1)]);
    }

    #[test]
    fn ideology_file() {
        let m = parse_entity_ideologies("# codes\nDemocrats\tL\nRepublicans\tR\n", "x").unwrap();
        assert_eq!(m["Democrats"], Side::Left);
        assert!(parse_entity_ideologies("X\tQ\n", "x").is_err());
    }
}
