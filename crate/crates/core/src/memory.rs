//! The lexicon memory: a frozen matrix `E` with one row per lexicon entry,
//! read by single-head attention from a mention query `h_q`:
//!
//! ```text
//! α_i = softmax_i(m_iᵀ W1 h_q)
//! h_m = W2 Σ_i α_i m_i
//! ```
//!
//! and the two objectives defined on `α`: moral word linking (MWL) and
//! moral label association (MLA).

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banks::{Lexicon, MoralityBankSentence};
use crate::error::{Error, Result};
use crate::nn::{load_tensors, save_tensors, DType, Graph, NodeId, Tensor};
use crate::schema::Morality;

/// Frozen memory rows plus the morality membership of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconMemory {
    pub e: Tensor,
    /// Rows carrying each morality, indexed by [`Morality::index`].
    pub morality_index: [BTreeSet<usize>; 10],
    pub lexicon_hash: String,
    /// Number of bank mentions averaged into each row; `0` marks a row
    /// initialised from the static embedding.
    pub mention_counts: Vec<usize>,
}

impl LexiconMemory {
    /// Assemble a memory, checking that every row carries a morality.
    pub fn new(e: Tensor, lexicon: &Lexicon, mention_counts: Vec<usize>) -> Result<Self> {
        if e.rows() != lexicon.len() || mention_counts.len() != lexicon.len() {
            return Err(Error::Shape(format!(
                "memory has {} rows for a lexicon of {} entries",
                e.rows(),
                lexicon.len()
            )));
        }
        let morality_index = lexicon.morality_index();
        let covered: BTreeSet<usize> = morality_index.iter().flatten().copied().collect();
        if covered.len() != lexicon.len() {
            return Err(Error::Validation("lexicon entry without morality".into()));
        }
        Ok(LexiconMemory {
            e,
            morality_index,
            lexicon_hash: lexicon.content_hash(),
            mention_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.e.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.e.rows() == 0
    }

    pub fn d_model(&self) -> usize {
        self.e.cols()
    }

    /// `n × 10` 0/1 matrix with `M[i][v] = 1` iff row `i` carries morality `v`.
    pub fn membership(&self) -> Tensor {
        let mut m = Tensor::zeros(&[self.len(), 10]);
        for (v, rows) in self.morality_index.iter().enumerate() {
            for &r in rows {
                m.data_mut()[r * 10 + v] = 1.0;
            }
        }
        m
    }

    /// Fails unless this memory was built for `lexicon`.
    pub fn check_lexicon(&self, lexicon: &Lexicon) -> Result<()> {
        let h = lexicon.content_hash();
        if h != self.lexicon_hash {
            return Err(Error::Validation(format!(
                "memory was built for lexicon {}, got {}",
                self.lexicon_hash, h
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct MemoryManifest {
    schema: String,
    lexicon_hash: String,
    n_entries: usize,
    d_model: usize,
    morality_index: Vec<Vec<usize>>,
    mention_counts: Vec<usize>,
}

pub const MEMORY_SCHEMA: &str = "moralevents-memory/v1";

/// Write `E` to `dir/memory.bin` and its manifest to `dir/memory.json`.
pub fn save_memory(dir: &Path, memory: &LexiconMemory) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_tensors(&dir.join("memory.bin"), &[("E", &memory.e)], DType::F64)?;
    let manifest = MemoryManifest {
        schema: MEMORY_SCHEMA.into(),
        lexicon_hash: memory.lexicon_hash.clone(),
        n_entries: memory.len(),
        d_model: memory.d_model(),
        morality_index: memory
            .morality_index
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect(),
        mention_counts: memory.mention_counts.clone(),
    };
    let path = dir.join("memory.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&path, e))
}

/// Load a memory written by [`save_memory`], verifying it against `lexicon`.
pub fn load_memory(dir: &Path, lexicon: &Lexicon) -> Result<LexiconMemory> {
    let path = dir.join("memory.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: MemoryManifest = serde_json::from_str(&text)?;
    let mut tensors = load_tensors(&dir.join("memory.bin"))?;
    let e = match tensors.pop() {
        Some((name, t)) if name == "E" && tensors.is_empty() => t,
        _ => return Err(Error::Validation(format!("{}: expected one tensor E", dir.display()))),
    };
    if e.rows() != m.n_entries || e.cols() != m.d_model {
        return Err(Error::Validation("memory tensor disagrees with its manifest".into()));
    }
    let mem = LexiconMemory::new(e, lexicon, m.mention_counts)?;
    if mem.lexicon_hash != m.lexicon_hash {
        return Err(Error::Validation(format!(
            "memory was built for lexicon {}, got {}",
            m.lexicon_hash, mem.lexicon_hash
        )));
    }
    Ok(mem)
}

/// Build `E` by averaging mention representations over the bank.
///
/// `encode` returns `(entry row, h_q)` for every mention of a sentence.
/// Rows with no mention take the matching row of `fallback`.
pub fn build_memory<F>(
    lexicon: &Lexicon,
    sentences: &[MoralityBankSentence],
    fallback: &Tensor,
    encode: F,
) -> Result<LexiconMemory>
where
    F: Fn(&MoralityBankSentence) -> Result<Vec<(usize, Vec<f64>)>> + Sync,
{
    if sentences.is_empty() {
        return Err(Error::Validation("cannot build memory from an empty bank".into()));
    }
    let n = lexicon.len();
    let d = fallback.cols();
    if fallback.rows() != n {
        return Err(Error::Shape(format!(
            "fallback has {} rows for {n} entries",
            fallback.rows()
        )));
    }
    let encoded: Vec<Vec<(usize, Vec<f64>)>> =
        sentences.par_iter().map(&encode).collect::<Result<_>>()?;
    let mut sums = vec![0.0; n * d];
    let mut counts = vec![0usize; n];
    for (row, h) in encoded.iter().flatten() {
        if *row >= n || h.len() != d {
            return Err(Error::Shape(format!("mention for row {row} of width {}", h.len())));
        }
        counts[*row] += 1;
        for (s, v) in sums[row * d..(row + 1) * d].iter_mut().zip(h) {
            *s += v;
        }
    }
    for r in 0..n {
        let dst = &mut sums[r * d..(r + 1) * d];
        if counts[r] == 0 {
            dst.copy_from_slice(fallback.row(r));
        } else {
            dst.iter_mut().for_each(|v| *v /= counts[r] as f64);
        }
    }
    let e = Tensor::matrix(n, d, sums);
    if !e.is_finite() {
        return Err(Error::Numeric("memory row is not finite".into()));
    }
    LexiconMemory::new(e, lexicon, counts)
}

/// Nodes produced by one memory read.
#[derive(Debug, Clone, Copy)]
pub struct MemoryRead {
    /// `k × n` attention logits.
    pub logits: NodeId,
    /// `k × n` attention weights.
    pub alpha: NodeId,
    /// `k × d` memory output.
    pub h_m: NodeId,
}

/// Attend from each row of `h_q` (`k × d`) over the rows of `e` (`n × d`).
pub fn memory_attend(g: &mut Graph<'_>, h_q: NodeId, e: NodeId, w1: NodeId, w2: NodeId) -> MemoryRead {
    // row form of m_iᵀ W1 h_q: (h_q W1ᵀ) Eᵀ
    let q = g.matmul_t(h_q, w1, false, true);
    let logits = g.matmul_t(q, e, false, true);
    let alpha = g.softmax(logits, None);
    let mixed = g.matmul(alpha, e);
    let h_m = g.matmul_t(mixed, w2, false, true);
    MemoryRead { logits, alpha, h_m }
}

/// How the linking objective turns `α_gold` into a loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MwlForm {
    /// `1 − α_gold`
    #[default]
    OneMinusAlpha,
    /// `−ln α_gold`
    NegLog,
}

/// MWL loss of row `row` of a memory read against entry `gold`.
pub fn mwl_loss_node(g: &mut Graph<'_>, read: &MemoryRead, row: usize, gold: usize, form: MwlForm) -> NodeId {
    let n = g.value(read.alpha).cols();
    match form {
        MwlForm::OneMinusAlpha => {
            let a = g.element(read.alpha, row * n + gold);
            let neg = g.scale(a, -1.0);
            g.add_scalar(neg, 1.0)
        }
        MwlForm::NegLog => {
            let l = g.slice_rows(read.logits, row, row + 1);
            g.cross_entropy(l, &[gold])
        }
    }
}

/// Aggregated morality scores `A = α M` (`k × 10`).
pub fn aggregate_morality_scores_node(g: &mut Graph<'_>, alpha: NodeId, membership: NodeId) -> NodeId {
    g.matmul(alpha, membership)
}

/// MLA loss of row `row` of the `k × 10` score matrix in closed form:
/// `(|G||N| + |G| Σ_N A − |N| Σ_G A) / 10`, which equals the pairwise sum
/// `Σ_{y∈G} Σ_{z∈N} (1 + z − y) / 10`.
pub fn mla_loss_node(g: &mut Graph<'_>, scores: NodeId, row: usize, gold: &BTreeSet<Morality>) -> Result<NodeId> {
    if gold.is_empty() {
        return Err(Error::Validation("MLA loss needs at least one gold morality".into()));
    }
    let ng = gold.len() as f64;
    let nn = (10 - gold.len()) as f64;
    let w: Vec<f64> = Morality::ALL
        .iter()
        .map(|m| if gold.contains(m) { -nn } else { ng })
        .collect();
    let a = g.slice_rows(scores, row, row + 1);
    let wn = g.constant(Tensor::row_vector(w));
    let p = g.mul(a, wn);
    let s = g.sum(p);
    let s = g.add_scalar(s, ng * nn);
    Ok(g.scale(s, 0.1))
}

/// `1 − α_gold`.
pub fn mwl_loss(alpha: &[f64], gold: usize) -> f64 {
    1.0 - alpha[gold]
}

/// `A_v = Σ_{p ∈ M_v} α_p`.
pub fn aggregate_morality_scores(alpha: &[f64], morality_index: &[BTreeSet<usize>; 10]) -> [f64; 10] {
    let mut a = [0.0; 10];
    for (v, rows) in morality_index.iter().enumerate() {
        a[v] = rows.iter().map(|&r| alpha[r]).sum();
    }
    a
}

/// `Σ_{y∈G} Σ_{z∈N} (1 + z − y) / 10`.
pub fn mla_loss(scores: &[f64; 10], gold: &BTreeSet<Morality>) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Validation("MLA loss needs at least one gold morality".into()));
    }
    let mut total = 0.0;
    for y in gold {
        for z in Morality::ALL.iter().filter(|m| !gold.contains(m)) {
            total += 1.0 + scores[z.index()] - scores[y.index()];
        }
    }
    Ok(total / 10.0)
}

/// Multi-label margin loss
/// `Σ_{y∈G} Σ_{z∈N} max(0, 1 − (y − z)) / (|G| + |N|)`.
pub fn mla_loss_reference(scores: &[f64; 10], gold: &BTreeSet<Morality>) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Validation("MLA loss needs at least one gold morality".into()));
    }
    let nongold: Vec<Morality> = Morality::ALL.into_iter().filter(|m| !gold.contains(m)).collect();
    let mut total = 0.0;
    for y in gold {
        for z in &nongold {
            total += (1.0 - (scores[y.index()] - scores[z.index()])).max(0.0);
        }
    }
    Ok(total / (gold.len() + nongold.len()) as f64)
}

/// Evaluate one memory read outside of training: returns `(h_m, α)`.
pub fn attend(h_q: &[f64], e: &Tensor, w1: &Tensor, w2: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let store = crate::nn::ParamStore::new();
    let mut g = Graph::new(&store);
    let q = g.constant(Tensor::row_vector(h_q.to_vec()));
    let en = g.constant(e.clone());
    let w1n = g.constant(w1.clone());
    let w2n = g.constant(w2.clone());
    let read = memory_attend(&mut g, q, en, w1n, w2n);
    g.check_finite()?;
    Ok((g.value(read.h_m).data().to_vec(), g.value(read.alpha).data().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, randn, ParamStore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    fn set(ms: &[Morality]) -> BTreeSet<Morality> {
        ms.iter().copied().collect()
    }

    #[test]
    fn single_row_memory() {
        let mut r = rng();
        let e = randn(&mut r, 1, 4, 1.0);
        let w1 = randn(&mut r, 4, 4, 1.0);
        let w2 = randn(&mut r, 4, 4, 1.0);
        let (h_m, alpha) = attend(&[0.3, -1.0, 2.0, 0.1], &e, &w1, &w2).unwrap();
        assert_eq!(alpha, vec![1.0]);
        for i in 0..4 {
            let expect: f64 = (0..4).map(|j| w2.get(i, j) * e.get(0, j)).sum();
            assert!((h_m[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_split_evenly() {
        let mut r = rng();
        let row = randn(&mut r, 1, 4, 1.0);
        let e = Tensor::matrix(2, 4, [row.data(), row.data()].concat());
        let w = randn(&mut r, 4, 4, 1.0);
        let (_, alpha) = attend(&[1.0, 2.0, 3.0, 4.0], &e, &w, &w).unwrap();
        assert_eq!(alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn attention_matches_direct_formula() {
        let mut r = rng();
        let d = 6;
        let e = randn(&mut r, 8, d, 1.0);
        let w1 = randn(&mut r, d, d, 0.5);
        let w2 = randn(&mut r, d, d, 0.5);
        let h: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let (h_m, alpha) = attend(&h, &e, &w1, &w2).unwrap();
        let w1h: Vec<f64> = (0..d).map(|i| (0..d).map(|j| w1.get(i, j) * h[j]).sum()).collect();
        let logits: Vec<f64> = (0..8)
            .map(|k| (0..d).map(|i| e.get(k, i) * w1h[i]).sum())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let oracle: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
        for k in 0..8 {
            assert!((alpha[k] - oracle[k]).abs() < 1e-9);
        }
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mix: Vec<f64> = (0..d).map(|i| (0..8).map(|k| oracle[k] * e.get(k, i)).sum()).collect();
        for i in 0..d {
            let v: f64 = (0..d).map(|j| w2.get(i, j) * mix[j]).sum();
            assert!((h_m[i] - v).abs() < 1e-9);
        }
    }

    #[test]
    fn mwl_values() {
        assert_eq!(mwl_loss(&[0.0, 1.0, 0.0], 1), 0.0);
        assert!((mwl_loss(&[0.1; 10], 3) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn mwl_decreases_as_gold_mass_grows() {
        let base = [0.2, 0.5, 0.3];
        let mut prev = f64::INFINITY;
        for step in 0..20 {
            let ag = step as f64 / 20.0;
            let rest = 1.0 - ag;
            let alpha = [ag, base[1] / 0.8 * rest, base[2] / 0.8 * rest];
            let l = mwl_loss(&alpha, 0);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn aggregate_scores() {
        let mut idx: [BTreeSet<usize>; 10] = Default::default();
        for v in 0..10 {
            idx[v].insert(v);
        }
        let alpha: Vec<f64> = (1..=10).map(|i| i as f64 / 55.0).collect();
        let a = aggregate_morality_scores(&alpha, &idx);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mut idx: [BTreeSet<usize>; 10] = Default::default();
        idx[0].insert(0);
        idx[1].insert(0);
        idx[2].insert(1);
        let a = aggregate_morality_scores(&[1.0, 0.0], &idx);
        assert_eq!(&a[..3], &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn mla_examples() {
        let gold = set(&[Morality::Care]);
        let mut a = [0.0; 10];
        a[0] = 1.0;
        assert_eq!(mla_loss(&a, &gold).unwrap(), 0.0);
        assert_eq!(mla_loss_reference(&a, &gold).unwrap(), 0.0);
        let a = [0.1; 10];
        assert!((mla_loss(&a, &gold).unwrap() - 0.9).abs() < 1e-12);
        assert!((mla_loss_reference(&a, &gold).unwrap() - 0.9).abs() < 1e-12);
        assert!(mla_loss(&a, &BTreeSet::new()).is_err());
        assert!(mla_loss_reference(&a, &BTreeSet::new()).is_err());
    }

    #[test]
    fn closed_form_equals_pairwise_margin_on_bounded_scores() {
        let mut r = rng();
        for _ in 0..1000 {
            let mut a = [0.0; 10];
            a.iter_mut().for_each(|v| *v = r.gen_range(0.0..=1.0));
            let gold: BTreeSet<Morality> = loop {
                let s: BTreeSet<Morality> = Morality::ALL.into_iter().filter(|_| r.gen_bool(0.3)).collect();
                if !s.is_empty() {
                    break s;
                }
            };
            let fast = mla_loss(&a, &gold).unwrap();
            let reference = mla_loss_reference(&a, &gold).unwrap();
            assert!((fast - reference).abs() < 1e-12, "{fast} vs {reference}");

            let store = ParamStore::new();
            let mut g = Graph::new(&store);
            let s = g.constant(Tensor::row_vector(a.to_vec()));
            let l = mla_loss_node(&mut g, s, 0, &gold).unwrap();
            assert!((g.value(l).item() - fast).abs() < 1e-12);
        }
    }

    fn toy_lexicon() -> Lexicon {
        Lexicon::from_pairs([
            ("care", set(&[Morality::Care])),
            ("harm", set(&[Morality::Harm])),
            ("fair", set(&[Morality::Fairness])),
            ("obey", set(&[Morality::Authority])),
            ("pure", set(&[Morality::Sanctity])),
        ])
        .unwrap()
    }

    #[test]
    fn losses_pass_grad_check_through_attention() {
        let mut r = rng();
        let d = 8;
        let lex = toy_lexicon();
        let e_t = randn(&mut r, lex.len(), d, 1.0);
        let mem = LexiconMemory::new(e_t.clone(), &lex, vec![1; lex.len()]).unwrap();
        let mut store = ParamStore::new();
        let hq = store.add("hq", randn(&mut r, 3, d, 1.0), true);
        let w1 = store.add("w1", randn(&mut r, d, d, 0.3), true);
        let w2 = store.add("w2", randn(&mut r, d, d, 0.3), true);
        let e = store.add("E", e_t, false);
        let m = mem.membership();
        let gold = set(&[Morality::Care, Morality::Fairness]);
        for form in [MwlForm::OneMinusAlpha, MwlForm::NegLog] {
            let m = m.clone();
            let gold = gold.clone();
            let rep = grad_check(&mut store, &[hq, w1, w2], 1e-5, 64, &mut r, move |g| {
                let (q, en, a, b) = (g.param(hq), g.param(e), g.param(w1), g.param(w2));
                let read = memory_attend(g, q, en, a, b);
                let mn = g.constant(m.clone());
                let scores = aggregate_morality_scores_node(g, read.alpha, mn);
                let mut terms = vec![];
                for row in 0..3 {
                    terms.push(mwl_loss_node(g, &read, row, row, form));
                    terms.push(mla_loss_node(g, scores, row, &gold)?);
                }
                let h = g.sum(read.h_m);
                terms.push(h);
                let mut total = terms[0];
                for &t in &terms[1..] {
                    total = g.add(total, t);
                }
                Ok(total)
            })
            .unwrap();
            assert!(rep.max_rel_error < 1e-3, "{rep:?}");
        }
    }

    #[test]
    fn build_memory_averages_and_falls_back() {
        let lex = toy_lexicon();
        let fallback = Tensor::matrix(5, 2, (0..10).map(|v| v as f64).collect());
        let sent = |id: &str| MoralityBankSentence {
            id: id.into(),
            tokens: vec![],
            mentions: vec![],
            sentence_moralities: BTreeSet::new(),
            seed_mention: 0,
        };
        let bank = vec![sent("a"), sent("b")];
        let mem = build_memory(&lex, &bank, &fallback, |s| {
            Ok(match s.id.as_str() {
                "a" => vec![(0, vec![1.0, 2.0]), (1, vec![5.0, 5.0])],
                _ => vec![(0, vec![3.0, 4.0])],
            })
        })
        .unwrap();
        assert_eq!(mem.e.row(0), &[2.0, 3.0]);
        assert_eq!(mem.e.row(1), &[5.0, 5.0]);
        assert_eq!(mem.e.row(2), fallback.row(2));
        assert_eq!(mem.mention_counts, vec![2, 1, 0, 0, 0]);
        assert!(build_memory(&lex, &[], &fallback, |_| Ok(vec![])).is_err());
    }

    #[test]
    fn memory_roundtrip_checks_lexicon() {
        let lex = toy_lexicon();
        let mut r = rng();
        let mem = LexiconMemory::new(randn(&mut r, 5, 3, 1.0), &lex, vec![0; 5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_memory(dir.path(), &mem).unwrap();
        assert_eq!(load_memory(dir.path(), &lex).unwrap(), mem);
        let other = Lexicon::from_pairs([
            ("care", set(&[Morality::Care])),
            ("harm", set(&[Morality::Harm])),
            ("fair", set(&[Morality::Fairness])),
            ("obey", set(&[Morality::Authority])),
            ("dirty", set(&[Morality::Degradation])),
        ])
        .unwrap();
        assert!(load_memory(dir.path(), &other).is_err());
    }
}
