//! Dense scenario index with exact maximum inner-product search, input
//! augmentation with retrieved pairs, and retrieved-label masking.
//!
//! An augmented input with two retrieved pairs reads
//!
//! ```text
//! scenario: s1 label: l1 </s> scenario: s2 label: l2 </s> input
//! ```
//!
//! with blocks in descending score order.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banks::{BankName, ScenarioBank, ScenarioPair};
use crate::error::{Error, Result};
use crate::nn::{load_tensors, save_tensors, DType, Tensor};

/// Separator between retrieved blocks and the input.
pub const SEPARATOR: &str = "</s>";
/// Sentinel replacing a masked label or word.
pub const MASK: &str = "<mask>";
/// Default number of retrieved pairs.
pub const DEFAULT_K: usize = 3;

const SCENARIO_PREFIX: &str = "scenario: ";
const LABEL_INFIX: &str = " label: ";

/// Key matrix over the pairs of one scenario bank.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    pub bank: BankName,
    pub keys: Tensor,
    pub pairs: Vec<ScenarioPair>,
    /// Identifies the encoder snapshot that produced the keys.
    pub encoder_hash: String,
}

impl DenseIndex {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn d_model(&self) -> usize {
        self.keys.cols()
    }

    /// `q · key_i` for every row.
    pub fn scores(&self, query: &[f64]) -> Vec<f64> {
        assert_eq!(query.len(), self.d_model(), "query width");
        (0..self.len())
            .map(|i| self.keys.row(i).iter().zip(query).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Encode every scenario with `encode` (a pooled encoder representation).
pub fn build_index<F>(bank: &ScenarioBank, encoder_hash: &str, encode: F) -> Result<DenseIndex>
where
    F: Fn(&str) -> Result<Vec<f64>> + Sync,
{
    if bank.is_empty() {
        return Err(Error::Validation(format!("scenario bank {} is empty", bank.name)));
    }
    let rows: Vec<Vec<f64>> = bank
        .pairs
        .par_iter()
        .map(|p| encode(&p.scenario))
        .collect::<Result<_>>()?;
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("scenario keys differ in width".into()));
    }
    let keys = Tensor::matrix(rows.len(), d, rows.concat());
    if !keys.is_finite() {
        return Err(Error::Numeric("scenario key is not finite".into()));
    }
    Ok(DenseIndex {
        bank: bank.name,
        keys,
        pairs: bank.pairs.clone(),
        encoder_hash: encoder_hash.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub row: usize,
    pub pair: ScenarioPair,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub k: usize,
    pub items: Vec<RetrievedItem>,
}

/// Indices of the `k` largest scores, highest first, ties to the lower row.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

/// Exact top-`k` search. Rows for which `exclude` returns true are skipped.
pub fn retrieve_filtered(
    query: &[f64],
    index: &DenseIndex,
    k: usize,
    exclude: impl Fn(usize, &ScenarioPair) -> bool,
) -> RetrievalResult {
    let scores = index.scores(query);
    let live: Vec<usize> = (0..index.len()).filter(|&i| !exclude(i, &index.pairs[i])).collect();
    let sub: Vec<f64> = live.iter().map(|&i| scores[i]).collect();
    let items = top_k(&sub, k)
        .into_iter()
        .map(|j| {
            let row = live[j];
            RetrievedItem {
                row,
                pair: index.pairs[row].clone(),
                score: scores[row],
            }
        })
        .collect();
    RetrievalResult { k, items }
}

pub fn retrieve(query: &[f64], index: &DenseIndex, k: usize) -> RetrievalResult {
    retrieve_filtered(query, index, k, |_, _| false)
}

/// Prefix `input` with one `scenario: s label: l` block per retrieved pair,
/// each followed by the separator. An empty result leaves `input` as is.
pub fn augment_input(input: &str, result: &RetrievalResult) -> String {
    let mut out = String::new();
    for item in &result.items {
        out.push_str(&block(&item.pair.scenario, &item.pair.label));
    }
    out.push_str(input);
    out
}

fn block(scenario: &str, label: &str) -> String {
    format!("{SCENARIO_PREFIX}{scenario}{LABEL_INFIX}{label} {SEPARATOR} ")
}

/// Inverse of [`augment_input`]: the retrieved pairs and the original input.
///
/// Leading segments of the form `scenario: s label: l </s> ` are read as
/// blocks, so an input that itself starts with such a segment is ambiguous.
pub fn split_augmented(text: &str) -> (Vec<ScenarioPair>, &str) {
    let sep = format!(" {SEPARATOR} ");
    let mut rest = text;
    let mut pairs = Vec::new();
    while let Some(body) = rest.strip_prefix(SCENARIO_PREFIX) {
        let Some(end) = body.find(&sep) else { break };
        let Some((s, l)) = body[..end].rsplit_once(LABEL_INFIX) else { break };
        pairs.push(ScenarioPair::new(s, l));
        rest = &body[end + sep.len()..];
    }
    (pairs, rest)
}

/// Replace the label of one uniformly chosen retrieved block with [`MASK`].
/// Returns the masked text and the removed label.
pub fn mask_retrieved_label<R: Rng + ?Sized>(text: &str, rng: &mut R) -> Result<(String, String)> {
    let (pairs, input) = split_augmented(text);
    if pairs.is_empty() {
        return Err(Error::Validation("no retrieved block to mask".into()));
    }
    let chosen = rng.gen_range(0..pairs.len());
    let mut out = String::new();
    for (i, p) in pairs.iter().enumerate() {
        out.push_str(&block(&p.scenario, if i == chosen { MASK } else { &p.label }));
    }
    out.push_str(input);
    Ok((out, pairs[chosen].label.clone()))
}

#[derive(Serialize, Deserialize)]
struct IndexManifest {
    schema: String,
    bank: BankName,
    n_pairs: usize,
    d_model: usize,
    encoder_hash: String,
}

pub const INDEX_SCHEMA: &str = "moralevents-index/v1";

/// Write `manifest.json`, `keys.bin` and `pairs.jsonl` under `dir`.
pub fn save_index(dir: &Path, index: &DenseIndex) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = IndexManifest {
        schema: INDEX_SCHEMA.into(),
        bank: index.bank,
        n_pairs: index.len(),
        d_model: index.d_model(),
        encoder_hash: index.encoder_hash.clone(),
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n").map_err(|e| Error::io(&path, e))?;
    save_tensors(&dir.join("keys.bin"), &[("keys", &index.keys)], DType::F64)?;
    let bank = ScenarioBank {
        name: index.bank,
        label_set: Vec::new(),
        pairs: index.pairs.clone(),
    };
    crate::banks::write_scenario_bank(dir.join("pairs.jsonl"), &bank)
}

pub fn load_index(dir: &Path) -> Result<DenseIndex> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: IndexManifest = serde_json::from_str(&text)?;
    let bank = crate::banks::load_scenario_bank(dir.join("pairs.jsonl"), m.bank)?;
    let mut t = load_tensors(&dir.join("keys.bin"))?;
    let keys = match t.pop() {
        Some((name, k)) if name == "keys" && t.is_empty() => k,
        _ => return Err(Error::Validation(format!("{}: expected one tensor keys", dir.display()))),
    };
    if keys.rows() != m.n_pairs || keys.cols() != m.d_model || bank.len() != m.n_pairs {
        return Err(Error::Validation(format!(
            "{}: index files disagree with the manifest",
            dir.display()
        )));
    }
    Ok(DenseIndex {
        bank: m.bank,
        keys,
        pairs: bank.pairs,
        encoder_hash: m.encoder_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::randn;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn index(keys: Tensor) -> DenseIndex {
        let n = keys.rows();
        DenseIndex {
            bank: BankName::DelphiJudgement,
            keys,
            pairs: (0..n).map(|i| ScenarioPair::new(format!("s{i}"), "morally good")).collect(),
            encoder_hash: "h".into(),
        }
    }

    #[test]
    fn self_match_ranks_first() {
        let mut keys = Tensor::zeros(&[8, 8]);
        for i in 0..8 {
            keys.data_mut()[i * 8 + i] = 1.0;
        }
        let idx = index(keys.clone());
        let r = retrieve(keys.row(5), &idx, 3);
        assert_eq!(r.items[0].row, 5);
        assert_eq!(r.items.iter().map(|i| i.row).collect::<Vec<_>>(), vec![5, 0, 1]);
    }

    #[test]
    fn saturates_when_k_exceeds_rows() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let idx = index(randn(&mut r, 4, 3, 1.0));
        let q = [0.5, -0.2, 1.0];
        let res = retrieve(&q, &idx, 10);
        assert_eq!(res.items.len(), 4);
        assert!(res.items.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn exclusion_filter_skips_rows() {
        let mut keys = Tensor::zeros(&[3, 2]);
        keys.data_mut().copy_from_slice(&[1.0, 0.0, 0.9, 0.0, 0.0, 1.0]);
        let idx = index(keys);
        let res = retrieve_filtered(&[1.0, 0.0], &idx, 1, |i, _| i == 0);
        assert_eq!(res.items[0].row, 1);
    }

    #[test]
    fn augment_format_and_split() {
        let res = RetrievalResult {
            k: 1,
            items: vec![RetrievedItem {
                row: 0,
                pair: ScenarioPair::new("enjoying your life with your family", "morally good"),
                score: 1.0,
            }],
        };
        let text = augment_input("the input", &res);
        assert_eq!(
            text,
            "scenario: enjoying your life with your family label: morally good </s> the input"
        );
        let (pairs, input) = split_augmented(&text);
        assert_eq!(pairs, vec![res.items[0].pair.clone()]);
        assert_eq!(input, "the input");
        assert_eq!(augment_input("x y", &RetrievalResult::default()), "x y");
    }

    #[test]
    fn masking_is_uniform_and_single() {
        let res = RetrievalResult {
            k: 3,
            items: (0..3)
                .map(|i| RetrievedItem {
                    row: i,
                    pair: ScenarioPair::new(format!("case {i}"), format!("label{i}")),
                    score: 0.0,
                })
                .collect(),
        };
        let text = augment_input("in", &res);
        let mut counts = [0; 3];
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (masked, label) = mask_retrieved_label(&text, &mut rng).unwrap();
            assert_eq!(masked.matches(MASK).count(), 1);
            let i: usize = label.strip_prefix("label").unwrap().parse().unwrap();
            counts[i] += 1;
        }
        for c in counts {
            assert!((273..=393).contains(&c), "{counts:?}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mask_retrieved_label("no blocks", &mut rng).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let idx = index(randn(&mut r, 5, 4, 1.0));
        let dir = tempfile::tempdir().unwrap();
        save_index(dir.path(), &idx).unwrap();
        assert_eq!(load_index(dir.path()).unwrap(), idx);
    }
}
