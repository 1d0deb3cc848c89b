use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::vocab::{Vocab, BOS, EOS};
use crate::banks::{insert_mention_tags, match_token, tag_mentions, Lexicon, TaggedMention, MENTION_CLOSE, MENTION_OPEN};
use crate::error::{Error, Result};
use crate::memory::{
    aggregate_morality_scores_node, load_memory, memory_attend, mla_loss_node, mwl_loss_node, save_memory,
    LexiconMemory, MemoryRead, MwlForm,
};
use crate::nn::{
    causal_mask, encode_tensors, load_params, randn, save_params, DType, Graph, NodeId, ParamId, ParamStore, Tensor,
};
use crate::schema::Morality;
use crate::text::sha256_hex;

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Ff {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    ln1: Norm,
    attn: Attn,
    ln2: Norm,
    ff: Ff,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    ln1: Norm,
    self_attn: Attn,
    ln2: Norm,
    cross: Attn,
    ln3: Norm,
    ff: Ff,
}

#[derive(Debug, Clone)]
struct Ids {
    emb: ParamId,
    enc_pos: ParamId,
    dec_pos: ParamId,
    enc: Vec<EncLayer>,
    enc_ln: Norm,
    dec: Vec<DecLayer>,
    dec_ln: Norm,
    mem_w1: ParamId,
    mem_w2: ParamId,
    mem_ln: Norm,
}

/// Name of the frozen memory matrix in the parameter store.
pub const MEMORY_PARAM: &str = "memory.E";

#[derive(Debug, Clone)]
struct Attached {
    memory: LexiconMemory,
    e: ParamId,
    membership: Tensor,
}

/// Token ids plus the tagged mentions the memory step reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub ids: Vec<usize>,
    pub mentions: Vec<TaggedMention>,
}

/// Encoder output and the memory read, when one took place.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// `n × d` final encoder states.
    pub h: NodeId,
    pub read: Option<MemoryRead>,
    /// Mentions that were read, in input order.
    pub read_mentions: Vec<TaggedMention>,
}

/// Linking and association losses of one input.
#[derive(Debug, Clone, Copy)]
pub struct MemoryLosses {
    pub mwl: NodeId,
    pub mla: NodeId,
    /// Mentions that contributed.
    pub used: usize,
    /// Mentions skipped because their word is not a memory row.
    pub skipped: usize,
}

/// Greedy decoding result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub tokens: Vec<String>,
    /// The length limit was hit before the end token.
    pub truncated: bool,
}

impl Generation {
    pub fn text(&self) -> String {
        crate::text::detokenize(&self.tokens)
    }
}

/// Pre-norm transformer encoder-decoder with tied input/output embeddings
/// and an optional lexicon-memory read after encoder layer `memory_layer`.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    ids: Ids,
    attached: Option<Attached>,
}

fn norm(store: &mut ParamStore, name: &str, d: usize) -> Norm {
    Norm {
        g: store.add(format!("{name}.g"), Tensor::filled(&[1, d], 1.0), true),
        b: store.add(format!("{name}.b"), Tensor::zeros(&[1, d]), true),
    }
}

impl Model {
    /// Fresh model with weights drawn from `config.seed`.
    pub fn new(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut s = ParamStore::new();
        let (d, f, v) = (config.d_model, config.d_ff, vocab.len());
        let proj = |s: &mut ParamStore, rng: &mut ChaCha8Rng, name: String, i: usize, o: usize| {
            s.add(name, randn(rng, i, o, 1.0 / (i as f64).sqrt()), true)
        };
        let attn = |s: &mut ParamStore, rng: &mut ChaCha8Rng, p: &str| Attn {
            wq: proj(s, rng, format!("{p}.wq"), d, d),
            wk: proj(s, rng, format!("{p}.wk"), d, d),
            wv: proj(s, rng, format!("{p}.wv"), d, d),
            wo: proj(s, rng, format!("{p}.wo"), d, d),
        };
        let ff = |s: &mut ParamStore, rng: &mut ChaCha8Rng, p: &str| Ff {
            w1: proj(s, rng, format!("{p}.w1"), d, f),
            b1: s.add(format!("{p}.b1"), Tensor::zeros(&[1, f]), true),
            w2: proj(s, rng, format!("{p}.w2"), f, d),
            b2: s.add(format!("{p}.b2"), Tensor::zeros(&[1, d]), true),
        };
        let emb = s.add("emb", randn(&mut rng, v, d, config.init_std), true);
        let enc_pos = s.add("enc.pos", randn(&mut rng, config.max_len, d, config.init_std), true);
        let dec_pos = s.add("dec.pos", randn(&mut rng, config.max_len, d, config.init_std), true);
        let enc = (0..config.n_encoder_layers)
            .map(|l| EncLayer {
                ln1: norm(&mut s, &format!("enc.{l}.ln1"), d),
                attn: attn(&mut s, &mut rng, &format!("enc.{l}.attn")),
                ln2: norm(&mut s, &format!("enc.{l}.ln2"), d),
                ff: ff(&mut s, &mut rng, &format!("enc.{l}.ff")),
            })
            .collect();
        let enc_ln = norm(&mut s, "enc.ln", d);
        let dec = (0..config.n_decoder_layers)
            .map(|l| DecLayer {
                ln1: norm(&mut s, &format!("dec.{l}.ln1"), d),
                self_attn: attn(&mut s, &mut rng, &format!("dec.{l}.self")),
                ln2: norm(&mut s, &format!("dec.{l}.ln2"), d),
                cross: attn(&mut s, &mut rng, &format!("dec.{l}.cross")),
                ln3: norm(&mut s, &format!("dec.{l}.ln3"), d),
                ff: ff(&mut s, &mut rng, &format!("dec.{l}.ff")),
            })
            .collect();
        let dec_ln = norm(&mut s, "dec.ln", d);
        // Bilinear between two width-d vectors, so scaled by 1/d rather than 1/sqrt(d).
        let mem_w1 = s.add("memory.w1", randn(&mut rng, d, d, 1.0 / d as f64), true);
        let mem_w2 = proj(&mut s, &mut rng, "memory.w2".into(), d, d);
        let mem_ln = norm(&mut s, "memory.ln", d);
        Ok(Model {
            config,
            vocab,
            store: s,
            ids: Ids {
                emb,
                enc_pos,
                dec_pos,
                enc,
                enc_ln,
                dec,
                dec_ln,
                mem_w1,
                mem_w2,
                mem_ln,
            },
            attached: None,
        })
    }

    pub fn param(&self, name: &str) -> Option<ParamId> {
        self.store.id(name)
    }

    pub fn memory_weights(&self) -> (ParamId, ParamId) {
        (self.ids.mem_w1, self.ids.mem_w2)
    }

    /// Attach a frozen memory; its rows become the non-trainable parameter
    /// [`MEMORY_PARAM`].
    pub fn attach_memory(&mut self, memory: LexiconMemory) -> Result<()> {
        if memory.d_model() != self.config.d_model {
            return Err(Error::Shape(format!(
                "memory width {} differs from d_model {}",
                memory.d_model(),
                self.config.d_model
            )));
        }
        let e = match self.store.id(MEMORY_PARAM) {
            Some(id) => {
                let p = self.store.get_mut(id);
                p.tensor = memory.e.clone();
                p.gradient = Tensor::zeros(memory.e.shape());
                id
            }
            None => self.store.add(MEMORY_PARAM, memory.e.clone(), false),
        };
        let membership = memory.membership();
        self.attached = Some(Attached { memory, e, membership });
        Ok(())
    }

    pub fn memory(&self) -> Option<&LexiconMemory> {
        self.attached.as_ref().map(|a| &a.memory)
    }

    pub fn memory_param(&self) -> Option<ParamId> {
        self.attached.as_ref().map(|a| a.e)
    }

    /// Hash over configuration, vocabulary and every parameter value.
    pub fn snapshot_hash(&self) -> String {
        let list: Vec<(&str, &Tensor)> = self.store.iter().map(|(_, p)| (p.name.as_str(), &p.tensor)).collect();
        let mut bytes = encode_tensors(&list, DType::F64);
        bytes.extend_from_slice(self.config.hash().as_bytes());
        bytes.extend_from_slice(self.vocab.content_hash().as_bytes());
        sha256_hex(&bytes)
    }

    /// Static embedding of a lexicon word, used for memory rows without
    /// bank mentions. Unknown words fall back to the mean embedding.
    pub fn static_embedding(&self, word: &str) -> Vec<f64> {
        let e = self.store.value(self.ids.emb);
        match self.vocab.get(&word.to_lowercase()).or_else(|| self.vocab.get(word)) {
            Some(id) => e.row(id).to_vec(),
            None => {
                let mut m = vec![0.0; e.cols()];
                for r in 0..e.rows() {
                    for (a, b) in m.iter_mut().zip(e.row(r)) {
                        *a += b;
                    }
                }
                m.iter_mut().for_each(|v| *v /= e.rows() as f64);
                m
            }
        }
    }

    /// Ids and mentions of an already tagged token sequence. Mention rows
    /// are resolved against `lexicon` when given.
    pub fn prepare<S: AsRef<str>>(&self, tokens: &[S], lexicon: Option<&Lexicon>) -> Result<ModelInput> {
        if tokens.len() > self.config.max_len {
            return Err(Error::Validation(format!(
                "input of {} tokens exceeds max_len {}",
                tokens.len(),
                self.config.max_len
            )));
        }
        let mut mentions = Vec::new();
        let mut open: Option<usize> = None;
        for (i, t) in tokens.iter().enumerate() {
            match t.as_ref() {
                MENTION_OPEN => {
                    if open.replace(i).is_some() {
                        return Err(Error::Validation(format!("nested {MENTION_OPEN} at token {i}")));
                    }
                }
                MENTION_CLOSE => {
                    let o = open
                        .take()
                        .ok_or_else(|| Error::Validation(format!("{MENTION_CLOSE} without opening tag at token {i}")))?;
                    let inner = &tokens[o + 1..i];
                    let entry = match (lexicon, inner) {
                        (Some(lex), [w]) => match_token(w.as_ref(), lex),
                        _ => None,
                    };
                    mentions.push(TaggedMention { open: o, close: i, entry });
                }
                _ => {}
            }
        }
        if let Some(o) = open {
            return Err(Error::Validation(format!("unclosed {MENTION_OPEN} at token {o}")));
        }
        Ok(ModelInput {
            ids: self.vocab.ids(tokens),
            mentions,
        })
    }

    /// Tag lexicon mentions in plain tokens, then [`Model::prepare`].
    pub fn tag_and_prepare<S: AsRef<str>>(&self, tokens: &[S], lexicon: &Lexicon) -> Result<ModelInput> {
        let (tagged, mentions) = insert_mention_tags(tokens, &tag_mentions(tokens, lexicon));
        self.from_tagged(&tagged, mentions)
    }

    /// Input from tokens whose mention tags were inserted by
    /// [`insert_mention_tags`].
    pub fn from_tagged<S: AsRef<str>>(&self, tagged: &[S], mentions: Vec<TaggedMention>) -> Result<ModelInput> {
        if tagged.len() > self.config.max_len {
            return Err(Error::Validation(format!(
                "input of {} tokens exceeds max_len {}",
                tagged.len(),
                self.config.max_len
            )));
        }
        Ok(ModelInput {
            ids: self.vocab.ids(tagged),
            mentions,
        })
    }

    /// Copy of the model with the memory removed.
    pub fn without_memory(&self) -> Result<Model> {
        let mut m = Model::new(self.config.clone(), self.vocab.clone())?;
        for (id, p) in m.store.iter().map(|(id, p)| (id, p.name.clone())).collect::<Vec<_>>() {
            let src = self.store.id(&p).expect("same architecture");
            m.store.get_mut(id).tensor = self.store.value(src).clone();
        }
        Ok(m)
    }

    fn layer_norm(&self, g: &mut Graph<'_>, x: NodeId, n: Norm) -> NodeId {
        let (gn, bn) = (g.param(n.g), g.param(n.b));
        g.layer_norm(x, gn, bn, self.config.ln_eps)
    }

    fn attention(&self, g: &mut Graph<'_>, xq: NodeId, xkv: NodeId, a: Attn, mask: Option<&Tensor>) -> NodeId {
        let (wq, wk, wv, wo) = (g.param(a.wq), g.param(a.wk), g.param(a.wv), g.param(a.wo));
        let q = g.matmul(xq, wq);
        let k = g.matmul(xkv, wk);
        let v = g.matmul(xkv, wv);
        let h = self.config.n_heads;
        let dh = self.config.d_model / h;
        let heads: Vec<NodeId> = (0..h)
            .map(|i| {
                let (s, e) = (i * dh, (i + 1) * dh);
                let (qh, kh, vh) = (g.slice_cols(q, s, e), g.slice_cols(k, s, e), g.slice_cols(v, s, e));
                g.attention(qh, kh, vh, mask)
            })
            .collect();
        let cat = if h == 1 { heads[0] } else { g.concat_cols(&heads) };
        g.matmul(cat, wo)
    }

    fn feed_forward(&self, g: &mut Graph<'_>, x: NodeId, f: Ff) -> NodeId {
        let (w1, b1, w2, b2) = (g.param(f.w1), g.param(f.b1), g.param(f.w2), g.param(f.b2));
        let h = g.linear(x, w1, Some(b1));
        let h = g.gelu(h);
        g.linear(h, w2, Some(b2))
    }

    fn enc_layer(&self, g: &mut Graph<'_>, x: NodeId, l: EncLayer) -> NodeId {
        let n = self.layer_norm(g, x, l.ln1);
        let a = self.attention(g, n, n, l.attn, None);
        let x = g.add(x, a);
        let n = self.layer_norm(g, x, l.ln2);
        let f = self.feed_forward(g, n, l.ff);
        g.add(x, f)
    }

    fn embed(&self, g: &mut Graph<'_>, ids: &[usize], pos: ParamId) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::Validation("empty input sequence".into()));
        }
        if ids.len() > self.config.max_len {
            return Err(Error::Validation(format!(
                "sequence of {} tokens exceeds max_len {}",
                ids.len(),
                self.config.max_len
            )));
        }
        let e = g.param(self.ids.emb);
        let x = g.embedding(e, ids);
        let p = g.param(pos);
        let p = g.slice_rows(p, 0, ids.len());
        Ok(g.add(x, p))
    }

    /// Run the encoder. With `stop_after_memory` only layers `1..=L1` and
    /// the memory step run, and `h` is the spliced layer-`L1` state.
    pub fn encode(&self, g: &mut Graph<'_>, input: &ModelInput, stop_after_memory: bool) -> Result<Encoded> {
        let mut x = self.embed(g, &input.ids, self.ids.enc_pos)?;
        let l1 = self.config.memory_layer;
        for &layer in &self.ids.enc[..l1] {
            x = self.enc_layer(g, x, layer);
        }
        let mut read = None;
        let mut read_mentions = Vec::new();
        if let (Some(att), false) = (&self.attached, input.mentions.is_empty()) {
            let queries: Vec<NodeId> = input
                .mentions
                .iter()
                .map(|m| {
                    let span = g.slice_rows(x, m.open, m.close + 1);
                    g.mean_rows(span)
                })
                .collect();
            let hq = g.concat_rows(&queries);
            let (e, w1, w2) = (g.param(att.e), g.param(self.ids.mem_w1), g.param(self.ids.mem_w2));
            let r = memory_attend(g, hq, e, w1, w2);
            let sum = g.add(hq, r.h_m);
            let new_rows = self.layer_norm(g, sum, self.ids.mem_ln);
            let n = input.ids.len();
            let mut parts = Vec::with_capacity(2 * input.mentions.len() + 1);
            let mut pos = 0;
            for (k, m) in input.mentions.iter().enumerate() {
                if m.open > pos {
                    parts.push(g.slice_rows(x, pos, m.open));
                }
                parts.push(g.slice_rows(new_rows, k, k + 1));
                pos = m.open + 1;
            }
            if pos < n {
                parts.push(g.slice_rows(x, pos, n));
            }
            x = g.concat_rows(&parts);
            read = Some(r);
            read_mentions = input.mentions.clone();
        }
        if stop_after_memory {
            return Ok(Encoded { h: x, read, read_mentions });
        }
        for &layer in &self.ids.enc[l1..] {
            x = self.enc_layer(g, x, layer);
        }
        let h = self.layer_norm(g, x, self.ids.enc_ln);
        Ok(Encoded { h, read, read_mentions })
    }

    /// Decoder logits (`T × V`) for decoder input ids, attending to `enc`.
    pub fn decode(&self, g: &mut Graph<'_>, enc: NodeId, dec_ids: &[usize]) -> Result<NodeId> {
        let mut x = self.embed(g, dec_ids, self.ids.dec_pos)?;
        let mask = causal_mask(dec_ids.len());
        for &l in &self.ids.dec {
            let n = self.layer_norm(g, x, l.ln1);
            let a = self.attention(g, n, n, l.self_attn, Some(&mask));
            x = g.add(x, a);
            let n = self.layer_norm(g, x, l.ln2);
            let c = self.attention(g, n, enc, l.cross, None);
            x = g.add(x, c);
            let n = self.layer_norm(g, x, l.ln3);
            let f = self.feed_forward(g, n, l.ff);
            x = g.add(x, f);
        }
        let h = self.layer_norm(g, x, self.ids.dec_ln);
        let e = g.param(self.ids.emb);
        let logits = g.matmul_t(h, e, false, true);
        Ok(g.scale(logits, 1.0 / (self.config.d_model as f64).sqrt()))
    }

    /// Teacher-forced mean cross-entropy of `target` followed by the end
    /// token, decoding from `start`.
    pub fn sequence_loss<S: AsRef<str>>(&self, g: &mut Graph<'_>, enc: NodeId, start: &str, target: &[S]) -> Result<NodeId> {
        let mut gold = self.vocab.ids(target);
        gold.push(self.vocab.id(EOS));
        let mut dec_in = vec![self.vocab.id(start)];
        dec_in.extend_from_slice(&gold[..gold.len() - 1]);
        let logits = self.decode(g, enc, &dec_in)?;
        Ok(g.cross_entropy(logits, &gold))
    }

    /// MWL and MLA over the mentions read in `enc` whose word has a memory
    /// row; `None` when no mention qualifies.
    pub fn memory_losses(&self, g: &mut Graph<'_>, enc: &Encoded, form: MwlForm) -> Result<Option<MemoryLosses>> {
        let (Some(att), Some(read)) = (&self.attached, enc.read) else {
            return Ok(None);
        };
        let mut mwl = Vec::new();
        let mut mla = Vec::new();
        let mut skipped = 0;
        let membership = g.constant(att.membership.clone());
        let scores = aggregate_morality_scores_node(g, read.alpha, membership);
        for (row, m) in enc.read_mentions.iter().enumerate() {
            let Some(entry) = m.entry.filter(|&e| e < att.memory.len()) else {
                skipped += 1;
                continue;
            };
            let gold: std::collections::BTreeSet<Morality> = Morality::ALL
                .into_iter()
                .filter(|v| att.memory.morality_index[v.index()].contains(&entry))
                .collect();
            mwl.push(mwl_loss_node(g, &read, row, entry, form));
            mla.push(mla_loss_node(g, scores, row, &gold)?);
        }
        if mwl.is_empty() {
            return Ok(None);
        }
        let used = mwl.len();
        let mean = |g: &mut Graph<'_>, v: &[NodeId]| {
            let c = g.concat_rows(v);
            g.mean(c)
        };
        Ok(Some(MemoryLosses {
            mwl: mean(g, &mwl),
            mla: mean(g, &mla),
            used,
            skipped,
        }))
    }

    /// Memory attention weights (`mentions × rows`) of `input`, or `None`
    /// when no read takes place.
    pub fn memory_attention(&self, input: &ModelInput) -> Result<Option<Tensor>> {
        let mut g = Graph::new(&self.store);
        let enc = self.encode(&mut g, input, true)?;
        g.check_finite()?;
        Ok(enc.read.map(|r| g.value(r.alpha).clone()))
    }

    /// Final encoder states of `input` as a plain tensor.
    pub fn encode_tensor(&self, input: &ModelInput) -> Result<Tensor> {
        let mut g = Graph::new(&self.store);
        let enc = self.encode(&mut g, input, false)?;
        g.check_finite()?;
        Ok(g.value(enc.h).clone())
    }

    /// Mean-pooled final encoder states of untagged tokens.
    pub fn pooled<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        let input = ModelInput {
            ids: self.vocab.ids(tokens),
            mentions: Vec::new(),
        };
        let h = self.encode_tensor(&input)?;
        let mut out = vec![0.0; h.cols()];
        for r in 0..h.rows() {
            for (a, b) in out.iter_mut().zip(h.row(r)) {
                *a += b;
            }
        }
        out.iter_mut().for_each(|v| *v /= h.rows() as f64);
        Ok(out)
    }

    /// Mention queries `h_q` at layer `L1` of a tagged input, without any
    /// memory read. Used to build the memory.
    pub fn mention_queries(&self, input: &ModelInput) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.store);
        let mut x = self.embed(&mut g, &input.ids, self.ids.enc_pos)?;
        for &layer in &self.ids.enc[..self.config.memory_layer] {
            x = self.enc_layer(&mut g, x, layer);
        }
        g.check_finite()?;
        let h = g.value(x);
        Ok(input
            .mentions
            .iter()
            .map(|m| {
                let mut q = vec![0.0; h.cols()];
                for r in m.open..=m.close {
                    for (a, b) in q.iter_mut().zip(h.row(r)) {
                        *a += b;
                    }
                }
                let n = (m.close - m.open + 1) as f64;
                q.iter_mut().for_each(|v| *v /= n);
                q
            })
            .collect())
    }

    /// Greedy decoding of at most `max_len` tokens.
    pub fn generate(&self, input: &ModelInput, max_len: usize) -> Result<Generation> {
        let enc = if input.ids.is_empty() {
            None
        } else {
            Some(self.encode_tensor(input)?)
        };
        let eos = self.vocab.id(EOS);
        let mut dec = vec![self.vocab.id(BOS)];
        let mut tokens = Vec::new();
        let limit = max_len.min(self.config.max_len.saturating_sub(1));
        while tokens.len() < limit {
            let mut g = Graph::new(&self.store);
            let enc_node = match &enc {
                Some(t) => g.constant(t.clone()),
                // decoding from the start token only: a single zero memory state
                None => g.constant(Tensor::zeros(&[1, self.config.d_model])),
            };
            let logits = self.decode(&mut g, enc_node, &dec)?;
            g.check_finite()?;
            let l = g.value(logits);
            let last = l.row(l.rows() - 1);
            let mut best = 0;
            for (i, &v) in last.iter().enumerate() {
                if v > last[best] {
                    best = i;
                }
            }
            if best == eos {
                return Ok(Generation { tokens, truncated: false });
            }
            tokens.push(self.vocab.token(best).to_string());
            dec.push(best);
        }
        Ok(Generation { tokens, truncated: true })
    }

    /// Write `config.json`, `vocab.json`, `params.bin`, `manifest.json` and,
    /// with a memory attached, `memory/`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("config.json", serde_json::to_string_pretty(&self.config)? + "\n")?;
        write("vocab.json", serde_json::to_string(&self.vocab)? + "\n")?;
        save_params(&dir.join("params.bin"), &self.store, DType::F64)?;
        if let Some(att) = &self.attached {
            save_memory(&dir.join("memory"), &att.memory)?;
        }
        let manifest = CheckpointManifest {
            schema: CHECKPOINT_SCHEMA.into(),
            config_hash: self.config.hash(),
            vocab_hash: self.vocab.content_hash(),
            snapshot_hash: self.snapshot_hash(),
            lexicon_hash: self.memory().map(|m| m.lexicon_hash.clone()),
        };
        write("manifest.json", serde_json::to_string_pretty(&manifest)? + "\n")
    }

    /// Load a checkpoint written by [`Model::save`]. A lexicon is required
    /// when the checkpoint carries a memory.
    pub fn load(dir: &Path, lexicon: Option<&Lexicon>) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let manifest: CheckpointManifest = serde_json::from_str(&read("manifest.json")?)?;
        if manifest.schema != CHECKPOINT_SCHEMA {
            return Err(Error::Validation(format!("{}: unknown checkpoint schema {}", dir.display(), manifest.schema)));
        }
        let config: ModelConfig = serde_json::from_str(&read("config.json")?)?;
        let mut vocab: Vocab = serde_json::from_str(&read("vocab.json")?)?;
        vocab.reindex();
        if config.hash() != manifest.config_hash || vocab.content_hash() != manifest.vocab_hash {
            return Err(Error::Validation(format!("{}: config or vocab does not match the manifest", dir.display())));
        }
        let mut model = Model::new(config, vocab)?;
        if manifest.lexicon_hash.is_some() {
            let lex = lexicon.ok_or_else(|| {
                Error::Config(format!("{} has a lexicon memory; a lexicon is required", dir.display()))
            })?;
            model.attach_memory(load_memory(&dir.join("memory"), lex)?)?;
        }
        load_params(&dir.join("params.bin"), &mut model.store)?;
        if let Some(att) = &mut model.attached {
            att.memory.e = model.store.value(att.e).clone();
        }
        if model.snapshot_hash() != manifest.snapshot_hash {
            return Err(Error::Validation(format!("{}: parameters do not match the manifest", dir.display())));
        }
        Ok(model)
    }
}

pub const CHECKPOINT_SCHEMA: &str = "moralevents-checkpoint/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema: String,
    pub config_hash: String,
    pub vocab_hash: String,
    pub snapshot_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicon_hash: Option<String>,
}
