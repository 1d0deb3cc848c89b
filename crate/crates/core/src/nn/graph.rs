//! Reverse-mode differentiation over an explicit computation record.
//!
//! A [`Graph`] borrows the parameter store, records every operation with its
//! value as it is built, and [`Graph::backward`] walks the record in reverse
//! to produce parameter gradients. Reductions run in a fixed order, so two
//! evaluations of the same computation are bit-identical.

use super::tensor::gemm;
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Gelu(NodeId),
    Softmax(NodeId),
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId, xhat: Vec<f64>, inv_std: Vec<f64> },
    Embedding { table: NodeId, ids: Vec<usize> },
    CrossEntropy { logits: NodeId, targets: Vec<usize>, probs: Vec<f64> },
    Sum(NodeId),
    Mean(NodeId),
    MeanRows(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows { a: NodeId, start: usize },
    SliceCols { a: NodeId, start: usize },
    Element { a: NodeId, index: usize },
    Transpose(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Param(_) => "param",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Gelu(..) => "gelu",
            Op::Softmax(..) => "softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Embedding { .. } => "embedding",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MeanRows(..) => "mean_rows",
            Op::ConcatRows(..) => "concat_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::Element { .. } => "element",
            Op::Transpose(..) => "transpose",
        }
    }
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients of trainable parameters, indexed by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    by_param: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.get(id.0).and_then(|g| g.as_ref())
    }

    fn add(&mut self, id: ParamId, g: &Tensor) {
        if self.by_param.len() <= id.0 {
            self.by_param.resize(id.0 + 1, None);
        }
        match &mut self.by_param[id.0] {
            Some(t) => t.add_assign(g),
            slot => *slot = Some(g.clone()),
        }
    }

    /// Accumulate `other` into `self`.
    pub fn merge(&mut self, other: &Gradients) {
        for (i, g) in other.by_param.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.by_param.iter_mut().flatten() {
            t.scale_assign(s);
        }
    }

    /// Add into the stored parameter gradients.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (i, g) in self.by_param.iter().enumerate() {
            if let Some(g) = g {
                store.get_mut(ParamId(i)).gradient.add_assign(g);
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

/// Computation record over a borrowed parameter store.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    nonfinite: Option<String>,
}

fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let du = C * (1.0 + 3.0 * 0.044715 * x * x);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    (y, dy)
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            nonfinite: None,
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let n = &self.nodes[id.0];
        match (&n.value, &n.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.store.value(*p),
            _ => unreachable!("node without value"),
        }
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        if self.nonfinite.is_none() && !value.is_finite() {
            self.nonfinite = Some(format!("{} produced a non-finite value (node {})", op.name(), self.nodes.len()));
        }
        self.nodes.push(Node {
            value: Some(value),
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Fails if any recorded value was NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match &self.nonfinite {
            Some(msg) => Err(Error::Numeric(msg.clone())),
            None => Ok(()),
        }
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf, false)
    }

    /// Reference a stored parameter; it receives gradient iff trainable.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        let p = self.store.get(id);
        if self.nonfinite.is_none() && !p.tensor.is_finite() {
            self.nonfinite = Some(format!("parameter {} is non-finite", p.name));
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            requires_grad: p.trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// `op(a) · op(b)` where `op` transposes when the flag is set.
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        let m = if ta { av.cols() } else { av.rows() };
        let n = if tb { bv.rows() } else { bv.cols() };
        let mut out = vec![0.0; m * n];
        gemm(
            1.0,
            av.data(),
            av.rows(),
            av.cols(),
            ta,
            bv.data(),
            bv.rows(),
            bv.cols(),
            tb,
            0.0,
            &mut out,
        );
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::matrix(m, n, out), Op::MatMul { a, b, ta, tb }, rg)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.matmul_t(a, b, false, false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add shapes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::from_vec(av.shape(), data).unwrap();
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Add(a, b), rg)
    }

    /// Add a `1 × n` row to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (av, rv) = (self.value(a), self.value(row));
        let n = av.cols();
        assert_eq!(rv.len(), n, "add_row width");
        let mut data = av.data().to_vec();
        for r in data.chunks_mut(n) {
            for (x, y) in r.iter_mut().zip(rv.data()) {
                *x += y;
            }
        }
        let t = Tensor::matrix(av.rows(), n, data);
        let rg = self.rg(a) || self.rg(row);
        self.push(t, Op::AddRow(a, row), rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mul shapes");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::from_vec(av.shape(), data).unwrap();
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * s).collect();
        let t = Tensor::from_vec(av.shape(), data).unwrap();
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x + s).collect();
        let t = Tensor::from_vec(av.shape(), data).unwrap();
        let rg = self.rg(a);
        self.push(t, Op::AddScalar(a), rg)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| gelu(x).0).collect();
        let t = Tensor::from_vec(av.shape(), data).unwrap();
        let rg = self.rg(a);
        self.push(t, Op::Gelu(a), rg)
    }

    /// Row-wise softmax with max subtraction. `mask`, when given, is an
    /// additive tensor of `0` / `-inf` entries of the same shape.
    pub fn softmax(&mut self, a: NodeId, mask: Option<&Tensor>) -> NodeId {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        if let Some(mk) = mask {
            assert_eq!(mk.len(), av.len(), "softmax mask shape");
        }
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let x = av.row(r);
            let mrow = mask.map(|mk| mk.row(r));
            let live = |j: usize| mrow.is_none_or(|mr| mr[j] != f64::NEG_INFINITY);
            let mut mx = f64::NEG_INFINITY;
            for j in 0..n {
                if live(j) {
                    let v = x[j] + mrow.map_or(0.0, |mr| mr[j]);
                    mx = mx.max(v);
                }
            }
            let o = &mut out[r * n..(r + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                if live(j) {
                    let e = (x[j] + mrow.map_or(0.0, |mr| mr[j]) - mx).exp();
                    o[j] = e;
                    s += e;
                }
            }
            // a fully masked row yields NaN and trips the finite check
            for v in o.iter_mut() {
                *v /= s;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(m, n, out), Op::Softmax(a), rg)
    }

    /// Row-wise layer normalization followed by the affine `gain`/`bias` rows.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> NodeId {
        let xv = self.value(x);
        let (m, n) = (xv.rows(), xv.cols());
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        assert_eq!(g.len(), n, "layer_norm gain width");
        assert_eq!(b.len(), n, "layer_norm bias width");
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = xv.row(r);
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let h = (row[j] - mu) * is;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            Tensor::matrix(m, n, out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    /// Rows `ids` of `table`.
    pub fn embedding(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let tv = self.value(table);
        let d = tv.cols();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            assert!(i < tv.rows(), "embedding id {i} out of range {}", tv.rows());
            out.extend_from_slice(tv.row(i));
        }
        let rg = self.rg(table);
        self.push(
            Tensor::matrix(ids.len(), d, out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// Mean token cross-entropy of row-wise logits against target ids,
    /// computed with log-sum-exp.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let lv = self.value(logits);
        let (m, n) = (lv.rows(), lv.cols());
        assert_eq!(m, targets.len(), "cross_entropy target count");
        assert!(m > 0, "cross_entropy over zero rows");
        let mut probs = vec![0.0; m * n];
        let mut total = 0.0;
        for r in 0..m {
            let x = lv.row(r);
            let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = x.iter().map(|v| (v - mx).exp()).sum();
            let lse = mx + s.ln();
            total += lse - x[targets[r]];
            for j in 0..n {
                probs[r * n + j] = (x[j] - lse).exp();
            }
        }
        let rg = self.rg(logits);
        self.push(
            Tensor::scalar(total / m as f64),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        )
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let s = av.data().iter().sum::<f64>() / av.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Column means: `m × n` to `1 × n`.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, v) in out.iter_mut().zip(av.row(r)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= m as f64);
        let rg = self.rg(a);
        self.push(Tensor::matrix(1, n, out), Op::MeanRows(a), rg)
    }

    /// Stack matrices with equal column counts along the row (sequence) axis.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let n = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), n, "concat_rows widths");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(rows, n, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let m = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let n: usize = widths.iter().sum();
        let mut data = vec![0.0; m * n];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = self.value(p);
            assert_eq!(v.rows(), m, "concat_cols heights");
            for r in 0..m {
                data[r * n + off..r * n + off + w].copy_from_slice(v.row(r));
            }
            off += w;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::matrix(m, n, data), Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let av = self.value(a);
        assert!(start <= end && end <= av.rows(), "slice_rows range");
        let n = av.cols();
        let t = Tensor::matrix(end - start, n, av.data()[start * n..end * n].to_vec());
        let rg = self.rg(a);
        self.push(t, Op::SliceRows { a, start }, rg)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let av = self.value(a);
        assert!(start <= end && end <= av.cols(), "slice_cols range");
        let m = av.rows();
        let mut data = Vec::with_capacity(m * (end - start));
        for r in 0..m {
            data.extend_from_slice(&av.row(r)[start..end]);
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(m, end - start, data), Op::SliceCols { a, start }, rg)
    }

    /// Flat element `index` as a `1 × 1` tensor.
    pub fn element(&mut self, a: NodeId, index: usize) -> NodeId {
        let v = self.value(a).data()[index];
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), Op::Element { a, index }, rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let (m, n) = (av.rows(), av.cols());
        let mut data = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                data[c * m + r] = av.get(r, c);
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::matrix(n, m, data), Op::Transpose(a), rg)
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> NodeId {
        let y = self.matmul(x, w);
        match b {
            Some(b) => self.add_row(y, b),
            None => y,
        }
    }

    /// `softmax(q kᵀ / sqrt(d) + mask) v`.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, mask: Option<&Tensor>) -> NodeId {
        let d = self.value(q).cols();
        let scores = self.matmul_t(q, k, false, true);
        let scaled = self.scale(scores, 1.0 / (d as f64).sqrt());
        let p = self.softmax(scaled, mask);
        self.matmul(p, v)
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        self.check_finite()?;
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        let mut out = Gradients::default();

        fn acc(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
            match &mut grads[id.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => out.add(*p, &g),
                Op::MatMul { a, b, ta, tb } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, n) = (g.rows(), g.cols());
                    if self.rg(*a) {
                        let mut da = vec![0.0; av.len()];
                        if !ta {
                            gemm(1.0, g.data(), m, n, false, bv.data(), bv.rows(), bv.cols(), !tb, 0.0, &mut da);
                        } else {
                            gemm(1.0, bv.data(), bv.rows(), bv.cols(), *tb, g.data(), m, n, true, 0.0, &mut da);
                        }
                        acc(&mut grads, *a, Tensor::from_vec(av.shape(), da).unwrap());
                    }
                    if self.rg(*b) {
                        let mut db = vec![0.0; bv.len()];
                        if !tb {
                            gemm(1.0, av.data(), av.rows(), av.cols(), !ta, g.data(), m, n, false, 0.0, &mut db);
                        } else {
                            gemm(1.0, g.data(), m, n, true, av.data(), av.rows(), av.cols(), *ta, 0.0, &mut db);
                        }
                        acc(&mut grads, *b, Tensor::from_vec(bv.shape(), db).unwrap());
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.rg(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(*row) {
                        let n = g.cols();
                        let mut dr = vec![0.0; n];
                        for r in 0..g.rows() {
                            for (d, v) in dr.iter_mut().zip(g.row(r)) {
                                *d += v;
                            }
                        }
                        let shape = self.value(*row).shape().to_vec();
                        acc(&mut grads, *row, Tensor::from_vec(&shape, dr).unwrap());
                    }
                    if self.rg(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        let d = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *a, Tensor::from_vec(av.shape(), d).unwrap());
                    }
                    if self.rg(*b) {
                        let d = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                        acc(&mut grads, *b, Tensor::from_vec(bv.shape(), d).unwrap());
                    }
                }
                Op::Scale(a, s) => {
                    let mut d = g;
                    d.scale_assign(*s);
                    acc(&mut grads, *a, d);
                }
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Gelu(a) => {
                    let av = self.value(*a);
                    let d = g
                        .data()
                        .iter()
                        .zip(av.data())
                        .map(|(gv, &x)| gv * gelu(x).1)
                        .collect();
                    acc(&mut grads, *a, Tensor::from_vec(av.shape(), d).unwrap());
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().unwrap();
                    let (m, n) = (y.rows(), y.cols());
                    let mut d = vec![0.0; m * n];
                    for r in 0..m {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            d[r * n + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(&mut grads, *a, Tensor::from_vec(y.shape(), d).unwrap());
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain).data();
                    let (m, n) = (g.rows(), g.cols());
                    if self.rg(*gain) || self.rg(*bias) {
                        let mut dg = vec![0.0; n];
                        let mut db = vec![0.0; n];
                        for r in 0..m {
                            for j in 0..n {
                                dg[j] += g.get(r, j) * xhat[r * n + j];
                                db[j] += g.get(r, j);
                            }
                        }
                        if self.rg(*gain) {
                            let s = self.value(*gain).shape().to_vec();
                            acc(&mut grads, *gain, Tensor::from_vec(&s, dg).unwrap());
                        }
                        if self.rg(*bias) {
                            let s = self.value(*bias).shape().to_vec();
                            acc(&mut grads, *bias, Tensor::from_vec(&s, db).unwrap());
                        }
                    }
                    if self.rg(*x) {
                        let mut dx = vec![0.0; m * n];
                        for r in 0..m {
                            let mut mean_dh = 0.0;
                            let mut mean_dh_h = 0.0;
                            for j in 0..n {
                                let dh = g.get(r, j) * gv[j];
                                mean_dh += dh;
                                mean_dh_h += dh * xhat[r * n + j];
                            }
                            mean_dh /= n as f64;
                            mean_dh_h /= n as f64;
                            for j in 0..n {
                                let dh = g.get(r, j) * gv[j];
                                dx[r * n + j] =
                                    inv_std[r] * (dh - mean_dh - xhat[r * n + j] * mean_dh_h);
                            }
                        }
                        let s = self.value(*x).shape().to_vec();
                        acc(&mut grads, *x, Tensor::from_vec(&s, dx).unwrap());
                    }
                }
                Op::Embedding { table, ids } => {
                    let tv = self.value(*table);
                    let mut d = Tensor::zeros(tv.shape());
                    for (r, &id) in ids.iter().enumerate() {
                        for (dv, gv) in d.row_mut(id).iter_mut().zip(g.row(r)) {
                            *dv += gv;
                        }
                    }
                    acc(&mut grads, *table, d);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let lv = self.value(*logits);
                    let (m, n) = (lv.rows(), lv.cols());
                    let s = g.item() / m as f64;
                    let mut d: Vec<f64> = probs.iter().map(|p| p * s).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        d[r * n + t] -= s;
                    }
                    acc(&mut grads, *logits, Tensor::from_vec(lv.shape(), d).unwrap());
                }
                Op::Sum(a) => {
                    let s = self.value(*a).shape().to_vec();
                    acc(&mut grads, *a, Tensor::filled(&s, g.item()));
                }
                Op::Mean(a) => {
                    let av = self.value(*a);
                    let s = av.shape().to_vec();
                    acc(&mut grads, *a, Tensor::filled(&s, g.item() / av.len() as f64));
                }
                Op::MeanRows(a) => {
                    let av = self.value(*a);
                    let m = av.rows();
                    let mut d = Vec::with_capacity(av.len());
                    for _ in 0..m {
                        d.extend(g.data().iter().map(|v| v / m as f64));
                    }
                    acc(&mut grads, *a, Tensor::from_vec(av.shape(), d).unwrap());
                }
                Op::ConcatRows(parts) => {
                    let n = g.cols();
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let len = pv.rows() * n;
                        if self.rg(p) {
                            let d = g.data()[off..off + len].to_vec();
                            acc(&mut grads, p, Tensor::from_vec(pv.shape(), d).unwrap());
                        }
                        off += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let (m, n) = (g.rows(), g.cols());
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let w = pv.cols();
                        if self.rg(p) {
                            let mut d = Vec::with_capacity(m * w);
                            for r in 0..m {
                                d.extend_from_slice(&g.data()[r * n + off..r * n + off + w]);
                            }
                            acc(&mut grads, p, Tensor::from_vec(pv.shape(), d).unwrap());
                        }
                        off += w;
                    }
                }
                Op::SliceRows { a, start } => {
                    let av = self.value(*a);
                    let n = av.cols();
                    let mut d = Tensor::zeros(av.shape());
                    d.data_mut()[start * n..start * n + g.len()].copy_from_slice(g.data());
                    acc(&mut grads, *a, d);
                }
                Op::SliceCols { a, start } => {
                    let av = self.value(*a);
                    let w = g.cols();
                    let mut d = Tensor::zeros(av.shape());
                    for r in 0..g.rows() {
                        d.row_mut(r)[*start..start + w].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Element { a, index } => {
                    let mut d = Tensor::zeros(self.value(*a).shape());
                    d.data_mut()[*index] = g.item();
                    acc(&mut grads, *a, d);
                }
                Op::Transpose(a) => {
                    let (m, n) = (g.rows(), g.cols());
                    let mut d = vec![0.0; m * n];
                    for r in 0..m {
                        for c in 0..n {
                            d[c * m + r] = g.get(r, c);
                        }
                    }
                    let s = self.value(*a).shape().to_vec();
                    acc(&mut grads, *a, Tensor::from_vec(&s, d).unwrap());
                }
            }
        }
        Ok(out)
    }
}

/// Additive causal mask: position `i` may attend to `j <= i`.
pub fn causal_mask(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in i + 1..n {
            t.data_mut()[i * n + j] = f64::NEG_INFINITY;
        }
    }
    t
}
