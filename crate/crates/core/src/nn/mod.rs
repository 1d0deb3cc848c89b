//! Dense tensors, parameters and reverse-mode gradients.

mod checkpoint;
mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{
    decode_tensors, encode_tensors, load_params, load_tensors, save_params, save_tensors, DType,
};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{causal_mask, Gradients, Graph, NodeId};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// `rows × cols` matrix with entries drawn from `N(0, std²)`.
pub fn randn<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Tensor {
    let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| normal.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn softmax_rows_sum_to_one_and_are_positive() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let x = store.add("x", randn(&mut r, 6, 9, 5.0), true);
        let mut g = Graph::new(&store);
        let xn = g.param(x);
        let y = g.softmax(xn, None);
        let v = g.value(y);
        for i in 0..6 {
            let s: f64 = v.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(v.row(i).iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn softmax_mask_zeroes_masked_entries() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::matrix(3, 3, vec![1.0, 2.0, 3.0, 0.5, 0.5, 0.5, 9.0, -9.0, 0.0]));
        let mask = causal_mask(3);
        let y = g.softmax(x, Some(&mask));
        let v = g.value(y);
        assert_eq!(v.row(0), &[1.0, 0.0, 0.0]);
        assert!((v.get(1, 0) - 0.5).abs() < 1e-15);
        assert_eq!(v.get(1, 2), 0.0);
        g.check_finite().unwrap();
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let x = store.add("x", randn(&mut r, 5, 32, 3.0), true);
        let gain = store.add("g", Tensor::filled(&[1, 32], 1.0), true);
        let bias = store.add("b", Tensor::zeros(&[1, 32]), true);
        let mut g = Graph::new(&store);
        let (xn, gn, bn) = (g.param(x), g.param(gain), g.param(bias));
        let y = g.layer_norm(xn, gn, bn, 1e-9);
        let v = g.value(y);
        for i in 0..5 {
            let row = v.row(i);
            let mu = row.iter().sum::<f64>() / 32.0;
            let var = row.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / 32.0;
            assert!(mu.abs() < 1e-7);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn single_key_attention_returns_its_value() {
        let mut r = rng();
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let q = g.constant(randn(&mut r, 4, 8, 1.0));
        let k = g.constant(randn(&mut r, 1, 8, 1.0));
        let vt = randn(&mut r, 1, 8, 1.0);
        let v = g.constant(vt.clone());
        let out = g.attention(q, k, v, None);
        for i in 0..4 {
            assert_eq!(g.value(out).row(i), vt.row(0));
        }
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let p = store.add("p", randn(&mut r, 3, 3, 1.0), true);
        let rep = grad_check(&mut store, &[p], 1e-5, 64, &mut r, |g| {
            Ok(g.constant(Tensor::scalar(4.2)))
        })
        .unwrap();
        assert_eq!(rep.max_rel_error, 0.0);
    }

    #[test]
    fn sum_of_squares_gradient_is_two_theta() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::filled(&[1, 5], 1.0), true);
        let mut g = Graph::new(&store);
        let x = g.param(p);
        let sq = g.mul(x, x);
        let l = g.sum(sq);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[2.0; 5]);
    }

    #[test]
    fn nan_trips_numeric_error() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.constant(Tensor::scalar(f64::NAN));
        let l = g.sum(x);
        assert!(g.backward(l).unwrap_err().is_numeric());
    }

    #[test]
    fn frozen_parameters_get_no_gradient() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let a = store.add("a", randn(&mut r, 2, 2, 1.0), false);
        let b = store.add("b", randn(&mut r, 2, 2, 1.0), true);
        let mut g = Graph::new(&store);
        let (an, bn) = (g.param(a), g.param(b));
        let y = g.matmul(an, bn);
        let l = g.sum(y);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(a).is_none());
        assert!(grads.get(b).is_some());
    }

    fn check(store: &mut ParamStore, ids: &[ParamId], f: impl for<'g> Fn(&mut Graph<'g>) -> crate::Result<NodeId>) {
        let mut r = rng();
        let rep = grad_check(store, ids, 1e-5, 64, &mut r, f).unwrap();
        assert!(rep.max_rel_error < 1e-3, "{rep:?}");
    }

    #[test]
    fn every_primitive_passes_grad_check() {
        let mut r = rng();
        let mut s = ParamStore::new();
        let a = s.add("a", randn(&mut r, 4, 6, 1.0), true);
        let b = s.add("b", randn(&mut r, 6, 5, 1.0), true);
        let c = s.add("c", randn(&mut r, 4, 6, 1.0), true);
        let row = s.add("row", randn(&mut r, 1, 6, 1.0), true);
        let gain = s.add("gain", randn(&mut r, 1, 6, 1.0), true);
        let ids = [a, b, c, row, gain];
        let w = randn(&mut r, 4, 6, 1.0);
        let weigh = move |g: &mut Graph<'_>, x: NodeId| {
            let wn = g.constant(w.clone());
            let y = g.mul(x, wn);
            g.sum(y)
        };

        let wf = weigh.clone();
        check(&mut s, &ids, move |g| {
            let (an, bn) = (g.param(a), g.param(b));
            let y = g.matmul(an, bn);
            let y = g.slice_cols(y, 0, 5);
            let z = g.mul(y, y);
            Ok(g.mean(z))
        });
        check(&mut s, &ids, move |g| {
            let (an, cn) = (g.param(a), g.param(c));
            let y = g.matmul_t(an, cn, true, false);
            let y2 = g.matmul_t(cn, an, false, true);
            let t = g.transpose(y2);
            let z = g.add(t, t);
            let z = g.mul(z, y2);
            let s1 = g.sum(z);
            let s2 = g.sum(y);
            let q = g.mul(s2, s2);
            Ok(g.add(s1, q))
        });
        check(&mut s, &ids, move |g| {
            let (an, rn, gn) = (g.param(a), g.param(row), g.param(gain));
            let y = g.add_row(an, rn);
            let y = g.layer_norm(y, gn, rn, 1e-9);
            let y = g.gelu(y);
            Ok(wf(g, y))
        });
        let wf = weigh.clone();
        check(&mut s, &ids, move |g| {
            let (an, cn) = (g.param(a), g.param(c));
            let mask = causal_mask(6);
            let y = g.slice_rows(an, 0, 4);
            let z = g.concat_rows(&[y, cn]);
            let z = g.slice_rows(z, 2, 8);
            let p = g.softmax(z, Some(&mask));
            let p = g.slice_rows(p, 0, 4);
            let p = g.scale(p, 3.0);
            let p = g.add_scalar(p, 0.5);
            Ok(wf(g, p))
        });
        check(&mut s, &ids, move |g| {
            let (an, bn) = (g.param(a), g.param(b));
            let e = g.embedding(an, &[1, 3, 1, 0]);
            let logits = g.matmul(e, bn);
            let ce = g.cross_entropy(logits, &[0, 2, 3, 3]);
            let el = g.element(logits, 5);
            let m = g.mean_rows(logits);
            let ms = g.sum(m);
            let t = g.add(ce, el);
            Ok(g.add(t, ms))
        });
        let wf = weigh;
        check(&mut s, &ids, move |g| {
            let (an, cn, rn) = (g.param(a), g.param(c), g.param(row));
            let l = g.slice_cols(an, 0, 2);
            let rr = g.slice_cols(cn, 2, 6);
            let y = g.concat_cols(&[l, rr]);
            let q = g.matmul_t(rn, y, false, true);
            let q = g.transpose(q);
            let k = g.slice_rows(cn, 0, 2);
            let att = g.attention(y, k, k, None);
            let o = g.add(att, y);
            let s1 = wf(g, o);
            let s2 = g.sum(q);
            Ok(g.add(s1, s2))
        });
    }

    #[test]
    fn adam_reduces_a_quadratic() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::filled(&[1, 3], 2.0), true);
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        for _ in 0..300 {
            let grads = {
                let mut g = Graph::new(&store);
                let x = g.param(p);
                let sq = g.mul(x, x);
                let l = g.sum(sq);
                g.backward(l).unwrap()
            };
            opt.step(&mut store, &grads);
        }
        assert!(store.value(p).data().iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn checkpoint_roundtrip_is_exact_in_f64() {
        let mut r = rng();
        let mut store = ParamStore::new();
        store.add("w", randn(&mut r, 3, 4, 1.0), true);
        store.add("e", randn(&mut r, 2, 4, 1.0), false);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        save_params(&path, &store, DType::F64).unwrap();
        let mut other = store.clone();
        for id in other.ids().collect::<Vec<_>>() {
            other.get_mut(id).tensor.fill(0.0);
        }
        load_params(&path, &mut other).unwrap();
        assert_eq!(other, store);

        save_params(&path, &store, DType::F32).unwrap();
        load_params(&path, &mut other).unwrap();
        let w = other.value(other.id("w").unwrap()).data()[0];
        assert_eq!(w, store.value(store.id("w").unwrap()).data()[0] as f32 as f64);
    }
}
