use serde::{Deserialize, Serialize};

use super::{Gradients, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient norm ceiling; `0` disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 1.0,
        }
    }
}

/// Adam with a fixed learning rate and global-norm clipping.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Option<Tensor>>,
    v: Vec<Option<Tensor>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one update to the trainable parameters and return the gradient
    /// norm before clipping. Gradients for frozen parameters are ignored.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> f64 {
        let norm = grads
            .iter()
            .filter(|(id, _)| store.get(*id).trainable)
            .map(|(_, g)| g.sum_sq())
            .sum::<f64>()
            .sqrt();
        let c = &self.config;
        let scale = if c.clip_norm > 0.0 && norm > c.clip_norm {
            c.clip_norm / norm
        } else {
            1.0
        };
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        for (id, g) in grads.iter() {
            let p = store.get_mut(id);
            if !p.trainable {
                continue;
            }
            let m = self.m[id.0].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self.v[id.0].get_or_insert_with(|| Tensor::zeros(g.shape()));
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, (w, &gi)) in p.tensor.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gi = gi * scale;
                md[i] = c.beta1 * md[i] + (1.0 - c.beta1) * gi;
                vd[i] = c.beta2 * vd[i] + (1.0 - c.beta2) * gi * gi;
                let mh = md[i] / bc1;
                let vh = vd[i] / bc2;
                *w -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
        norm
    }
}
