//! Optional TOML run configuration, overridden by command-line flags.
//!
//! Recognised keys:
//!
//! ```toml
//! seed = 0
//!
//! [model]            # any subset of the model architecture fields
//! n_encoder_layers = 4
//! memory_layer = 2
//! n_decoder_layers = 4
//! d_model = 128
//! n_heads = 4
//! d_ff = 256
//! max_len = 512
//! init_std = 1.0
//! ln_eps = 1e-9
//!
//! [train]
//! steps = 100
//! batch_size = 8
//! lr = 0.001
//! clip_norm = 1.0
//! checkpoint_every = 0
//! objectives = ["ce", "mwl", "mla"]
//! mwl_form = "one-minus-alpha"   # or "neg-log"
//! noise_density = 0.15
//! mean_span_len = 3.0
//! k = 3
//! token_budget = 256
//! max_decode = 64
//!
//! [train.weights]
//! ce = 1.0
//! mla = 0.5
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use moral_events::memory::MwlForm;
use moral_events::model::{ModelConfig, Objective, TrainConfig};
use moral_events::{Error, Result};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n_encoder_layers: Option<usize>,
    pub memory_layer: Option<usize>,
    pub n_decoder_layers: Option<usize>,
    pub d_model: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub max_len: Option<usize>,
    pub init_std: Option<f64>,
    pub ln_eps: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub steps: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub clip_norm: Option<f64>,
    pub checkpoint_every: Option<usize>,
    pub objectives: Option<Vec<String>>,
    pub weights: Option<BTreeMap<String, f64>>,
    pub mwl_form: Option<MwlForm>,
    pub noise_density: Option<f64>,
    pub mean_span_len: Option<f64>,
    pub k: Option<usize>,
    pub token_budget: Option<usize>,
    pub max_decode: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_model(&self, c: &mut ModelConfig) {
        let m = &self.model;
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = m.$f { c.$f = v; })*};
        }
        set!(n_encoder_layers, memory_layer, n_decoder_layers, d_model, n_heads, d_ff, max_len, init_std, ln_eps);
    }

    pub fn apply_train(&self, c: &mut TrainConfig) -> Result<()> {
        let t = &self.train;
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = t.$f { c.$f = v; })*};
        }
        set!(steps, batch_size, checkpoint_every, mwl_form, noise_density, mean_span_len, k, token_budget);
        if let Some(v) = t.lr {
            c.adam.lr = v;
        }
        if let Some(v) = t.clip_norm {
            c.adam.clip_norm = v;
        }
        if let Some(list) = &t.objectives {
            let objs = parse_objectives(list)?;
            set_objectives(c, &objs);
        }
        if let Some(w) = &t.weights {
            for (k, v) in w {
                let o: Objective = k.parse().map_err(Error::Config)?;
                if c.objectives.enabled(o) {
                    c.objectives.set(o, Some(*v));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_objectives<S: AsRef<str>>(list: &[S]) -> Result<Vec<Objective>> {
    list.iter()
        .map(|s| s.as_ref().parse().map_err(Error::Config))
        .collect()
}

/// Enable exactly `objs`, keeping weights already set for them.
pub fn set_objectives(c: &mut TrainConfig, objs: &[Objective]) {
    for o in Objective::ALL {
        let w = if objs.contains(&o) {
            Some(c.objectives.weight(o).unwrap_or(1.0))
        } else {
            None
        };
        c.objectives.set(o, w);
    }
}
