use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::MwlForm;
use crate::nn::AdamConfig;
use crate::text::sha256_hex;

/// Architecture of the encoder-decoder model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_encoder_layers: usize,
    /// The memory is read after this many encoder layers.
    pub memory_layer: usize,
    pub n_decoder_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    /// Standard deviation of the token and position embeddings.
    pub init_std: f64,
    pub ln_eps: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_encoder_layers: 4,
            memory_layer: 2,
            n_decoder_layers: 4,
            d_model: 128,
            n_heads: 4,
            d_ff: 256,
            max_len: 512,
            init_std: 1.0,
            ln_eps: 1e-9,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Two encoder and two decoder layers at width 32.
    pub fn tiny() -> Self {
        ModelConfig {
            n_encoder_layers: 2,
            memory_layer: 1,
            n_decoder_layers: 2,
            d_model: 32,
            n_heads: 4,
            d_ff: 64,
            max_len: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.memory_layer && self.memory_layer < self.n_encoder_layers) {
            return Err(Error::Config(format!(
                "memory layer {} must satisfy 1 <= L1 < L2 = {}",
                self.memory_layer, self.n_encoder_layers
            )));
        }
        if self.n_decoder_layers == 0 || self.d_model == 0 || self.d_ff == 0 || self.max_len == 0 {
            return Err(Error::Config("layer counts and widths must be positive".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.n_heads
            )));
        }
        if !(self.init_std > 0.0 && self.ln_eps > 0.0) {
            return Err(Error::Config("init_std and ln_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Training objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Span-corruption language modelling.
    Lm,
    /// Moral value prediction with the seed word masked.
    Mv,
    /// Moral word linking.
    Mwl,
    /// Moral label association.
    Mla,
    /// Retrieved-label masking.
    Rlm,
    /// Cross-entropy on the task target.
    Ce,
}

impl Objective {
    pub const ALL: [Objective; 6] = [
        Objective::Lm,
        Objective::Mv,
        Objective::Mwl,
        Objective::Mla,
        Objective::Rlm,
        Objective::Ce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Lm => "lm",
            Objective::Mv => "mv",
            Objective::Mwl => "mwl",
            Objective::Mla => "mla",
            Objective::Rlm => "rlm",
            Objective::Ce => "ce",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown objective {s:?}"))
    }
}

/// One flag and one weight per objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSet {
    pub lm: Option<f64>,
    pub mv: Option<f64>,
    pub mwl: Option<f64>,
    pub mla: Option<f64>,
    pub rlm: Option<f64>,
    pub ce: Option<f64>,
}

impl ObjectiveSet {
    pub fn none() -> Self {
        ObjectiveSet {
            lm: None,
            mv: None,
            mwl: None,
            mla: None,
            rlm: None,
            ce: None,
        }
    }

    /// The given objectives, each with weight 1.
    pub fn of(objectives: &[Objective]) -> Self {
        let mut s = Self::none();
        for &o in objectives {
            s.set(o, Some(1.0));
        }
        s
    }

    pub fn weight(&self, o: Objective) -> Option<f64> {
        match o {
            Objective::Lm => self.lm,
            Objective::Mv => self.mv,
            Objective::Mwl => self.mwl,
            Objective::Mla => self.mla,
            Objective::Rlm => self.rlm,
            Objective::Ce => self.ce,
        }
    }

    pub fn set(&mut self, o: Objective, w: Option<f64>) {
        let slot = match o {
            Objective::Lm => &mut self.lm,
            Objective::Mv => &mut self.mv,
            Objective::Mwl => &mut self.mwl,
            Objective::Mla => &mut self.mla,
            Objective::Rlm => &mut self.rlm,
            Objective::Ce => &mut self.ce,
        };
        *slot = w;
    }

    pub fn enabled(&self, o: Objective) -> bool {
        self.weight(o).is_some()
    }

    pub fn enabled_list(&self) -> Vec<Objective> {
        Objective::ALL.into_iter().filter(|&o| self.enabled(o)).collect()
    }
}

/// Optimisation settings shared by the training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub objectives: ObjectiveSet,
    pub adam: AdamConfig,
    pub seed: u64,
    pub steps: usize,
    pub batch_size: usize,
    /// Save a checkpoint every this many steps; `0` disables.
    pub checkpoint_every: usize,
    pub mwl_form: MwlForm,
    pub noise_density: f64,
    pub mean_span_len: f64,
    /// Retrieved pairs per input.
    pub k: usize,
    /// Maximum formatted task input length in tokens.
    pub token_budget: usize,
}

impl TrainConfig {
    pub fn new(objectives: &[Objective]) -> Self {
        TrainConfig {
            objectives: ObjectiveSet::of(objectives),
            adam: AdamConfig::default(),
            seed: 0,
            steps: 100,
            batch_size: 8,
            checkpoint_every: 0,
            mwl_form: MwlForm::default(),
            noise_density: 0.15,
            mean_span_len: 3.0,
            k: crate::retrieval::DEFAULT_K,
            token_budget: crate::tasks::DEFAULT_TOKEN_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.objectives.enabled_list().is_empty() {
            return Err(Error::Config("at least one objective must be enabled".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.noise_density) || self.mean_span_len < 1.0 {
            return Err(Error::Config("bad span-corruption settings".into()));
        }
        Ok(())
    }
}
