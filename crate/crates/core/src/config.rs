//! Run configuration shared by training, evaluation and the CLI.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::{feature_dim, SkipGramConfig};
use crate::frontend::{Relation, MAX_NODES};
use crate::ggnn::Aggregator;
use crate::readout::conv::{min_cols, output_cols};
use crate::readout::ReadoutKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("hidden size z = {z} is smaller than the feature size d = {d}")]
    HiddenTooSmall { z: usize, d: usize },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d_code: usize,
    pub z: usize,
    /// Number of message-passing rounds.
    pub time_steps: usize,
    pub relations: Vec<Relation>,
    pub reverse_edges: bool,
    pub aggregator: Aggregator,
    pub concat_projection: bool,
    pub readout: ReadoutKind,
    /// Number of conv stages; only 2 is supported.
    pub conv_layers: usize,
    pub conv_channels: usize,
    pub mlp_hidden: Vec<usize>,
    pub m_max: usize,
    pub mask_padding: bool,
    pub lambda: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub finetune_embeddings: bool,
    pub w2v_window: usize,
    pub w2v_negatives: usize,
    pub w2v_epochs: usize,
    pub w2v_learning_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    /// Small dimensions for tests and single-core runs.
    pub fn desk() -> Self {
        RunConfig {
            d_code: 16,
            z: 40,
            time_steps: 4,
            relations: Relation::ALL.to_vec(),
            reverse_edges: false,
            aggregator: Aggregator::Sum,
            concat_projection: false,
            readout: ReadoutKind::Conv,
            conv_layers: 2,
            conv_channels: 8,
            mlp_hidden: vec![],
            m_max: MAX_NODES,
            mask_padding: true,
            lambda: 1e-5,
            learning_rate: 1e-3,
            batch_size: 16,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 10,
            max_epochs: 100,
            train_fraction: 0.75,
            seed: 7,
            finetune_embeddings: false,
            w2v_window: 5,
            w2v_negatives: 5,
            w2v_epochs: 5,
            w2v_learning_rate: 0.025,
        }
    }

    /// Full-size hyperparameters.
    pub fn full() -> Self {
        RunConfig {
            d_code: 100,
            z: 200,
            time_steps: 6,
            learning_rate: 1e-4,
            batch_size: 128,
            patience: 100,
            max_epochs: 1000,
            ..Self::desk()
        }
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.d_code)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.feature_dim();
        if self.z < d {
            return Err(ConfigError::HiddenTooSmall { z: self.z, d });
        }
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.d_code == 0 {
            return bad("d_code must be positive".into());
        }
        if self.time_steps == 0 {
            return bad("time_steps must be at least 1".into());
        }
        if self.relations.is_empty() {
            return bad("relations must not be empty".into());
        }
        let mut seen = self.relations.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.relations.len() {
            return bad("relations contain duplicates".into());
        }
        if self.aggregator == Aggregator::Concat && !self.concat_projection {
            return bad("aggregator concat needs concat_projection".into());
        }
        if self.conv_layers != 2 {
            return bad(format!("conv_layers = {} is unsupported, only 2", self.conv_layers));
        }
        if self.conv_channels == 0 {
            return bad("conv_channels must be positive".into());
        }
        if self.readout == ReadoutKind::Conv && output_cols(self.z).is_none() {
            return bad(format!("z must be at least {} for the conv readout", min_cols()));
        }
        if !(2..=MAX_NODES).contains(&self.m_max) {
            return bad(format!("m_max must be in 2..={MAX_NODES}"));
        }
        if self.mlp_hidden.contains(&0) {
            return bad("mlp_hidden sizes must be positive".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative".into());
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch_size, patience and max_epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_eps <= 0.0 {
            return bad("Adam betas must be in [0, 1) and eps positive".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must be in (0, 1)".into());
        }
        if self.w2v_window == 0 {
            return bad("w2v_window must be positive".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config is serializable");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn skipgram(&self) -> SkipGramConfig {
        SkipGramConfig {
            d_code: self.d_code,
            window: self.w2v_window,
            negatives: self.w2v_negatives,
            epochs: self.w2v_epochs,
            learning_rate: self.w2v_learning_rate,
            seed: self.seed,
        }
    }

    /// Number of message-passing edge types.
    pub fn edge_types(&self) -> usize {
        self.relations.len() * if self.reverse_edges { 2 } else { 1 }
    }
}
