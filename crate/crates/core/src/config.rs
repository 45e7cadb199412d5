//! Run configuration: flat TOML with one section per subsystem.
//! Unknown keys are rejected so typos surface immediately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::MappingKind;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Shared feature width F; prompt tokens use the same width.
    pub feature_dim: usize,
    pub d_v: usize,
    pub d_a: usize,
    pub d_t: usize,
    /// Approximate total encoder parameter count the budget splits.
    pub encoder_total_params: usize,
    /// Parameter-count fractions for (visual, audio, text).
    pub budget: [f64; 3],
    /// Prompt pool size n.
    pub pool_size: usize,
    /// Tokens per prompt value, L_p.
    pub prompt_len: usize,
    pub top_k: usize,
    /// Tokens per inherent class prompt, L_i.
    pub inherent_len: usize,
    /// Hidden width of the sparse gate; defaults to the token width.
    pub gate_hidden: usize,
    pub mapping: MappingKind,
    /// L1 weight on the gate's first layer.
    pub lambda_l1: f64,
    /// Contrastive temperature; 1.0 recovers the unscaled cosine.
    pub tau: f64,
    /// Weight of the query-key alignment pull term.
    pub beta_key_align: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_dim: 16,
            d_v: 16,
            d_a: 8,
            d_t: 12,
            encoder_total_params: 20_000,
            // facial 55%, tone of voice 38%, words 7%
            budget: [0.55, 0.38, 0.07],
            pool_size: 32,
            prompt_len: 64,
            top_k: 5,
            inherent_len: 8,
            gate_hidden: 16,
            mapping: MappingKind::Identity,
            lambda_l1: 1e-4,
            tau: 0.07,
            beta_key_align: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.prompt_len == 0 || self.inherent_len == 0 {
            return Err(Error::Config("dimensions must be >= 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.pool_size {
            return Err(Error::Config(format!(
                "top_k {} out of range for pool_size {}",
                self.top_k, self.pool_size
            )));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        if self.lambda_l1 < 0.0 || self.beta_key_align < 0.0 {
            return Err(Error::Config(
                "lambda_l1 and beta_key_align must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr_init: f64,
    pub batch_size: usize,
    pub lr_decay: f64,
    pub patience_epochs: usize,
    pub lr_floor: f64,
    pub train_acc_stop: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Per-modality drop probability during stage 2; all-dropped patterns
    /// are resampled.
    pub stage2_dropout: [f64; 3],
    pub optimizer: String,
    /// Validation loss must improve by at least this much to count.
    pub improve_epsilon: f64,
    /// Fraction of the training split held out when the dataset carries no
    /// validation split of its own.
    pub val_fraction: f64,
    /// Minimum stage-1 activation count for an entry to survive transfer.
    pub transfer_threshold: u64,
    /// Refill the transferred pool with fresh multimodal entries up to the
    /// original size.
    pub restore_pool_size: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_init: 0.002,
            batch_size: 16,
            lr_decay: 0.6,
            patience_epochs: 3,
            lr_floor: 1e-7,
            train_acc_stop: 0.80,
            max_epochs: 50,
            seed: 7,
            stage2_dropout: [0.3, 0.3, 0.3],
            optimizer: "adam".into(),
            improve_epsilon: 1e-4,
            val_fraction: 0.1,
            transfer_threshold: 1,
            restore_pool_size: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(Error::Config("lr_decay must be in (0, 1)".into()));
        }
        if !(self.train_acc_stop > 0.0 && self.train_acc_stop <= 1.0) {
            return Err(Error::Config("train_acc_stop must be in (0, 1]".into()));
        }
        if self.stage2_dropout.iter().any(|p| !(0.0..1.0).contains(p)) {
            return Err(Error::Config(
                "stage2_dropout probabilities must be in [0, 1)".into(),
            ));
        }
        if self.optimizer != "adam" {
            return Err(Error::Config(format!(
                "unsupported optimizer `{}`",
                self.optimizer
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml(&text)
    }

    /// Canonical hash of the configuration, recorded in checkpoints and
    /// reports.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

pub fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_key_is_error() {
        let text = "[model]\nfeature_dim = 8\nbanana = 3\n";
        assert!(RunConfig::from_toml(text).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = RunConfig::from_toml("[train]\nseed = 99\n").unwrap();
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.model.pool_size, 32);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.train.seed = 123;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut cfg = RunConfig::default();
        cfg.train.lr_decay = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.model.top_k = 64;
        cfg.model.pool_size = 32;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.train.stage2_dropout = [0.3, 1.0, 0.3];
        assert!(cfg.validate().is_err());
    }
}
