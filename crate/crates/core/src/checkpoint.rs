//! Versioned JSON checkpoints. Every f64 is written through the shortest
//! round-trippable decimal representation, so save -> load -> save is
//! bit-identical for finite values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::train::{Adam, TrainState};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Hash of the run configuration the model was built from; loads verify
    /// it when the caller supplies an expected value.
    pub config_hash: String,
    pub model: Model,
    pub optimizer: Adam,
    pub train_state: TrainState,
}

impl Checkpoint {
    pub fn new(
        model: Model,
        optimizer: Adam,
        train_state: TrainState,
        config_hash: String,
    ) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash,
            model,
            optimizer,
            train_state,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path)?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Contract(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Load and require a matching config hash.
    pub fn load_verified(path: &Path, expected_hash: &str) -> Result<Checkpoint> {
        let ckpt = Checkpoint::load(path)?;
        if ckpt.config_hash != expected_hash {
            return Err(Error::Checksum(format!(
                "checkpoint was built from config {}, current config hashes to {expected_hash}",
                ckpt.config_hash
            )));
        }
        Ok(ckpt)
    }
}
