use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenizer::VOCAB_SIZE;
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self { layers: 2, heads: 2, model_dim: 64, ffn_dim: 128, max_positions: 2048, vocab_size: VOCAB_SIZE, seed: 0 }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.model_dim == 0 || self.ffn_dim == 0 {
            return Err(invalid("layers, heads, model_dim and ffn_dim must be positive"));
        }
        if self.model_dim % self.heads != 0 {
            return Err(invalid(format!("model_dim {} is not divisible by {} heads", self.model_dim, self.heads)));
        }
        if self.max_positions == 0 {
            return Err(invalid("max_positions must be positive"));
        }
        if self.vocab_size < VOCAB_SIZE {
            return Err(invalid(format!("vocab_size must be at least {VOCAB_SIZE}")));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
