//! Run configuration file: TOML with `[encoder]`, `[decoder]` and `[train]`
//! sections. Omitted keys take defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoder::{DecoderConfig, ModelConfig};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Model geometry with the decoder vocabulary fixed to `vocab_size`.
    pub fn model_config(&self, vocab_size: usize) -> Result<ModelConfig> {
        if self.decoder.vocab_size != 0 && self.decoder.vocab_size != vocab_size {
            return Err(Error::Config(format!(
                "decoder.vocab_size = {} but the vocabulary has {vocab_size} tokens",
                self.decoder.vocab_size
            )));
        }
        let config = ModelConfig {
            encoder: self.encoder,
            decoder: DecoderConfig {
                vocab_size,
                ..self.decoder
            },
        };
        config.validate()?;
        self.train.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_with_defaults() {
        let c = RunConfig::parse(
            "[encoder]\nmodel_dim = 16\nnum_heads = 4\n\n[decoder]\nmodel_dim = 16\n\n[train]\nepochs = 3\ngrad_clip = 1.0\n",
        )
        .unwrap();
        assert_eq!(c.encoder.model_dim, 16);
        assert_eq!(c.encoder.patch_size, 8);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.grad_clip, Some(1.0));
        assert_eq!(c.train.learning_rate, 1e-3);
        assert!(c.model_config(12).is_ok());
    }

    #[test]
    fn unknown_keys_fail() {
        assert!(RunConfig::parse("[encoder]\nmodel_dmi = 16\n").is_err());
        assert!(RunConfig::parse("[trian]\nepochs = 1\n").is_err());
        assert!(RunConfig::parse("seed = 1\n").is_err());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn vocab_size_mismatch() {
        let mut c = RunConfig::default();
        c.decoder.vocab_size = 10;
        assert!(c.model_config(11).is_err());
        assert!(c.model_config(10).is_ok());
    }
}
