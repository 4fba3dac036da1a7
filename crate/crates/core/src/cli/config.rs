//! The merged run configuration read from a TOML file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::localizer::LocalizerConfig;
use crate::model::ModelConfig;
use crate::synthgen::SynthConfig;
use crate::trainer::TrainConfig;

/// One section per module; absent sections and keys keep their defaults.
///
/// ```toml
/// [model]
/// hidden = 64
/// pooling = "mean"
///
/// [train]
/// learning_rate = 1e-3
///
/// [synth]
/// n_segments = 500
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub localizer: LocalizerConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every section, so no command starts work on a bad configuration.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.localizer.validate()?;
        self.synth.validate()
    }
}
