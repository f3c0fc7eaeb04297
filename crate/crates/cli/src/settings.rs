//! Effective configuration: defaults, then the config file, then `--set`
//! overrides, then dedicated flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use gmc_core::{Model, ModelConfig};
use gmc_train::config::parse_key_values;
use gmc_train::TrainConfig;

#[derive(Clone, Debug, Default)]
pub struct Settings {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Settings {
    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            parse_key_values(&text, |k, v| s.apply(k, v)).with_context(|| format!("in config {}", path.display()))?;
        }
        for item in overrides {
            let Some((k, v)) = item.split_once('=') else {
                bail!("--set expects key=value, got `{item}`");
            };
            if !s.apply(k.trim(), v.trim())? {
                bail!("unknown setting `{}`", k.trim());
            }
        }
        Ok(s)
    }

    fn apply(&mut self, key: &str, value: &str) -> gmc_train::Result<bool> {
        if self.model.set(key, value)? {
            return Ok(true);
        }
        self.train.set(key, value)
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model::new(self.model.clone())?)
    }

    /// Prints the effective settings in config-file syntax.
    pub fn echo(&self) {
        eprintln!("# effective configuration");
        for (k, v) in self.model.entries().into_iter().chain(self.train.entries()) {
            eprintln!("{k} = {v}");
        }
    }
}
