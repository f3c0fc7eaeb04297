use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Result, TrainError};

/// Where training images come from.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    /// Seeded procedural textures: `count` images of `size×size`.
    Synthetic { count: usize, size: usize },
    /// Every `.ppm` file in a directory.
    Directory(String),
}

impl Dataset {
    fn render(&self) -> String {
        match self {
            Dataset::Synthetic { count, size } => format!("synthetic:{count}x{size}"),
            Dataset::Directory(d) => d.clone(),
        }
    }

    fn parse(value: &str) -> Result<Self> {
        if value == "synthetic" {
            return Ok(Dataset::Synthetic { count: 16, size: 96 });
        }
        if let Some(spec) = value.strip_prefix("synthetic:") {
            let parsed = spec
                .split_once('x')
                .and_then(|(c, s)| Some((c.parse().ok()?, s.parse().ok()?)));
            return match parsed {
                Some((count, size)) => Ok(Dataset::Synthetic { count, size }),
                None => Err(TrainError::Config(format!(
                    "dataset `{value}` should look like synthetic:<count>x<size>"
                ))),
            };
        }
        Ok(Dataset::Directory(value.to_string()))
    }
}

/// Hyperparameters of one training stage.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub stage: u8,
    pub lambda_d1: f64,
    pub lambda_d2: f64,
    pub lambda_adv: f64,
    pub lambda_feat: f64,
    pub lr: f64,
    /// Iterations at which the learning rate halves. `None` means 60% and 85%
    /// of `iterations`.
    pub lr_halvings: Option<Vec<u64>>,
    pub batch_size: usize,
    pub patch_size: usize,
    pub iterations: u64,
    pub seed: u64,
    /// Seed of the frozen random feature extractor.
    pub feature_seed: u64,
    pub dataset: Dataset,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage: 1,
            lambda_d1: 0.1,
            lambda_d2: 0.01,
            lambda_adv: 1.0,
            lambda_feat: 20.0,
            lr: 2e-4,
            lr_halvings: None,
            batch_size: 1,
            patch_size: 64,
            iterations: 2000,
            seed: 0,
            feature_seed: 7,
            dataset: Dataset::Synthetic { count: 16, size: 96 },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(TrainError::Config(m));
        if !matches!(self.stage, 1 | 2) {
            return err(format!("stage must be 1 or 2 (got {})", self.stage));
        }
        for (name, v) in [
            ("lambda_d1", self.lambda_d1),
            ("lambda_d2", self.lambda_d2),
            ("lambda_adv", self.lambda_adv),
            ("lambda_feat", self.lambda_feat),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return err(format!("{name} must be a non-negative number (got {v})"));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return err(format!("lr must be positive (got {})", self.lr));
        }
        if self.batch_size == 0 || self.patch_size == 0 || self.iterations == 0 {
            return err("batch_size, patch_size and iterations must be positive".into());
        }
        if let Some(list) = &self.lr_halvings {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return err(format!("lr_halvings must be strictly increasing (got {list:?})"));
            }
        }
        if let Dataset::Synthetic { count, size } = self.dataset {
            if count == 0 || size < self.patch_size {
                return err(format!(
                    "synthetic dataset {count}x{size} cannot supply {}-pixel patches",
                    self.patch_size
                ));
            }
        }
        Ok(())
    }

    pub fn halvings(&self) -> Vec<u64> {
        match &self.lr_halvings {
            Some(list) => list.clone(),
            None => {
                let a = self.iterations * 60 / 100;
                let b = self.iterations * 85 / 100;
                if a < b {
                    vec![a, b]
                } else {
                    vec![a]
                }
            }
        }
    }

    /// Learning rate used for the update at zero-based `iteration`.
    pub fn lr_at(&self, iteration: u64) -> f64 {
        let halved = self.halvings().iter().filter(|&&h| h <= iteration).count();
        self.lr * 0.5f64.powi(halved as i32)
    }

    /// Stage 2 has no rate term.
    pub fn lambda_rate(&self) -> f64 {
        if self.stage == 2 {
            0.0
        } else {
            1.0
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| TrainError::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "stage" => self.stage = parse(key, value)?,
            "lambda_d1" => self.lambda_d1 = parse(key, value)?,
            "lambda_d2" => self.lambda_d2 = parse(key, value)?,
            "lambda_adv" => self.lambda_adv = parse(key, value)?,
            "lambda_feat" => self.lambda_feat = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "lr_halvings" => {
                self.lr_halvings = match value.trim() {
                    "auto" => None,
                    "" | "none" => Some(Vec::new()),
                    list => Some(
                        list.split(',')
                            .map(|s| parse(key, s.trim()))
                            .collect::<Result<_>>()?,
                    ),
                }
            }
            "batch_size" => self.batch_size = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "feature_seed" => self.feature_seed = parse(key, value)?,
            "dataset" => self.dataset = Dataset::parse(value.trim())?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let halvings = match &self.lr_halvings {
            None => "auto".to_string(),
            Some(l) if l.is_empty() => "none".to_string(),
            Some(l) => l.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        };
        vec![
            ("stage", self.stage.to_string()),
            ("lambda_d1", self.lambda_d1.to_string()),
            ("lambda_d2", self.lambda_d2.to_string()),
            ("lambda_adv", self.lambda_adv.to_string()),
            ("lambda_feat", self.lambda_feat.to_string()),
            ("lr", self.lr.to_string()),
            ("lr_halvings", halvings),
            ("batch_size", self.batch_size.to_string()),
            ("patch_size", self.patch_size.to_string()),
            ("iterations", self.iterations.to_string()),
            ("seed", self.seed.to_string()),
            ("feature_seed", self.feature_seed.to_string()),
            ("dataset", self.dataset.render()),
        ]
    }

    /// SHA-256 over every field; a resumed run must match it.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"gmc-train-v1");
        for (k, v) in self.entries() {
            h.update(format!(";{k}={v}").as_bytes());
        }
        // `to_string` of floats is round-trip exact, but hash the bits too so
        // -0.0 and 0.0 stay distinct.
        for v in [self.lambda_d1, self.lambda_d2, self.lambda_adv, self.lambda_feat, self.lr] {
            h.update(v.to_bits().to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Parses `key = value` lines; `#` starts a comment. Each key is offered to
/// `apply`, which returns `false` for keys it does not recognise.
pub fn parse_key_values(text: &str, mut apply: impl FnMut(&str, &str) -> Result<bool>) -> Result<()> {
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| TrainError::Config(format!("line {}: expected key = value, got `{raw}`", n + 1)))?;
        let key = key.trim();
        if !apply(key, value.trim())? {
            return Err(TrainError::Config(format!("line {}: unknown key `{key}`", n + 1)));
        }
    }
    Ok(())
}

pub fn read_key_values(path: &Path, apply: impl FnMut(&str, &str) -> Result<bool>) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TrainError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_key_values(&text, apply)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_schedule_halves_twice() {
        let c = TrainConfig {
            iterations: 100,
            ..TrainConfig::default()
        };
        assert_eq!(c.halvings(), vec![60, 85]);
        assert_eq!(c.lr_at(59), 2e-4);
        assert_eq!(c.lr_at(60), 1e-4);
        assert_eq!(c.lr_at(99), 5e-5);
    }

    #[test]
    fn schedule_must_increase() {
        let mut c = TrainConfig::default();
        c.set("lr_halvings", "10,10").unwrap();
        assert!(c.validate().is_err());
        c.set("lr_halvings", "10, 20").unwrap();
        c.validate().unwrap();
        assert_eq!(c.lr_at(25), 5e-5);
    }

    #[test]
    fn negative_weights_rejected() {
        let mut c = TrainConfig::default();
        c.set("lambda_d1", "-0.1").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn stage_two_drops_rate() {
        let c = TrainConfig {
            stage: 2,
            ..TrainConfig::default()
        };
        assert_eq!(c.lambda_rate(), 0.0);
    }

    #[test]
    fn key_value_file_and_digest() {
        let mut c = TrainConfig::default();
        parse_key_values("# toy\nseed = 5\n\ndataset = synthetic:4x80  # small\n", |k, v| c.set(k, v)).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.dataset, Dataset::Synthetic { count: 4, size: 80 });
        assert_ne!(c.digest(), TrainConfig::default().digest());
        assert!(parse_key_values("bogus = 1", |k, v| c.set(k, v)).is_err());
        assert!(parse_key_values("seed 5", |k, v| c.set(k, v)).is_err());
    }
}
