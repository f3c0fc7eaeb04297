use sha2::{Digest, Sha256};

use crate::error::{CodecError, Result};

/// Network geometry and entropy-model settings. The digest of these fields tags
/// every weight file and bitstream built for them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub base_channels: usize,
    pub latent_channels: usize,
    /// Spatial reduction of the encoder; one of 4, 8, 16.
    pub downsample_factor: usize,
    /// Mixture components `K` per latent element.
    pub mixtures: usize,
    pub residual_blocks_per_stage: usize,
    pub attention_enabled: bool,
    /// `false` selects the context-free ablation: one learned scale per channel.
    pub context_enabled: bool,
    pub sigma_floor: f64,
    pub alphabet_margin: i32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            base_channels: 32,
            latent_channels: 8,
            downsample_factor: 16,
            mixtures: 3,
            residual_blocks_per_stage: 3,
            attention_enabled: true,
            context_enabled: true,
            sigma_floor: 0.01,
            alphabet_margin: 2,
        }
    }
}

/// Kernel size of the masked context convolution.
pub const CONTEXT_KERNEL: usize = 5;

/// Slope of every leaky ReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.2;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(CodecError::Config(m));
        if !matches!(self.downsample_factor, 4 | 8 | 16) {
            return err(format!(
                "downsample_factor must be 4, 8 or 16 (got {})",
                self.downsample_factor
            ));
        }
        if self.mixtures == 0 {
            return err("mixtures must be at least 1".into());
        }
        if self.latent_channels == 0 || self.latent_channels > u16::MAX as usize {
            return err(format!("latent_channels out of range: {}", self.latent_channels));
        }
        if self.mixtures > u8::MAX as usize {
            return err(format!("mixtures out of range: {}", self.mixtures));
        }
        if self.base_channels < 2 {
            return err("base_channels must be at least 2".into());
        }
        if self.residual_blocks_per_stage == 0 {
            return err("residual_blocks_per_stage must be at least 1".into());
        }
        if self.down_block_positions().len() + 1 < self.downsample_factor.trailing_zeros() as usize {
            return err(format!(
                "residual_blocks_per_stage = {} leaves too few blocks for downsample_factor {}",
                self.residual_blocks_per_stage, self.downsample_factor
            ));
        }
        if !(self.sigma_floor.is_finite() && self.sigma_floor > 0.0) {
            return err(format!("sigma_floor must be positive (got {})", self.sigma_floor));
        }
        if !(0..=1024).contains(&self.alphabet_margin) {
            return err(format!("alphabet_margin out of range: {}", self.alphabet_margin));
        }
        Ok(())
    }

    /// Indices (over the `2·r` encoder residual blocks) of the blocks that
    /// downsample by 2. The final encoder convolution supplies one more halving.
    pub fn down_block_positions(&self) -> Vec<usize> {
        let r = self.residual_blocks_per_stage;
        let needed = (self.downsample_factor.trailing_zeros() as usize).saturating_sub(1);
        let mut out: Vec<usize> = Vec::new();
        for cand in [0, r + r / 2, r.saturating_sub(1)] {
            if out.len() == needed {
                break;
            }
            if cand < 2 * r && !out.contains(&cand) {
                out.push(cand);
            }
        }
        out.sort_unstable();
        out
    }

    /// Number of spatial positions per latent channel for an `h×w` input.
    pub fn latent_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h / self.downsample_factor, w / self.downsample_factor)
    }

    fn canonical(&self) -> String {
        format!(
            "gmc-model-v1;base_channels={};latent_channels={};downsample_factor={};mixtures={};\
             residual_blocks_per_stage={};attention_enabled={};context_enabled={};sigma_floor={:016x};\
             alphabet_margin={};context_kernel={};leaky_slope={:016x}",
            self.base_channels,
            self.latent_channels,
            self.downsample_factor,
            self.mixtures,
            self.residual_blocks_per_stage,
            self.attention_enabled,
            self.context_enabled,
            self.sigma_floor.to_bits(),
            self.alphabet_margin,
            CONTEXT_KERNEL,
            LEAKY_SLOPE.to_bits(),
        )
    }

    /// SHA-256 over a canonical rendering of every field.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }

    /// Applies one `key = value` setting. Returns `Ok(false)` for keys this
    /// config does not own so callers can route them elsewhere.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| CodecError::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "base_channels" => self.base_channels = parse(key, value)?,
            "latent_channels" => self.latent_channels = parse(key, value)?,
            "downsample_factor" => self.downsample_factor = parse(key, value)?,
            "mixtures" => self.mixtures = parse(key, value)?,
            "residual_blocks_per_stage" => self.residual_blocks_per_stage = parse(key, value)?,
            "attention_enabled" => self.attention_enabled = parse(key, value)?,
            "context_enabled" => self.context_enabled = parse(key, value)?,
            "sigma_floor" => self.sigma_floor = parse(key, value)?,
            "alphabet_margin" => self.alphabet_margin = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("base_channels", self.base_channels.to_string()),
            ("latent_channels", self.latent_channels.to_string()),
            ("downsample_factor", self.downsample_factor.to_string()),
            ("mixtures", self.mixtures.to_string()),
            ("residual_blocks_per_stage", self.residual_blocks_per_stage.to_string()),
            ("attention_enabled", self.attention_enabled.to_string()),
            ("context_enabled", self.context_enabled.to_string()),
            ("sigma_floor", self.sigma_floor.to_string()),
            ("alphabet_margin", self.alphabet_margin.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.down_block_positions(), vec![0, 2, 4]);
    }

    #[test]
    fn digest_tracks_every_field() {
        let base = ModelConfig::default();
        let mut seen = vec![base.digest()];
        for (key, value) in [
            ("base_channels", "16"),
            ("latent_channels", "4"),
            ("downsample_factor", "8"),
            ("mixtures", "1"),
            ("residual_blocks_per_stage", "2"),
            ("attention_enabled", "false"),
            ("context_enabled", "false"),
            ("sigma_floor", "0.02"),
            ("alphabet_margin", "3"),
        ] {
            let mut c = base.clone();
            assert!(c.set(key, value).unwrap());
            let d = c.digest();
            assert!(!seen.contains(&d), "{key} does not affect the digest");
            seen.push(d);
        }
        assert_eq!(base.digest(), ModelConfig::default().digest());
    }

    #[test]
    fn rejects_bad_settings() {
        for (key, value) in [
            ("downsample_factor", "2"),
            ("mixtures", "0"),
            ("latent_channels", "0"),
            ("sigma_floor", "0"),
        ] {
            let mut c = ModelConfig::default();
            c.set(key, value).unwrap();
            assert!(c.validate().is_err(), "{key}={value}");
        }
        let mut c = ModelConfig::default();
        c.residual_blocks_per_stage = 1;
        assert!(c.validate().is_err());
        c.downsample_factor = 8;
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_pass_through() {
        let mut c = ModelConfig::default();
        assert!(!c.set("lambda_d1", "0.1").unwrap());
        assert!(c.set("mixtures", "x").is_err());
    }
}
