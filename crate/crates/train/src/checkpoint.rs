//! Training checkpoints: weight blobs per network plus Adam state and the
//! iteration counter.
//!
//! Layout (little-endian): magic `GMCK`, u16 version, u8 stage, u64 iteration,
//! 32-byte model digest, 32-byte train-config digest, u32 parameter-store
//! count, then per store a length-prefixed label and a length-prefixed weight
//! blob; u32 optimizer count, then per optimizer its label, u64 step, four f64
//! hyperparameters and the two moment stores as weight blobs.

use std::path::Path;

use gmc_core::error::hex;
use gmc_core::io::write_atomic;
use gmc_core::weights::{weights_from_bytes, weights_to_bytes};
use gmc_tensor::{AdamConfig, AdamState, ParamStore};

use crate::error::{Result, TrainError};

pub const MAGIC: &[u8; 4] = b"GMCK";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: u8,
    /// Number of completed iterations.
    pub iteration: u64,
    pub model_digest: [u8; 32],
    pub train_digest: [u8; 32],
    pub params: Vec<(String, ParamStore)>,
    pub optimizers: Vec<(String, AdamState)>,
}

impl Checkpoint {
    pub fn params(&self, label: &str) -> Result<&ParamStore> {
        self.params
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, p)| p)
            .ok_or_else(|| TrainError::Checkpoint(format!("no `{label}` parameters in stage-{} checkpoint", self.stage)))
    }

    pub fn optimizer(&self, label: &str) -> Result<&AdamState> {
        self.optimizers
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, a)| a)
            .ok_or_else(|| TrainError::Checkpoint(format!("no `{label}` optimizer in stage-{} checkpoint", self.stage)))
    }

    pub fn check_model(&self, digest: &[u8; 32]) -> Result<()> {
        if &self.model_digest != digest {
            return Err(TrainError::CheckpointMismatch {
                what: "model config",
                expected: hex(digest),
                found: hex(&self.model_digest),
            });
        }
        Ok(())
    }

    pub fn check_train(&self, digest: &[u8; 32]) -> Result<()> {
        if &self.train_digest != digest {
            return Err(TrainError::CheckpointMismatch {
                what: "training config",
                expected: hex(digest),
                found: hex(&self.train_digest),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.stage);
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.model_digest);
        out.extend_from_slice(&self.train_digest);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (label, store) in &self.params {
            put_label(&mut out, label);
            put_blob(&mut out, &weights_to_bytes(store));
        }
        out.extend_from_slice(&(self.optimizers.len() as u32).to_le_bytes());
        for (label, adam) in &self.optimizers {
            put_label(&mut out, label);
            out.extend_from_slice(&adam.t.to_le_bytes());
            let AdamConfig { lr, beta1, beta2, eps } = adam.config;
            for v in [lr, beta1, beta2, eps] {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            put_blob(&mut out, &weights_to_bytes(&adam.m));
            put_blob(&mut out, &weights_to_bytes(&adam.v));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(TrainError::Checkpoint(format!("bad magic {magic:02x?}")));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != VERSION {
            return Err(TrainError::Checkpoint(format!("unsupported version {version}")));
        }
        let stage = r.take(1, "stage")?[0];
        let iteration = u64::from_le_bytes(r.array("iteration")?);
        let model_digest = r.array("model digest")?;
        let train_digest = r.array("train digest")?;
        let n = u32::from_le_bytes(r.array("store count")?);
        let mut params = Vec::new();
        for _ in 0..n {
            let label = r.label()?;
            let store = weights_from_bytes(r.blob(&label)?, None)?;
            params.push((label, store));
        }
        let n = u32::from_le_bytes(r.array("optimizer count")?);
        let mut optimizers = Vec::new();
        for _ in 0..n {
            let label = r.label()?;
            let t = u64::from_le_bytes(r.array("optimizer step")?);
            let mut hp = [0.0; 4];
            for v in &mut hp {
                *v = f64::from_bits(u64::from_le_bytes(r.array("optimizer settings")?));
            }
            let m = weights_from_bytes(r.blob(&label)?, None)?;
            let v = weights_from_bytes(r.blob(&label)?, None)?;
            m.check_compatible(&v)?;
            let config = AdamConfig {
                lr: hp[0],
                beta1: hp[1],
                beta2: hp[2],
                eps: hp[3],
            };
            optimizers.push((label, AdamState { config, t, m, v }));
        }
        if r.pos != bytes.len() {
            return Err(TrainError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            stage,
            iteration,
            model_digest,
            train_digest,
            params,
            optimizers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(write_atomic(path, &self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_label(out: &mut Vec<u8>, label: &str) {
    out.push(label.len() as u8);
    out.extend_from_slice(label.as_bytes());
}

fn put_blob(out: &mut Vec<u8>, blob: &[u8]) {
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(blob);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TrainError::Checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn label(&mut self) -> Result<String> {
        let n = self.take(1, "label length")?[0] as usize;
        let raw = self.take(n, "label")?;
        String::from_utf8(raw.to_vec()).map_err(|_| TrainError::Checkpoint("label is not UTF-8".into()))
    }

    fn blob(&mut self, label: &str) -> Result<&'a [u8]> {
        let n = u64::from_le_bytes(self.array("blob length")?);
        let n = usize::try_from(n).map_err(|_| TrainError::Checkpoint(format!("`{label}` blob too large")))?;
        self.take(n, label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gmc_tensor::Tensor;

    fn sample() -> Checkpoint {
        let mut p = ParamStore::new([3; 32]);
        p.insert("enc.a.w", Tensor::from_fn([2, 1, 3, 3], |_, _, h, w| (h * 3 + w) as f64 * 0.25))
            .unwrap();
        let mut adam = AdamState::new(&p, AdamConfig::default());
        adam.t = 7;
        adam.m.get_mut("enc.a.w").unwrap().data_mut()[4] = 0.5;
        Checkpoint {
            stage: 1,
            iteration: 42,
            model_digest: [3; 32],
            train_digest: [9; 32],
            params: vec![("enc".into(), p)],
            optimizers: vec![("enc".into(), adam)],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }

    #[test]
    fn digest_checks_name_the_config() {
        let c = sample();
        let err = c.check_train(&[0; 32]).unwrap_err();
        assert!(err.to_string().contains("training config"));
        c.check_model(&[3; 32]).unwrap();
    }
}
