//! `GMCW` weight files.
//!
//! ```text
//! magic "GMCW" | version u16 | digest [32] | count u32 |
//! per tensor: name_len u16 | name | rank u8 | dims u32×rank | f32 LE data
//! ```

use std::path::Path;

use gmc_tensor::{ParamStore, Tensor};

use crate::error::{hex, CodecError, Result};
use crate::io::write_atomic;
use crate::model::{Model, Network};

pub const MAGIC: [u8; 4] = *b"GMCW";
pub const VERSION: u16 = 1;

pub fn weights_to_bytes(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(store.digest());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(4);
        for d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated { what })?;
        let s = self.data.get(self.pos..end).ok_or(CodecError::Truncated { what })?;
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        Ok(self.bytes(N, what)?.try_into().expect("length checked"))
    }
}

/// Parses a weight file. When `expected` is given, every tensor name and shape
/// is checked against it as soon as it is read, so a corrupted shape is
/// reported against the tensor it belongs to.
pub fn weights_from_bytes(bytes: &[u8], expected: Option<&[(String, [usize; 4])]>) -> Result<ParamStore> {
    let mut c = Cursor { data: bytes, pos: 0 };
    let magic: [u8; 4] = c.array("weight file magic")?;
    if magic != MAGIC {
        return Err(CodecError::BadMagic {
            expected: String::from_utf8_lossy(&MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = u16::from_le_bytes(c.array("weight file header")?);
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion {
            expected: VERSION,
            found: version,
        });
    }
    let digest: [u8; 32] = c.array("weight file header")?;
    let count = u32::from_le_bytes(c.array("weight file header")?) as usize;
    if let Some(exp) = expected {
        if exp.len() != count {
            return Err(CodecError::InvalidHeader(format!(
                "weight file holds {count} tensors, expected {}",
                exp.len()
            )));
        }
    }
    let mut store = ParamStore::new(digest);
    for i in 0..count {
        let name_len = u16::from_le_bytes(c.array("tensor name")?) as usize;
        let name = std::str::from_utf8(c.bytes(name_len, "tensor name")?)
            .map_err(|_| CodecError::InvalidHeader(format!("tensor {i} name is not UTF-8")))?
            .to_string();
        if let Some(exp) = expected {
            if exp[i].0 != name {
                return Err(CodecError::UnexpectedTensor {
                    expected: exp[i].0.clone(),
                    found: name,
                });
            }
        }
        let [rank] = c.array::<1>("tensor rank")?;
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(c.array("tensor dims")?) as usize);
        }
        let expected_shape = expected.map(|e| e[i].1);
        let shape: [usize; 4] = match (<[usize; 4]>::try_from(dims.as_slice()), expected_shape) {
            (Ok(s), Some(e)) if s == e => s,
            (Ok(s), None) => s,
            (_, e) => {
                return Err(CodecError::CorruptShape {
                    name,
                    expected: e.map(|e| e.to_vec()).unwrap_or_default(),
                    found: dims,
                })
            }
        };
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| CodecError::CorruptShape {
                name: name.clone(),
                expected: vec![],
                found: dims.clone(),
            })?;
        let raw = c.bytes(numel.checked_mul(4).ok_or(CodecError::Truncated { what: "tensor data" })?, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    if c.pos != bytes.len() {
        return Err(CodecError::TrailingBytes(bytes.len() - c.pos, "last tensor"));
    }
    Ok(store)
}

pub fn save_weights(store: &ParamStore, path: &Path) -> Result<()> {
    write_atomic(path, &weights_to_bytes(store))?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ParamStore> {
    weights_from_bytes(&std::fs::read(path)?, None)
}

/// Concatenated layout of `networks` in the order given.
pub fn expected_layout(model: &Model, networks: &[Network]) -> Result<Vec<(String, [usize; 4])>> {
    let mut out = Vec::new();
    for &n in networks {
        out.extend(model.layout(n)?);
    }
    Ok(out)
}

/// Parses `bytes` as a store holding exactly `networks` for `model`. Nothing is
/// returned unless the digest, every name and every shape match.
pub fn weights_for_model(bytes: &[u8], model: &Model, networks: &[Network]) -> Result<ParamStore> {
    // digest first, so a config mismatch is reported as such rather than as a shape error
    if bytes.len() >= 38 && bytes[..4] == MAGIC && bytes[4..6] == VERSION.to_le_bytes() {
        let digest = &bytes[6..38];
        if digest != model.digest() {
            return Err(CodecError::DigestMismatch {
                expected: hex(&model.digest()),
                found: hex(digest),
            });
        }
    }
    let layout = expected_layout(model, networks)?;
    let store = weights_from_bytes(bytes, Some(&layout))?;
    model.check_digest(&store)?;
    Ok(store)
}

pub fn load_for_model(path: &Path, model: &Model, networks: &[Network]) -> Result<ParamStore> {
    weights_for_model(&std::fs::read(path)?, model, networks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;

    fn model() -> Model {
        Model::new(ModelConfig {
            base_channels: 4,
            latent_channels: 2,
            downsample_factor: 4,
            residual_blocks_per_stage: 1,
            ..ModelConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let m = model();
        let store = m.init(Network::Context, 2).unwrap();
        let bytes = weights_to_bytes(&store);
        let back = weights_from_bytes(&bytes, None).unwrap();
        assert!(back.bit_identical(&store));
        assert_eq!(weights_to_bytes(&back), bytes);
        let checked = weights_for_model(&bytes, &m, &[Network::Context]).unwrap();
        assert!(checked.bit_identical(&store));
    }

    #[test]
    fn wrong_network_is_rejected() {
        let m = model();
        let bytes = weights_to_bytes(&m.init(Network::Context, 2).unwrap());
        assert!(weights_for_model(&bytes, &m, &[Network::Decoder]).is_err());
    }

    #[test]
    fn trailing_and_truncated() {
        let m = model();
        let mut bytes = weights_to_bytes(&m.init(Network::Context, 2).unwrap());
        assert!(matches!(
            weights_from_bytes(&bytes[..bytes.len() - 2], None),
            Err(CodecError::Truncated { .. })
        ));
        bytes.push(1);
        assert!(matches!(weights_from_bytes(&bytes, None), Err(CodecError::TrailingBytes(1, _))));
    }
}
