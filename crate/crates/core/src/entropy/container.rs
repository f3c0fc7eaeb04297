//! `GMC1` bitstream: fixed little-endian header followed by the range-coded payload.
//!
//! ```text
//! magic "GMC1" | version u16 | digest [32] | orig h,w u32 | padded h,w u32 |
//! latent h,w u32 | latent_channels u16 | K u8 | (lo, hi) i16 per channel |
//! payload_len u64 | payload
//! ```

use crate::config::ModelConfig;
use crate::error::{hex, CodecError, Result};

pub const MAGIC: [u8; 4] = *b"GMC1";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub digest: [u8; 32],
    /// Image dims before padding, `(height, width)`.
    pub original: (u32, u32),
    pub padded: (u32, u32),
    pub latent: (u32, u32),
    pub latent_channels: u16,
    pub mixtures: u8,
    pub bounds: Vec<(i16, i16)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    pub payload: Vec<u8>,
}

impl Header {
    pub fn encoded_len(&self) -> usize {
        4 + 2 + 32 + 6 * 4 + 2 + 1 + 4 * self.bounds.len() + 8
    }

    pub fn original_pixels(&self) -> usize {
        self.original.0 as usize * self.original.1 as usize
    }

    pub fn bounds_i32(&self) -> Vec<(i32, i32)> {
        self.bounds.iter().map(|&(a, b)| (a as i32, b as i32)).collect()
    }

    /// Geometry checks that need no model: dims nonzero, original within
    /// padded, padded an exact multiple of the latent grid by 4, 8 or 16.
    fn check_structure(&self) -> Result<()> {
        let bad = |m: String| Err(CodecError::InvalidHeader(m));
        let (oh, ow) = self.original;
        let (ph, pw) = self.padded;
        let (lh, lw) = self.latent;
        if [oh, ow, lh, lw].contains(&0) {
            return bad("zero-sized dimension".into());
        }
        if ph % lh != 0 || pw % lw != 0 || ph / lh != pw / lw || !matches!(ph / lh, 4 | 8 | 16) {
            return bad(format!("padded {ph}x{pw} is not a 4/8/16 multiple of latent {lh}x{lw}"));
        }
        let f = ph / lh;
        if oh > ph || ow > pw || ph - oh >= f || pw - ow >= f {
            return bad(format!("original {oh}x{ow} inconsistent with padded {ph}x{pw}"));
        }
        if self.latent_channels == 0 || self.mixtures == 0 {
            return bad("zero channels or mixtures".into());
        }
        if self.bounds.len() != self.latent_channels as usize {
            return bad("bounds count differs from channel count".into());
        }
        if let Some((c, (lo, hi))) = self.bounds.iter().enumerate().find(|(_, (lo, hi))| lo > hi) {
            return bad(format!("channel {c} bounds [{lo}, {hi}] are empty"));
        }
        Ok(())
    }

    /// Checks the header against the model that is about to decode it.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let digest = config.digest();
        if self.digest != digest {
            return Err(CodecError::DigestMismatch {
                expected: hex(&digest),
                found: hex(&self.digest),
            });
        }
        self.check_structure()?;
        let f = config.downsample_factor as u32;
        if self.padded.0 / self.latent.0 != f
            || self.latent_channels as usize != config.latent_channels
            || self.mixtures as usize != config.mixtures
        {
            return Err(CodecError::InvalidHeader(format!(
                "geometry (f={}, C={}, K={}) does not match the model config",
                self.padded.0 / self.latent.0,
                self.latent_channels,
                self.mixtures
            )));
        }
        Ok(())
    }
}

pub fn pack_container(stream: &Bitstream) -> Vec<u8> {
    let h = &stream.header;
    let mut out = Vec::with_capacity(h.encoded_len() + stream.payload.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&h.digest);
    for v in [h.original.0, h.original.1, h.padded.0, h.padded.1, h.latent.0, h.latent.1] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&h.latent_channels.to_le_bytes());
    out.push(h.mixtures);
    for &(lo, hi) in &h.bounds {
        out.extend_from_slice(&lo.to_le_bytes());
        out.extend_from_slice(&hi.to_le_bytes());
    }
    out.extend_from_slice(&(stream.payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&stream.payload);
    out
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N]> {
        let bytes = self
            .data
            .get(self.pos..self.pos + N)
            .ok_or(CodecError::Truncated { what })?;
        self.pos += N;
        Ok(bytes.try_into().expect("length checked"))
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(what)?))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(what)?))
    }
}

pub fn unpack_container(bytes: &[u8]) -> Result<Bitstream> {
    let mut r = Reader { data: bytes, pos: 0 };
    let magic: [u8; 4] = r.take("bitstream magic")?;
    if magic != MAGIC {
        return Err(CodecError::BadMagic {
            expected: String::from_utf8_lossy(&MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = r.u16("bitstream header")?;
    if version != VERSION {
        return Err(CodecError::UnsupportedVersion {
            expected: VERSION,
            found: version,
        });
    }
    let digest: [u8; 32] = r.take("bitstream header")?;
    let mut dims = [0u32; 6];
    for d in &mut dims {
        *d = r.u32("bitstream header")?;
    }
    let latent_channels = r.u16("bitstream header")?;
    let [mixtures] = r.take::<1>("bitstream header")?;
    let mut bounds = Vec::with_capacity(latent_channels as usize);
    for _ in 0..latent_channels {
        let lo = i16::from_le_bytes(r.take("alphabet bounds")?);
        let hi = i16::from_le_bytes(r.take("alphabet bounds")?);
        bounds.push((lo, hi));
    }
    let len = u64::from_le_bytes(r.take("payload length")?);
    let header = Header {
        digest,
        original: (dims[0], dims[1]),
        padded: (dims[2], dims[3]),
        latent: (dims[4], dims[5]),
        latent_channels,
        mixtures,
        bounds,
    };
    header.check_structure()?;
    let rest = bytes.len() - r.pos;
    if (rest as u64) < len {
        return Err(CodecError::Truncated { what: "payload" });
    }
    if rest as u64 > len {
        return Err(CodecError::TrailingBytes(rest - len as usize, "payload"));
    }
    Ok(Bitstream {
        header,
        payload: bytes[r.pos..].to_vec(),
    })
}
