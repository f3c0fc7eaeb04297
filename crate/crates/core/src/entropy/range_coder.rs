//! Byte-oriented range coder over 32-bit `low`/`range` with 16-bit frequency
//! tables. Carries are propagated straight into the output buffer, so the
//! stream is the plain big-endian expansion of the final interval.

use super::distribution::{SymbolDistribution, TOTAL, TOTAL_BITS};
use crate::error::CoderError;

const TOP: u32 = 1 << 24;
const WINDOW: u64 = 1 << 32;

/// Bytes written by [`RangeEncoder::finish`] regardless of content.
pub const FLUSH_BYTES: usize = 4;

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            low: 0,
            range: u32::MAX,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, dist: &SymbolDistribution, symbol: i32) -> Result<(), CoderError> {
        let (start, freq) = dist.interval(symbol)?;
        let r = self.range >> TOTAL_BITS;
        self.low += r as u64 * start as u64;
        self.range = r * freq;
        if self.low >= WINDOW {
            self.low -= WINDOW;
            self.carry();
        }
        while self.range < TOP {
            self.out.push((self.low >> 24) as u8);
            self.low = (self.low << 8) & (WINDOW - 1);
            self.range <<= 8;
        }
        Ok(())
    }

    fn carry(&mut self) {
        for byte in self.out.iter_mut().rev() {
            let (v, overflow) = byte.overflowing_add(1);
            *byte = v;
            if !overflow {
                return;
            }
        }
        unreachable!("carry out of the first byte: interval exceeded [0, 1)");
    }

    /// Bytes emitted so far, excluding the final flush.
    pub fn bytes_written(&self) -> usize {
        self.out.len()
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.out.extend_from_slice(&(self.low as u32).to_be_bytes());
        self.out
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    /// Offset of the code value above the encoder's `low`.
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self, CoderError> {
        let head: [u8; 4] = data
            .get(..FLUSH_BYTES)
            .ok_or(CoderError::Truncated)?
            .try_into()
            .expect("four bytes");
        Ok(RangeDecoder {
            data,
            pos: FLUSH_BYTES,
            code: u32::from_be_bytes(head),
            range: u32::MAX,
        })
    }

    pub fn decode(&mut self, dist: &SymbolDistribution) -> Result<i32, CoderError> {
        let r = self.range >> TOTAL_BITS;
        let target = self.code / r;
        if target >= TOTAL {
            return Err(CoderError::Corrupt);
        }
        let (symbol, start, freq) = dist.lookup(target);
        self.code -= r * start;
        self.range = r * freq;
        while self.range < TOP {
            let byte = *self.data.get(self.pos).ok_or(CoderError::Truncated)?;
            self.pos += 1;
            self.code = (self.code << 8) | byte as u32;
            self.range <<= 8;
        }
        Ok(symbol)
    }

    /// Succeeds only if every byte of the input was consumed.
    pub fn finish(self) -> Result<(), CoderError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(CoderError::TrailingBytes(n)),
        }
    }
}

/// Encodes `symbols[i]` under `dists[i]`.
pub fn encode_all(symbols: &[i32], dists: &[SymbolDistribution]) -> Result<Vec<u8>, (usize, CoderError)> {
    assert_eq!(symbols.len(), dists.len(), "one distribution per symbol");
    let mut enc = RangeEncoder::new();
    for (i, (&s, d)) in symbols.iter().zip(dists).enumerate() {
        enc.encode(d, s).map_err(|e| (i, e))?;
    }
    Ok(enc.finish())
}

/// Decodes exactly `count` symbols, asking `provider` for the `i`-th distribution.
pub fn decode_all(
    data: &[u8],
    count: usize,
    mut provider: impl FnMut(usize, &[i32]) -> SymbolDistribution,
) -> Result<Vec<i32>, (usize, CoderError)> {
    let mut dec = RangeDecoder::new(data).map_err(|e| (0, e))?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let d = provider(i, &out);
        out.push(dec.decode(&d).map_err(|e| (i, e))?);
    }
    dec.finish().map_err(|e| (count, e))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(m: usize) -> SymbolDistribution {
        SymbolDistribution::from_probabilities(0, &vec![1.0; m]).unwrap()
    }

    #[test]
    fn empty_sequence_is_flush_only() {
        let bytes = encode_all(&[], &[]).unwrap();
        assert_eq!(bytes.len(), FLUSH_BYTES);
        assert_eq!(decode_all(&bytes, 0, |_, _| uniform(2)).unwrap(), Vec::<i32>::new());
    }

    #[test]
    fn round_trip_small() {
        let d = SymbolDistribution::from_probabilities(-3, &[0.05, 0.1, 0.5, 0.2, 0.1, 0.05]).unwrap();
        let symbols = [-3, 2, 0, -1, -1, 1, 0, 2, -3, -3, 0];
        let dists = vec![d.clone(); symbols.len()];
        let bytes = encode_all(&symbols, &dists).unwrap();
        assert_eq!(decode_all(&bytes, symbols.len(), |_, _| d.clone()).unwrap(), symbols);
    }

    #[test]
    fn carry_heavy_stream() {
        // most probable symbol at the top of the table pushes `low` upward
        let d = SymbolDistribution::from_frequencies(0, &[1, TOTAL - 1]).unwrap();
        let mut symbols = vec![1; 5000];
        symbols[17] = 0;
        symbols[4000] = 0;
        let bytes = encode_all(&symbols, &vec![d.clone(); symbols.len()]).unwrap();
        assert_eq!(decode_all(&bytes, symbols.len(), |_, _| d.clone()).unwrap(), symbols);
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let d = uniform(7);
        let symbols: Vec<i32> = (0..200).map(|i| (i * 5 % 7) as i32).collect();
        let bytes = encode_all(&symbols, &vec![d.clone(); 200]).unwrap();
        let cut = decode_all(&bytes[..bytes.len() - 1], 200, |_, _| d.clone());
        assert!(matches!(cut, Err((_, CoderError::Truncated))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            decode_all(&extra, 200, |_, _| d.clone()),
            Err((200, CoderError::TrailingBytes(1)))
        ));
        assert!(matches!(decode_all(&bytes[..3], 0, |_, _| d.clone()), Err((0, CoderError::Truncated))));
    }

    #[test]
    fn out_of_range_symbol() {
        let mut enc = RangeEncoder::new();
        assert!(matches!(
            enc.encode(&uniform(3), 3),
            Err(CoderError::SymbolOutOfRange { symbol: 3, .. })
        ));
    }
}
