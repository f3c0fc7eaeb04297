//! Serial autoregressive coding of a latent grid. Elements are visited in
//! raster order over spatial positions and channel order within a position;
//! one context evaluation per position serves all its channels.

use super::distribution::SymbolDistribution;
use super::range_coder::{RangeDecoder, RangeEncoder};
use crate::error::{CodecError, Result};
use crate::model::{ContextEvaluator, PositionGmm, QuantizedLatents};

/// Payload plus the diagnostics gathered while producing it.
#[derive(Clone, Debug)]
pub struct EncodedLatents {
    pub payload: Vec<u8>,
    /// Cross-entropy of the symbols under the quantized tables, in bits.
    pub model_bits: f64,
    /// Context output at every spatial position, in scan order.
    pub trace: Vec<PositionGmm>,
}

fn distribution(gmm: &PositionGmm, c: usize, channels: usize, bounds: (i32, i32), index: usize) -> Result<SymbolDistribution> {
    let (w, mu, sigma) = gmm.channel(c, channels);
    SymbolDistribution::from_mixture(&w, &mu, &sigma, bounds).map_err(|source| CodecError::Coding { index, source })
}

fn check_geometry(z: &QuantizedLatents, ctx: &ContextEvaluator) -> Result<()> {
    if z.channels() != ctx.channels() {
        return Err(CodecError::Input(format!(
            "latent grid has {} channels, context model expects {}",
            z.channels(),
            ctx.channels()
        )));
    }
    Ok(())
}

pub fn compress_latents(z: &QuantizedLatents, ctx: &ContextEvaluator) -> Result<Vec<u8>> {
    Ok(encode_latents(z, ctx, false)?.payload)
}

/// Encodes `z`; with `keep_trace` the per-position context outputs are returned
/// so a decoder can check it reproduced them.
pub fn encode_latents(z: &QuantizedLatents, ctx: &ContextEvaluator, keep_trace: bool) -> Result<EncodedLatents> {
    check_geometry(z, ctx)?;
    let (c, h, w) = (z.channels(), z.height(), z.width());
    let mut enc = RangeEncoder::new();
    let mut model_bits = 0.0;
    let mut trace = Vec::new();
    for pos in 0..h * w {
        let (y, x) = (pos / w, pos % w);
        let gmm = ctx.eval(z.symbols(), h, w, y, x);
        for ch in 0..c {
            let index = pos * c + ch;
            let dist = distribution(&gmm, ch, c, z.bounds()[ch], index)?;
            let s = z.get(ch, y, x);
            let fail = |source| CodecError::Coding { index, source };
            model_bits += dist.cost_bits(s).map_err(fail)?;
            enc.encode(&dist, s).map_err(fail)?;
        }
        if keep_trace {
            trace.push(gmm);
        }
    }
    Ok(EncodedLatents {
        payload: enc.finish(),
        model_bits,
        trace,
    })
}

/// Mirror of [`compress_latents`]: decoded symbols are fed back as context.
pub fn decompress_latents(
    payload: &[u8],
    ctx: &ContextEvaluator,
    (height, width): (usize, usize),
    bounds: &[(i32, i32)],
) -> Result<QuantizedLatents> {
    decode_latents(payload, ctx, (height, width), bounds, None)
}

/// Like [`decompress_latents`], additionally asserting that the context output
/// at every position is bit-identical to the encoder's `trace`.
pub fn decode_latents(
    payload: &[u8],
    ctx: &ContextEvaluator,
    (h, w): (usize, usize),
    bounds: &[(i32, i32)],
    trace: Option<&[PositionGmm]>,
) -> Result<QuantizedLatents> {
    let c = ctx.channels();
    if bounds.len() != c {
        return Err(CodecError::Input(format!("{} bounds for {c} channels", bounds.len())));
    }
    if let Some(t) = trace {
        if t.len() != h * w {
            return Err(CodecError::Input(format!("trace covers {} of {} positions", t.len(), h * w)));
        }
    }
    let plane = h * w;
    let mut grid = vec![0i32; c * plane];
    let mut dec = RangeDecoder::new(payload).map_err(|source| CodecError::Coding { index: 0, source })?;
    for pos in 0..plane {
        let (y, x) = (pos / w, pos % w);
        let gmm = ctx.eval(&grid, h, w, y, x);
        if let Some(t) = trace {
            if !same_bits(&t[pos], &gmm) {
                return Err(CodecError::ContextDivergence { position: pos });
            }
        }
        for ch in 0..c {
            let index = pos * c + ch;
            let dist = distribution(&gmm, ch, c, bounds[ch], index)?;
            grid[ch * plane + pos] = dec.decode(&dist).map_err(|source| CodecError::Coding { index, source })?;
        }
    }
    dec.finish()
        .map_err(|source| CodecError::Coding { index: c * plane, source })?;
    QuantizedLatents::with_bounds(c, h, w, grid, bounds.to_vec())
}

fn same_bits(a: &PositionGmm, b: &PositionGmm) -> bool {
    let eq = |x: &[f64], y: &[f64]| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
    eq(&a.weights, &b.weights) && eq(&a.means, &b.means) && eq(&a.stds, &b.stds)
}
