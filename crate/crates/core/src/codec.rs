//! Image-level compression: pad, encode, round, entropy-code, pack; and the reverse.

use gmc_tensor::{ParamStore, Tensor};

use crate::entropy::{
    decode_latents, encode_latents, pack_container, rate_estimate, unpack_container, Bitstream, Header, RateReport,
};
use crate::error::{CodecError, Result};
use crate::image::{crop, pad_replicate};
use crate::model::{quantize_inference, Model, PositionGmm, QuantizedLatents};

#[derive(Clone, Debug)]
pub struct Compressed {
    /// Packed container bytes.
    pub bytes: Vec<u8>,
    pub latents: QuantizedLatents,
    pub report: RateReport,
    /// Cross-entropy under the quantized frequency tables, in bits.
    pub model_bits: f64,
    /// Encoder-side context outputs per position (only when tracing was requested).
    pub trace: Vec<PositionGmm>,
}

/// Compresses a `(1, 3, H, W)` image in `[0, 1]` of any size ≥ 1×1.
pub fn compress_image(
    model: &Model,
    encoder: &ParamStore,
    context: &ParamStore,
    image: &Tensor,
    keep_trace: bool,
) -> Result<Compressed> {
    let [n, c, h, w] = image.shape();
    if n != 1 || c != 3 || h == 0 || w == 0 {
        return Err(CodecError::Input(format!("expected a 1x3xHxW image, got {:?}", image.shape())));
    }
    let cfg = model.config();
    let f = cfg.downsample_factor;
    let padded = pad_replicate(image, f);
    let [_, _, ph, pw] = padded.shape();
    let code = model.encode(&padded, encoder)?;
    let z = quantize_inference(&code, cfg.alphabet_margin)?;
    let evaluator = model.context_evaluator(context)?;
    let encoded = encode_latents(&z, &evaluator, keep_trace)?;
    let field = model.context_forward(&z.to_tensor(), context)?;
    let report = rate_estimate(&z.to_tensor(), &field, h * w)?.with_payload(encoded.payload.len());
    let dim = |v: usize| u32::try_from(v).map_err(|_| CodecError::Input(format!("dimension {v} too large")));
    let header = Header {
        digest: model.digest(),
        original: (dim(h)?, dim(w)?),
        padded: (dim(ph)?, dim(pw)?),
        latent: (dim(z.height())?, dim(z.width())?),
        latent_channels: z.channels() as u16,
        mixtures: cfg.mixtures as u8,
        bounds: z.bounds().iter().map(|&(lo, hi)| (lo as i16, hi as i16)).collect(),
    };
    let bytes = pack_container(&Bitstream {
        header,
        payload: encoded.payload,
    });
    Ok(Compressed {
        bytes,
        latents: z,
        report,
        model_bits: encoded.model_bits,
        trace: encoded.trace,
    })
}

/// Unpacks and validates a container against `model`.
pub fn read_bitstream(model: &Model, bytes: &[u8]) -> Result<Bitstream> {
    let stream = unpack_container(bytes)?;
    stream.header.validate(model.config())?;
    Ok(stream)
}

/// Entropy-decodes the latents of a validated bitstream. With `trace`, the
/// decoder's context outputs are checked bit-for-bit against the encoder's.
pub fn decode_bitstream_latents(
    model: &Model,
    context: &ParamStore,
    stream: &Bitstream,
    trace: Option<&[PositionGmm]>,
) -> Result<QuantizedLatents> {
    let h = &stream.header;
    let evaluator = model.context_evaluator(context)?;
    let bounds = h.bounds_i32();
    let z = decode_latents(
        &stream.payload,
        &evaluator,
        (h.latent.0 as usize, h.latent.1 as usize),
        &bounds,
        trace,
    )?;
    // bounds are the observed range widened by the margin; anything else means
    // the header and payload disagree
    let margin = model.config().alphabet_margin;
    let plane = z.height() * z.width();
    for (c, &(lo, hi)) in bounds.iter().enumerate() {
        let ch = &z.symbols()[c * plane..(c + 1) * plane];
        let (min, max) = (ch.iter().min().copied(), ch.iter().max().copied());
        if min != Some(lo + margin) || max != Some(hi - margin) {
            return Err(CodecError::AlphabetMismatch(format!(
                "channel {c}: decoded range {min:?}..{max:?} vs header bounds [{lo}, {hi}] with margin {margin}"
            )));
        }
    }
    Ok(z)
}

/// Decodes `z` with `decoder` and crops to the original dims in `header`.
pub fn reconstruct(model: &Model, decoder: &ParamStore, z: &QuantizedLatents, header: &Header) -> Result<Tensor> {
    let out = model.decode(z, decoder)?;
    crop(&out, header.original.0 as usize, header.original.1 as usize)
}

pub fn decompress_image(model: &Model, context: &ParamStore, decoder: &ParamStore, bytes: &[u8]) -> Result<Tensor> {
    let stream = read_bitstream(model, bytes)?;
    let z = decode_bitstream_latents(model, context, &stream, None)?;
    reconstruct(model, decoder, &z, &stream.header)
}
