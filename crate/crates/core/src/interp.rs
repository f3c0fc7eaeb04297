//! Decoder interpolation `θ' = (1−α)·θ¹ + α·θ²`, pixel interpolation, PSNR and α sweeps.

use std::fmt::Write as _;

use gmc_tensor::{ParamStore, Tensor};
use rayon::prelude::*;

use crate::codec::{decode_bitstream_latents, read_bitstream, reconstruct};
use crate::entropy::rate_estimate;
use crate::error::{CodecError, Result};
use crate::model::Model;

/// Default interpolation weight toward the adversarially tuned decoder.
pub const DEFAULT_ALPHA: f64 = 0.8;
/// Default sweep grid.
pub const DEFAULT_ALPHAS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMode {
    Network,
    Image,
}

impl std::str::FromStr for InterpMode {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "network" => Ok(InterpMode::Network),
            "image" => Ok(InterpMode::Image),
            _ => Err(CodecError::Config(format!("unknown interpolation mode `{s}` (network|image)"))),
        }
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(CodecError::Config(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

/// `a + α(b − a)` clamped into `[min(a, b), max(a, b)]`. The endpoints return
/// their operand unchanged.
#[inline]
fn blend(a: f64, b: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return a;
    }
    if alpha == 1.0 {
        return b;
    }
    (a + alpha * (b - a)).clamp(a.min(b), a.max(b))
}

pub fn interpolate_networks(g1: &ParamStore, g2: &ParamStore, alpha: f64) -> Result<ParamStore> {
    check_alpha(alpha)?;
    g1.check_compatible(g2)?;
    let mut out = ParamStore::new(*g1.digest());
    for ((name, a), (_, b)) in g1.iter().zip(g2.iter()) {
        out.insert(name, a.zip_map(b, |x, y| blend(x, y, alpha))?)?;
    }
    Ok(out)
}

/// Pixel-wise blend, clamped to `[0, 1]`.
pub fn interpolate_images(x1: &Tensor, x2: &Tensor, alpha: f64) -> Result<Tensor> {
    check_alpha(alpha)?;
    Ok(x1.zip_map(x2, |a, b| blend(a, b, alpha).clamp(0.0, 1.0))?)
}

/// Mean squared error on the `[0, 255]` scale.
pub fn mse_255(x: &Tensor, y: &Tensor) -> Result<f64> {
    let d = x.zip_map(y, |a, b| (a - b) * 255.0)?;
    Ok(d.data().iter().map(|v| v * v).sum::<f64>() / d.numel() as f64)
}

/// `10·log₁₀(255² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(x: &Tensor, y: &Tensor) -> Result<f64> {
    let mse = mse_255(x, y)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub psnr_db: f64,
    pub est_bpp: f64,
    pub actual_bpp: f64,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub mode: InterpMode,
    pub rows: Vec<SweepRow>,
    /// Reconstruction per row, cropped to the original size.
    pub images: Vec<Tensor>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,psnr_db,est_bpp,actual_bpp\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.alpha, r.psnr_db, r.est_bpp, r.actual_bpp);
        }
        s
    }
}

/// Stores needed to decode at arbitrary α.
pub struct SweepInputs<'a> {
    pub model: &'a Model,
    pub context: &'a ParamStore,
    pub g1: &'a ParamStore,
    pub g2: &'a ParamStore,
}

/// Decompresses `bitstream` once, then reconstructs and scores it at every α.
pub fn alpha_sweep(
    inputs: &SweepInputs<'_>,
    bitstream: &[u8],
    alphas: &[f64],
    original: &Tensor,
    mode: InterpMode,
) -> Result<SweepReport> {
    alphas.iter().try_for_each(|&a| check_alpha(a))?;
    let model = inputs.model;
    let stream = read_bitstream(model, bitstream)?;
    let z = decode_bitstream_latents(model, inputs.context, &stream, None)?;
    let field = model.context_forward(&z.to_tensor(), inputs.context)?;
    let report = rate_estimate(&z.to_tensor(), &field, stream.header.original_pixels())?.with_payload(stream.payload.len());
    let est_bpp = report.estimated_bpp();
    let actual_bpp = report.actual_bpp().expect("payload attached");

    let endpoints = match mode {
        InterpMode::Image => Some((
            reconstruct(model, inputs.g1, &z, &stream.header)?,
            reconstruct(model, inputs.g2, &z, &stream.header)?,
        )),
        InterpMode::Network => None,
    };
    // Each α is independent; rayon keeps the output order.
    let images = alphas
        .par_iter()
        .map(|&alpha| match &endpoints {
            Some((x1, x2)) => interpolate_images(x1, x2, alpha),
            None => {
                let g = interpolate_networks(inputs.g1, inputs.g2, alpha)?;
                reconstruct(model, &g, &z, &stream.header)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = alphas
        .iter()
        .zip(&images)
        .map(|(&alpha, image)| {
            Ok(SweepRow {
                alpha,
                psnr_db: psnr(original, image)?,
                est_bpp,
                actual_bpp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { mode, rows, images })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blend_arithmetic() {
        assert_eq!(blend(1.0, 2.0, 0.8), 1.8);
        assert_eq!(blend(-0.0, 5.0, 0.0).to_bits(), (-0.0f64).to_bits());
        assert_eq!(blend(3.0, -0.0, 1.0).to_bits(), (-0.0f64).to_bits());
        let v = blend(0.2, 0.7, 0.8);
        assert!((v - 0.6).abs() < 1e-15);
    }

    #[test]
    fn psnr_reference_points() {
        let x = Tensor::full([1, 3, 2, 2], 0.5);
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP_DB);
        let y = x.map(|v| v + 1.0 / 255.0);
        assert!((mse_255(&x, &y).unwrap() - 1.0).abs() < 1e-9);
        assert!((psnr(&x, &y).unwrap() - 48.130_803_608_679_1).abs() < 1e-6);
    }

    #[test]
    fn alpha_domain() {
        let x = Tensor::zeros([1, 3, 1, 1]);
        assert!(interpolate_images(&x, &x, 1.2).is_err());
        assert!(interpolate_images(&x, &x, -0.1).is_err());
        assert!("network".parse::<InterpMode>().is_ok());
        assert!("pixels".parse::<InterpMode>().is_err());
    }
}
