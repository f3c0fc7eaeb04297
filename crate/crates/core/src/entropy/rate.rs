use std::f64::consts::LN_2;

use gmc_tensor::{Tape, Tensor, Var};

use super::gmm::{pmf_unchecked, LIKELIHOOD_FLOOR};
use crate::error::{CodecError, Result};
use crate::model::{GmmField, GmmVars};

/// Estimated and (optionally) actual code length of one latent grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    /// `−Σ log₂ p(zᵢ)` under the real-valued mixture.
    pub estimated_bits: f64,
    /// Payload length × 8, once a payload exists.
    pub actual_bits: Option<u64>,
    /// Pixel count `N` of the original (unpadded) image.
    pub pixels: usize,
}

impl RateReport {
    pub fn estimated_bpp(&self) -> f64 {
        self.estimated_bits / self.pixels as f64
    }

    pub fn actual_bpp(&self) -> Option<f64> {
        self.actual_bits.map(|b| b as f64 / self.pixels as f64)
    }

    pub fn with_payload(mut self, payload_bytes: usize) -> Self {
        self.actual_bits = Some(payload_bytes as u64 * 8);
        self
    }
}

/// `−Σ log₂ max(p(zᵢ), floor)` over every element of `z` (`(1, C, h, w)`),
/// in the same element order and with the same clamp as the training graph.
pub fn estimate_bits(z: &Tensor, field: &GmmField) -> Result<f64> {
    let (c, h, w) = field.grid();
    if z.shape() != [1, c, h, w] {
        return Err(CodecError::Input(format!(
            "latents {:?} do not match GMM field ({c}, {h}, {w})",
            z.shape()
        )));
    }
    let k = field.mixtures();
    let plane = c * h * w;
    let (wd, md, sd) = (field.weights.data(), field.means.data(), field.stds.data());
    let mut ws = vec![0.0; k];
    let mut ms = vec![0.0; k];
    let mut ss = vec![0.0; k];
    let mut total = 0.0;
    for (i, &zi) in z.data().iter().enumerate() {
        for j in 0..k {
            ws[j] = wd[j * plane + i];
            ms[j] = md[j * plane + i];
            ss[j] = sd[j * plane + i];
        }
        total += libm::log(pmf_unchecked(zi, &ws, &ms, &ss).max(LIKELIHOOD_FLOOR));
    }
    Ok(total * (-1.0 / LN_2))
}

pub fn rate_estimate(z: &Tensor, field: &GmmField, pixels: usize) -> Result<RateReport> {
    if pixels == 0 {
        return Err(CodecError::Input("pixel count must be positive".into()));
    }
    Ok(RateReport {
        estimated_bits: estimate_bits(z, field)?,
        actual_bits: None,
        pixels,
    })
}

/// Differentiable counterpart of [`estimate_bits`]: a scalar holding the total
/// bits of `z` under `gmm`.
pub fn rate_bits_var(tape: &mut Tape, z: Var, gmm: &GmmVars, mixtures: usize) -> Result<Var> {
    let zk = tape.repeat_groups(z, mixtures)?;
    let mass = tape.bin_mass(zk, gmm.means, gmm.stds)?;
    let weighted = tape.mul(mass, gmm.weights)?;
    let p = tape.sum_groups(weighted, mixtures)?;
    let p = tape.clamp_min(p, LIKELIHOOD_FLOOR)?;
    let logp = tape.ln(p)?;
    let total = tape.sum(logp)?;
    Ok(tape.scale(total, -1.0 / LN_2)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_symbols() {
        // σ chosen so that the central bin holds mass 1/2: Φ(0.5/σ) − Φ(−0.5/σ) = 0.5
        let sigma = 0.5 / 0.674_489_750_196_081_7;
        let field = GmmField {
            weights: Tensor::ones([1, 1, 4, 4]),
            means: Tensor::zeros([1, 1, 4, 4]),
            stds: Tensor::full([1, 1, 4, 4], sigma),
        };
        let report = rate_estimate(&Tensor::zeros([1, 1, 4, 4]), &field, 256).unwrap();
        assert!((report.estimated_bits - 16.0).abs() < 1e-9, "{}", report.estimated_bits);
        assert!((report.estimated_bpp() - 0.0625).abs() < 1e-12);
        let doubled = rate_estimate(&Tensor::zeros([1, 1, 4, 4]), &field, 512).unwrap();
        assert_eq!(doubled.estimated_bits, report.estimated_bits);
        assert!((doubled.estimated_bpp() - report.estimated_bpp() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn tape_and_direct_estimates_agree() {
        let field = GmmField {
            weights: Tensor::from_fn([2, 2, 3, 3], |k, _, _, _| if k == 0 { 0.3 } else { 0.7 }),
            means: Tensor::from_fn([2, 2, 3, 3], |k, c, h, w| (k + c) as f64 * 0.4 - (h * w) as f64 * 0.1),
            stds: Tensor::from_fn([2, 2, 3, 3], |k, c, h, _| 0.2 + (k + c + h) as f64 * 0.3),
        };
        let z = Tensor::from_fn([1, 2, 3, 3], |_, c, h, w| ((c + 2 * h + w) % 5) as f64 - 2.0);
        let direct = estimate_bits(&z, &field).unwrap();
        let mut tape = Tape::new();
        let zv = tape.constant(z);
        let to_var = |tape: &mut Tape, t: &Tensor| tape.constant(t.clone().reshape([1, 4, 3, 3]).unwrap());
        let gmm = GmmVars {
            weights: to_var(&mut tape, &field.weights),
            means: to_var(&mut tape, &field.means),
            stds: to_var(&mut tape, &field.stds),
        };
        let bits = rate_bits_var(&mut tape, zv, &gmm, 2).unwrap();
        let taped = tape.value(bits).item();
        assert!((taped - direct).abs() <= 1e-9 * direct.abs(), "{taped} vs {direct}");
    }
}
