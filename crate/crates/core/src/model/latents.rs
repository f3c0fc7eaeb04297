use gmc_tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CodecError, Result};

/// Real-valued encoder output `y`, shape `(1, C, H/f, W/f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub y: Tensor,
}

/// Integer symbol grid `z` with per-channel alphabet bounds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedLatents {
    channels: usize,
    height: usize,
    width: usize,
    symbols: Vec<i32>,
    bounds: Vec<(i32, i32)>,
}

impl QuantizedLatents {
    /// Wraps `symbols` (channel-major, row-major planes) and derives bounds as
    /// the observed per-channel range widened by `margin`.
    pub fn new(channels: usize, height: usize, width: usize, symbols: Vec<i32>, margin: i32) -> Result<Self> {
        let plane = height * width;
        if symbols.len() != channels * plane || plane == 0 || channels == 0 {
            return Err(CodecError::Input(format!(
                "{} symbols do not fill a {channels}x{height}x{width} grid",
                symbols.len()
            )));
        }
        let bounds = symbols
            .chunks(plane)
            .map(|ch| {
                let lo = *ch.iter().min().expect("non-empty plane");
                let hi = *ch.iter().max().expect("non-empty plane");
                (lo.saturating_sub(margin), hi.saturating_add(margin))
            })
            .collect();
        Self::with_bounds(channels, height, width, symbols, bounds)
    }

    /// Wraps `symbols` with explicit bounds, which must fit in `i16` and
    /// contain every symbol.
    pub fn with_bounds(
        channels: usize,
        height: usize,
        width: usize,
        symbols: Vec<i32>,
        bounds: Vec<(i32, i32)>,
    ) -> Result<Self> {
        let plane = height * width;
        if symbols.len() != channels * plane || bounds.len() != channels {
            return Err(CodecError::Input(format!(
                "{} symbols / {} bounds do not match a {channels}x{height}x{width} grid",
                symbols.len(),
                bounds.len()
            )));
        }
        for (c, &(lo, hi)) in bounds.iter().enumerate() {
            let fits = |v: i32| (i16::MIN as i32..=i16::MAX as i32).contains(&v);
            if lo > hi || !fits(lo) || !fits(hi) {
                return Err(CodecError::Input(format!(
                    "channel {c} bounds [{lo}, {hi}] are not a valid 16-bit range"
                )));
            }
            if let Some(&s) = symbols[c * plane..(c + 1) * plane]
                .iter()
                .find(|&&s| s < lo || s > hi)
            {
                return Err(CodecError::Input(format!(
                    "symbol {s} in channel {c} outside bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(QuantizedLatents {
            channels,
            height,
            width,
            symbols,
            bounds,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[i32] {
        &self.symbols
    }

    pub fn bounds(&self) -> &[(i32, i32)] {
        &self.bounds
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> i32 {
        self.symbols[(c * self.height + y) * self.width + x]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            [1, self.channels, self.height, self.width],
            self.symbols.iter().map(|&s| s as f64).collect(),
        )
        .expect("length checked at construction")
    }
}

/// `ROUND(·)` with ties away from zero.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Inference-mode quantizer: rounds every element and records bounds widened by `margin`.
pub fn quantize_inference(code: &LatentCode, margin: i32) -> Result<QuantizedLatents> {
    let [n, c, h, w] = code.y.shape();
    if n != 1 {
        return Err(CodecError::Input(format!("expected a single latent grid, got batch {n}")));
    }
    let limit = i16::MAX as f64;
    let symbols = code
        .y
        .data()
        .iter()
        .map(|&v| {
            let r = round_half_away(v);
            if r.is_finite() && r.abs() <= limit {
                Ok(r as i32)
            } else {
                Err(CodecError::Input(format!("latent value {v} cannot be coded")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    QuantizedLatents::new(c, h, w, symbols, margin)
}

/// Noise `u ~ U(−½, ½)` with `|u| < ½` strictly, drawn in element order.
pub fn uniform_noise(shape: [usize; 4], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        if u > -0.5 {
            break u;
        }
    })
}

/// Training-mode quantizer: `y + u` with noise seeded by `seed`.
pub fn quantize_training(y: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = uniform_noise(y.shape(), &mut rng);
    y.zip_map(&noise, |a, b| a + b).expect("same shape")
}
