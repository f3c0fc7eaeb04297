//! Autoregressive entropy model: a type-A masked 5×5 convolution followed by
//! three 1×1 convolutions, emitting `K` mixture components per latent element.
//!
//! Two evaluation paths exist. [`ContextModel::forward`] runs on a tape over a
//! whole grid (training, rate estimation). [`ContextEvaluator`] computes one
//! spatial position at a time from already-known symbols; the entropy coder
//! uses it on both sides so encoder and decoder agree bit for bit.

use gmc_tensor::special::softplus;
use gmc_tensor::{type_a_mask, ParamStore, Tape, Tensor, Var};
use rand::Rng;

use super::layers::{lrelu, Bound, Conv};
use crate::config::{ModelConfig, CONTEXT_KERNEL, LEAKY_SLOPE};
use crate::error::{CodecError, Result};

/// Per-element mixture parameters, each tensor shaped `(K, C, h, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmField {
    pub weights: Tensor,
    pub means: Tensor,
    pub stds: Tensor,
}

impl GmmField {
    pub fn mixtures(&self) -> usize {
        self.weights.shape()[0]
    }

    /// `(C, h, w)` of the latent grid the field describes.
    pub fn grid(&self) -> (usize, usize, usize) {
        let [_, c, h, w] = self.weights.shape();
        (c, h, w)
    }

    /// Mixture parameters of element `(c, y, x)` as `(w, μ, σ)` per component.
    pub fn component(&self, k: usize, c: usize, y: usize, x: usize) -> (f64, f64, f64) {
        (
            self.weights.at(k, c, y, x),
            self.means.at(k, c, y, x),
            self.stds.at(k, c, y, x),
        )
    }

    /// Checks the simplex (to 1e-6) and σ-floor invariants.
    pub fn validate(&self, sigma_floor: f64) -> Result<()> {
        let [k, c, h, w] = self.weights.shape();
        if self.means.shape() != self.weights.shape() || self.stds.shape() != self.weights.shape() {
            return Err(CodecError::Input("GMM field tensors differ in shape".into()));
        }
        let plane = c * h * w;
        let wd = self.weights.data();
        for i in 0..plane {
            let total: f64 = (0..k).map(|j| wd[j * plane + i]).sum();
            if (total - 1.0).abs() > 1e-6 || (0..k).any(|j| wd[j * plane + i] < 0.0) {
                return Err(CodecError::Input(format!("mixture weights at element {i} sum to {total}")));
            }
        }
        if let Some(s) = self.stds.data().iter().find(|&&s| !(s >= sigma_floor)) {
            return Err(CodecError::Input(format!("std {s} below floor {sigma_floor}")));
        }
        Ok(())
    }
}

/// Tape handles of the mixture parameters, each `(1, K·C, h, w)` with
/// channel index `k·C + c`.
#[derive(Clone, Copy, Debug)]
pub struct GmmVars {
    pub weights: Var,
    pub means: Var,
    pub stds: Var,
}

impl GmmVars {
    pub fn to_field(&self, tape: &Tape, mixtures: usize) -> Result<GmmField> {
        let reshape = |v: Var| -> Result<Tensor> {
            let t = tape.value(v).clone();
            let [_, kc, h, w] = t.shape();
            Ok(t.reshape([mixtures, kc / mixtures, h, w])?)
        };
        Ok(GmmField {
            weights: reshape(self.weights)?,
            means: reshape(self.means)?,
            stds: reshape(self.stds)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ContextModel {
    mixtures: usize,
    channels: usize,
    hidden: usize,
    sigma_floor: f64,
    kind: Kind,
}

#[derive(Clone, Debug)]
enum Kind {
    Masked {
        masked: Conv,
        mask: Tensor,
        h1: Conv,
        h2: Conv,
        out: Conv,
    },
    /// Context-free ablation: one learned set of mixture parameters per channel.
    Prior { table: Conv },
}

impl ContextModel {
    pub fn new(config: &ModelConfig) -> Self {
        let c = config.latent_channels;
        let k = config.mixtures;
        let hidden = config.base_channels;
        let kind = if config.context_enabled {
            Kind::Masked {
                masked: Conv::new("ctx.masked", c, hidden, CONTEXT_KERNEL, 1),
                mask: type_a_mask(hidden, c, CONTEXT_KERNEL),
                h1: Conv::new("ctx.h1", hidden, hidden, 1, 1),
                h2: Conv::new("ctx.h2", hidden, hidden, 1, 1),
                out: Conv::new("ctx.out", hidden, 3 * k * c, 1, 1),
            }
        } else {
            Kind::Prior {
                table: Conv::new("ctx.prior", 1, 3 * k * c, 1, 1),
            }
        };
        ContextModel {
            mixtures: k,
            channels: c,
            hidden,
            sigma_floor: config.sigma_floor,
            kind,
        }
    }

    pub fn declare(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        match &self.kind {
            Kind::Masked {
                masked, h1, h2, out, ..
            } => {
                masked.declare(store, rng)?;
                h1.declare(store, rng)?;
                h2.declare(store, rng)?;
                out.declare(store, rng)
            }
            Kind::Prior { table } => table.declare(store, rng),
        }
    }

    /// Mixture parameters for every element of `z` (`(1, C, h, w)`).
    pub fn forward(&self, tape: &mut Tape, p: &Bound, z: Var) -> Result<GmmVars> {
        let [_, c, h, w] = tape.value(z).shape();
        if c != self.channels {
            return Err(CodecError::Input(format!(
                "context model expects {} latent channels, got {c}",
                self.channels
            )));
        }
        let raw = match &self.kind {
            Kind::Masked {
                masked,
                mask,
                h1,
                h2,
                out,
            } => {
                let wv = p.var(&masked.weight_name())?;
                let bv = p.var(&masked.bias_name())?;
                let t = tape.masked_conv2d(z, wv, Some(bv), mask)?;
                let t = lrelu(tape, t)?;
                let t = h1.forward(tape, p, t)?;
                let t = lrelu(tape, t)?;
                let t = h2.forward(tape, p, t)?;
                let t = lrelu(tape, t)?;
                out.forward(tape, p, t)?
            }
            Kind::Prior { table } => {
                let ones = tape.constant(Tensor::ones([1, 1, h, w]));
                table.forward(tape, p, ones)?
            }
        };
        let kc = self.mixtures * self.channels;
        let logits = tape.narrow_channels(raw, 0, kc)?;
        let means = tape.narrow_channels(raw, kc, kc)?;
        let sraw = tape.narrow_channels(raw, 2 * kc, kc)?;
        let weights = tape.softmax_groups(logits, self.mixtures)?;
        let s = tape.softplus(sraw)?;
        let stds = tape.add_scalar(s, self.sigma_floor)?;
        Ok(GmmVars { weights, means, stds })
    }

    /// Extracts a tape-free per-position evaluator from trained parameters.
    pub fn evaluator(&self, params: &ParamStore) -> Result<ContextEvaluator> {
        let fetch = |conv: &Conv| -> Result<(Vec<f64>, Vec<f64>)> {
            let w = params.get(&conv.weight_name())?;
            let b = params.get(&conv.bias_name())?;
            let expect = conv.weight_shape();
            if w.shape() != expect || b.shape() != [1, conv.cout, 1, 1] {
                return Err(CodecError::CorruptShape {
                    name: conv.name.clone(),
                    expected: expect.to_vec(),
                    found: w.shape().to_vec(),
                });
            }
            Ok((w.data().to_vec(), b.data().to_vec()))
        };
        let body = match &self.kind {
            Kind::Masked {
                masked, h1, h2, out, ..
            } => {
                let (mw, mb) = fetch(masked)?;
                let k = CONTEXT_KERNEL;
                let center = k / 2;
                let mut taps = Vec::new();
                for dy in 0..k {
                    for dx in 0..k {
                        if dy < center || (dy == center && dx < center) {
                            taps.push((dy as isize - center as isize, dx as isize - center as isize));
                        }
                    }
                }
                // weights regrouped as [out][cin][tap] over visible taps only
                let cin = self.channels;
                let mut dense = Vec::with_capacity(self.hidden * cin * taps.len());
                for o in 0..self.hidden {
                    for ci in 0..cin {
                        for &(dy, dx) in &taps {
                            let ky = (dy + center as isize) as usize;
                            let kx = (dx + center as isize) as usize;
                            dense.push(mw[((o * cin + ci) * k + ky) * k + kx]);
                        }
                    }
                }
                Body::Masked {
                    taps,
                    masked: (dense, mb),
                    h1: fetch(h1)?,
                    h2: fetch(h2)?,
                    out: fetch(out)?,
                }
            }
            Kind::Prior { table } => {
                let (w, b) = fetch(table)?;
                Body::Prior(w.iter().zip(&b).map(|(w, b)| w + b).collect())
            }
        };
        Ok(ContextEvaluator {
            mixtures: self.mixtures,
            channels: self.channels,
            hidden: self.hidden,
            sigma_floor: self.sigma_floor,
            body,
        })
    }
}

#[derive(Clone, Debug)]
enum Body {
    Masked {
        taps: Vec<(isize, isize)>,
        masked: (Vec<f64>, Vec<f64>),
        h1: (Vec<f64>, Vec<f64>),
        h2: (Vec<f64>, Vec<f64>),
        out: (Vec<f64>, Vec<f64>),
    },
    Prior(Vec<f64>),
}

/// Mixture parameters of all channels at one spatial position; entry
/// `k·C + c` belongs to component `k` of channel `c`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PositionGmm {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl PositionGmm {
    /// `(w, μ, σ)` slices for channel `c`, one entry per component.
    pub fn channel(&self, c: usize, channels: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.weights.len() / channels;
        let pick = |v: &[f64]| (0..k).map(|j| v[j * channels + c]).collect();
        (pick(&self.weights), pick(&self.means), pick(&self.stds))
    }
}

/// Single-position context evaluation that reads only causal neighbours.
#[derive(Clone, Debug)]
pub struct ContextEvaluator {
    mixtures: usize,
    channels: usize,
    hidden: usize,
    sigma_floor: f64,
    body: Body,
}

fn dense_layer(input: &[f64], (w, b): (&[f64], &[f64]), act: bool, out: &mut Vec<f64>) {
    let cin = input.len();
    out.clear();
    for (o, bias) in b.iter().enumerate() {
        let row = &w[o * cin..(o + 1) * cin];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(input) {
            acc += wi * xi;
        }
        let v = acc + bias;
        out.push(if act && v < 0.0 { v * LEAKY_SLOPE } else { v });
    }
}

impl ContextEvaluator {
    pub fn mixtures(&self) -> usize {
        self.mixtures
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Mixture parameters at `(y, x)` of a `C×h×w` grid. Only positions
    /// strictly before `(y, x)` in raster order are read.
    pub fn eval(&self, grid: &[i32], height: usize, width: usize, y: usize, x: usize) -> PositionGmm {
        let raw = match &self.body {
            Body::Masked {
                taps,
                masked: (mw, mb),
                h1,
                h2,
                out,
            } => {
                let plane = height * width;
                let ntaps = taps.len();
                let mut visible = vec![0.0; self.channels * ntaps];
                for (t, &(dy, dx)) in taps.iter().enumerate() {
                    let (sy, sx) = (y as isize + dy, x as isize + dx);
                    if sy < 0 || sx < 0 || sy >= height as isize || sx >= width as isize {
                        continue;
                    }
                    let idx = sy as usize * width + sx as usize;
                    for c in 0..self.channels {
                        visible[c * ntaps + t] = grid[c * plane + idx] as f64;
                    }
                }
                let mut a = Vec::with_capacity(self.hidden);
                dense_layer(&visible, (mw, mb), true, &mut a);
                let mut b = Vec::with_capacity(self.hidden);
                dense_layer(&a, (&h1.0, &h1.1), true, &mut b);
                dense_layer(&b, (&h2.0, &h2.1), true, &mut a);
                let mut raw = Vec::with_capacity(3 * self.mixtures * self.channels);
                dense_layer(&a, (&out.0, &out.1), false, &mut raw);
                raw
            }
            Body::Prior(v) => v.clone(),
        };
        self.head(&raw)
    }

    fn head(&self, raw: &[f64]) -> PositionGmm {
        let (k, c) = (self.mixtures, self.channels);
        let kc = k * c;
        let mut weights = vec![0.0; kc];
        for ch in 0..c {
            let max = (0..k).map(|j| raw[j * c + ch]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..k {
                let e = libm::exp(raw[j * c + ch] - max);
                weights[j * c + ch] = e;
                total += e;
            }
            for j in 0..k {
                weights[j * c + ch] /= total;
            }
        }
        PositionGmm {
            weights,
            means: raw[kc..2 * kc].to_vec(),
            stds: raw[2 * kc..3 * kc]
                .iter()
                .map(|&s| softplus(s) + self.sigma_floor)
                .collect(),
        }
    }
}
