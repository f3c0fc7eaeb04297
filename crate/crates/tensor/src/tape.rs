//! Reverse-mode differentiation over a linear record of operations.
//!
//! Nodes are appended in execution order, so the record is topologically sorted
//! by construction. One [`Tape::backward`] call is allowed per recording; the
//! tape must be [`reset`](Tape::reset) before it can record again.

use crate::conv::{conv2d, conv2d_backward};
use crate::error::{Result, TensorError};
use crate::special;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    },
    PixelShuffle(Var, usize),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Softplus(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AvgPool2(Var),
    SoftmaxGroups(Var, usize),
    SumGroups(Var, usize),
    RepeatGroups(Var, usize),
    Narrow {
        input: Var,
        start: usize,
    },
    BinMass {
        x: Var,
        mean: Var,
        std: Var,
    },
    ClampMin(Var, f64),
    Ln(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// The gradient record.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by one backward pass, indexed by leaf [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        Some(acc) => {
            for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a += d;
            }
        }
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Discards the record so the tape can be reused.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients are produced only for leaves with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite leaf value");
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    fn check(&self, vars: &[Var]) -> Result<()> {
        if self.consumed {
            return Err(TensorError::StaleRecord);
        }
        match vars.iter().find(|v| v.0 >= self.nodes.len()) {
            Some(v) => Err(TensorError::UnknownVar(v.0)),
            None => Ok(()),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).map(f);
        Ok(self.push(value, op, &[x]))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.check(&[a, b])?;
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: name,
                left: ta.shape(),
                right: tb.shape(),
            });
        }
        let value = ta.zip_map(tb, f)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let mut vars = vec![input, weight];
        vars.extend(bias);
        self.check(&vars)?;
        let value = conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            stride,
            pad,
        )?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
            &vars,
        ))
    }

    /// Same-padded convolution with `weight ⊙ mask`. For a type-A mask the output
    /// at a position sees only inputs strictly before it in raster order.
    pub fn masked_conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, mask: &Tensor) -> Result<Var> {
        self.check(&[input, weight])?;
        let ws = self.value(weight).shape();
        if mask.shape() != ws {
            return Err(TensorError::config(
                "masked_conv2d",
                format!("mask shape {:?} differs from kernel shape {ws:?}", mask.shape()),
            ));
        }
        if ws[2] % 2 == 0 || ws[3] % 2 == 0 {
            return Err(TensorError::config("masked_conv2d", "kernel dims must be odd"));
        }
        let mask = self.constant(mask.clone());
        let masked = self.mul(weight, mask)?;
        self.conv2d(input, masked, bias, 1, ws[2] / 2)
    }

    pub fn pixel_shuffle(&mut self, x: Var, factor: usize) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).pixel_shuffle(factor)?;
        Ok(self.push(value, Op::PixelShuffle(x, factor), &[x]))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.unary(x, Op::LeakyRelu(x, slope), |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), special::sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Softplus(x), special::softplus)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.unary(x, Op::Scale(x, factor), |v| v * factor)
    }

    pub fn add_scalar(&mut self, x: Var, offset: f64) -> Result<Var> {
        self.unary(x, Op::AddScalar(x), |v| v + offset)
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).avg_pool2()?;
        Ok(self.push(value, Op::AvgPool2(x), &[x]))
    }

    /// Softmax across the `groups` channel blocks of `(N, groups·C, H, W)`.
    pub fn softmax_groups(&mut self, x: Var, groups: usize) -> Result<Var> {
        self.check(&[x])?;
        let t = self.value(x);
        let [n, c, h, w] = t.shape();
        if groups == 0 || c % groups != 0 {
            return Err(TensorError::config(
                "softmax",
                format!("{c} channels not divisible into {groups} groups"),
            ));
        }
        let block = (c / groups) * h * w;
        let mut out = t.clone();
        let data = out.data_mut();
        for ni in 0..n {
            let base = ni * c * h * w;
            for j in 0..block {
                let idx = |g: usize| base + g * block + j;
                let max = (0..groups).map(|g| data[idx(g)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for g in 0..groups {
                    let e = libm::exp(data[idx(g)] - max);
                    data[idx(g)] = e;
                    total += e;
                }
                for g in 0..groups {
                    data[idx(g)] /= total;
                }
            }
        }
        Ok(self.push(out, Op::SoftmaxGroups(x, groups), &[x]))
    }

    pub fn sum_groups(&mut self, x: Var, groups: usize) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).sum_channel_groups(groups)?;
        Ok(self.push(value, Op::SumGroups(x, groups), &[x]))
    }

    pub fn repeat_groups(&mut self, x: Var, groups: usize) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).repeat_channels(groups);
        Ok(self.push(value, Op::RepeatGroups(x, groups), &[x]))
    }

    pub fn narrow_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(&[x])?;
        let value = self.value(x).narrow_channels(start, len)?;
        Ok(self.push(value, Op::Narrow { input: x, start }, &[x]))
    }

    /// Elementwise `Φ((x + ½ − mean)/std) − Φ((x − ½ − mean)/std)`.
    pub fn bin_mass(&mut self, x: Var, mean: Var, std: Var) -> Result<Var> {
        self.check(&[x, mean, std])?;
        let (tx, tm, ts) = (self.value(x), self.value(mean), self.value(std));
        tx.expect_same_shape("bin_mass", tm)?;
        tx.expect_same_shape("bin_mass", ts)?;
        let data = tx
            .data()
            .iter()
            .zip(tm.data())
            .zip(ts.data())
            .map(|((&x, &m), &s)| special::bin_mass(x, m, s))
            .collect();
        let value = Tensor::new(tx.shape(), data)?;
        Ok(self.push(value, Op::BinMass { x, mean, std }, &[x, mean, std]))
    }

    /// `max(x, min)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, x: Var, min: f64) -> Result<Var> {
        self.unary(x, Op::ClampMin(x, min), |v| v.max(min))
    }

    pub fn ln(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Ln(x), libm::log)
    }

    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let value = Tensor::scalar(self.value(x).sum());
        Ok(self.push(value, Op::Sum(x), &[x]))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.numel() as f64);
        Ok(self.push(value, Op::Mean(x), &[x]))
    }

    /// Back-propagates from a scalar `loss`. Consumes the record: a second call,
    /// or any further recording, fails with [`TensorError::StaleRecord`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        self.check(&[loss])?;
        let shape = self.value(loss).shape();
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Tensor::ones(shape));
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (var, delta) in self.local_grads(i, &g)? {
                if self.nodes[var.0].needs_grad {
                    accumulate(&mut grads[var.0], delta);
                }
            }
        }
        for node in &mut self.nodes {
            node.op = Op::Leaf;
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Vector-Jacobian products of node `i` for upstream gradient `g`.
    fn local_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let out = &node.value;
        let elementwise = |x: Var, f: &dyn Fn(f64, f64) -> f64| -> Result<Vec<(Var, Tensor)>> {
            Ok(vec![(x, self.value(x).zip_map(g, f)?)])
        };
        Ok(match node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                let want = [self.wants(input), self.wants(weight), bias.is_some_and(|b| self.wants(b))];
                let cg = conv2d_backward(self.value(input), self.value(weight), g, stride, pad, want)?;
                let mut v = Vec::new();
                v.extend(cg.input.map(|t| (input, t)));
                v.extend(cg.weight.map(|t| (weight, t)));
                if let (Some(b), Some(t)) = (bias, cg.bias) {
                    v.push((b, t));
                }
                v
            }
            Op::PixelShuffle(x, r) => vec![(x, g.pixel_unshuffle(r)?)],
            Op::LeakyRelu(x, slope) => elementwise(x, &|v, d| if v > 0.0 { d } else { slope * d })?,
            Op::Sigmoid(x) => vec![(x, out.zip_map(g, |s, d| d * s * (1.0 - s))?)],
            Op::Softplus(x) => elementwise(x, &|v, d| d * special::sigmoid(v))?,
            Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
            Op::Sub(a, b) => vec![(a, g.clone()), (b, g.map(|d| -d))],
            Op::Mul(a, b) => {
                let mut v = Vec::new();
                if self.wants(a) {
                    v.push((a, self.value(b).zip_map(g, |y, d| y * d)?));
                }
                if self.wants(b) {
                    v.push((b, self.value(a).zip_map(g, |x, d| x * d)?));
                }
                v
            }
            Op::Scale(x, f) => vec![(x, g.map(|d| d * f))],
            Op::AddScalar(x) => vec![(x, g.clone())],
            Op::AvgPool2(x) => {
                let [n, c, h, w] = self.value(x).shape();
                let dx = Tensor::from_fn([n, c, h, w], |ni, ci, hi, wi| 0.25 * g.at(ni, ci, hi / 2, wi / 2));
                vec![(x, dx)]
            }
            Op::SoftmaxGroups(x, groups) => {
                // dx_g = s_g · (d_g − Σ_j s_j d_j)
                let [n, c, h, w] = out.shape();
                let block = (c / groups) * h * w;
                let mut dx = Tensor::zeros(out.shape());
                let (s, d) = (out.data(), g.data());
                let o = dx.data_mut();
                for ni in 0..n {
                    let base = ni * c * h * w;
                    for j in 0..block {
                        let dot: f64 = (0..groups).map(|k| s[base + k * block + j] * d[base + k * block + j]).sum();
                        for k in 0..groups {
                            let idx = base + k * block + j;
                            o[idx] = s[idx] * (d[idx] - dot);
                        }
                    }
                }
                vec![(x, dx)]
            }
            Op::SumGroups(x, groups) => vec![(x, g.repeat_channels(groups))],
            Op::RepeatGroups(x, groups) => vec![(x, g.sum_channel_groups(groups)?)],
            Op::Narrow { input, start } => {
                let [n, c, h, w] = self.value(input).shape();
                let len = g.shape()[1];
                let dx = Tensor::from_fn([n, c, h, w], |ni, ci, hi, wi| {
                    if ci >= start && ci < start + len {
                        g.at(ni, ci - start, hi, wi)
                    } else {
                        0.0
                    }
                });
                vec![(input, dx)]
            }
            Op::BinMass { x, mean, std } => {
                let (tx, tm, ts) = (self.value(x), self.value(mean), self.value(std));
                let len = tx.numel();
                let (mut gx, mut gm, mut gs) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
                for j in 0..len {
                    let (dx, dm, ds) = special::bin_mass_grad(tx.data()[j], tm.data()[j], ts.data()[j]);
                    let d = g.data()[j];
                    gx[j] = dx * d;
                    gm[j] = dm * d;
                    gs[j] = ds * d;
                }
                let shape = tx.shape();
                vec![
                    (x, Tensor::new(shape, gx)?),
                    (mean, Tensor::new(shape, gm)?),
                    (std, Tensor::new(shape, gs)?),
                ]
            }
            Op::ClampMin(x, min) => elementwise(x, &|v, d| if v >= min { d } else { 0.0 })?,
            Op::Ln(x) => elementwise(x, &|v, d| d / v)?,
            Op::Abs(x) => elementwise(x, &|v, d| if v > 0.0 { d } else if v < 0.0 { -d } else { 0.0 })?,
            Op::Square(x) => elementwise(x, &|v, d| 2.0 * v * d)?,
            Op::Sum(x) => vec![(x, Tensor::full(self.value(x).shape(), g.item()))],
            Op::Mean(x) => {
                let t = self.value(x);
                vec![(x, Tensor::full(t.shape(), g.item() / t.numel() as f64))]
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::from_fn([1, 2, 2, 2], |_, c, h, w| (c + h + w) as f64));
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &Tensor::ones([1, 2, 2, 2]));
    }

    #[test]
    fn quadratic_gradient() {
        let mut tape = Tape::new();
        let t = Tensor::from_fn([1, 1, 3, 3], |_, _, h, w| h as f64 - w as f64 * 0.5);
        let x = tape.param(t.clone());
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap(), &t.map(|v| 2.0 * v));
    }

    #[test]
    fn second_backward_is_stale() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let loss = tape.square(x).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.backward(loss).unwrap_err(), TensorError::StaleRecord);
        assert_eq!(tape.square(x).unwrap_err(), TensorError::StaleRecord);
        tape.reset();
        assert!(tape.is_empty());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::zeros([1, 1, 2, 2]));
        assert!(matches!(tape.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::scalar(2.0));
        let b = tape.constant(Tensor::scalar(5.0));
        let p = tape.mul(a, b).unwrap();
        let grads = tape.backward(p).unwrap();
        assert_eq!(grads.get(a).unwrap().item(), 5.0);
        assert!(grads.get(b).is_none());
    }

    #[test]
    fn elementwise_definitions() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new([1, 1, 1, 2], vec![-1.0, 2.0]).unwrap());
        let y = tape.leaky_relu(x, 0.2).unwrap();
        assert_eq!(tape.value(y).data(), &[-0.2, 2.0]);
        let z = tape.constant(Tensor::zeros([1, 3, 1, 1]));
        let s = tape.softmax_groups(z, 3).unwrap();
        for &v in tape.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let zero = tape.constant(Tensor::scalar(0.0));
        let sp = tape.softplus(zero).unwrap();
        assert!((tape.value(sp).item() - 0.693_147_180_559_945_3).abs() < 1e-15);
    }
}
