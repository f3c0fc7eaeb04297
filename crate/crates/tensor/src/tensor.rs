use crate::error::{Result, TensorError};

/// `(batch, channels, height, width)`.
pub type Shape = [usize; 4];

/// Dense row-major NCHW array of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

pub(crate) fn numel(shape: Shape) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: Shape) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor {
            shape,
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: [1, 1, 1, 1],
            data: vec![value],
        }
    }

    /// Builds a tensor by evaluating `f(n, c, h, w)` at every index.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(numel(shape));
        for n in 0..shape[0] {
            for c in 0..shape[1] {
                for h in 0..shape[2] {
                    for w in 0..shape[3] {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + h) * ws + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f64) {
        let i = self.index(n, c, h, w);
        self.data[i] = value;
    }

    /// First element; the value of a scalar tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_same_shape("zip_map", other)?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Rounds every element to the nearest `f32`. Persistent state (weights,
    /// optimizer moments) is kept `f32`-representable so files round-trip exactly.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.expect_same_shape("max_abs_diff", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn expect_same_shape(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape,
                right: other.shape,
            });
        }
        Ok(())
    }

    /// Pixel shuffle: `out(n, c, h·r+a, w·r+b) = in(n, c·r² + a·r + b, h, w)`.
    pub fn pixel_shuffle(&self, r: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if r == 0 || c % (r * r) != 0 {
            return Err(TensorError::config(
                "subpixel_upsample",
                format!("{c} channels not divisible by factor² = {}", r * r),
            ));
        }
        let co = c / (r * r);
        let mut out = Tensor::zeros([n, co, h * r, w * r]);
        for ni in 0..n {
            for ci in 0..c {
                let (oc, a, b) = (ci / (r * r), (ci % (r * r)) / r, ci % r);
                for hi in 0..h {
                    for wi in 0..w {
                        let v = self.at(ni, ci, hi, wi);
                        out.set(ni, oc, hi * r + a, wi * r + b, v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::pixel_shuffle`].
    pub fn pixel_unshuffle(&self, r: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(TensorError::config(
                "pixel_unshuffle",
                format!("spatial dims {h}×{w} not divisible by {r}"),
            ));
        }
        let mut out = Tensor::zeros([n, c * r * r, h / r, w / r]);
        for ni in 0..n {
            for ci in 0..c * r * r {
                let (sc, a, b) = (ci / (r * r), (ci % (r * r)) / r, ci % r);
                for hi in 0..h / r {
                    for wi in 0..w / r {
                        let v = self.at(ni, sc, hi * r + a, wi * r + b);
                        out.set(ni, ci, hi, wi, v);
                    }
                }
            }
        }
        Ok(out)
    }

    /// 2×2 average pooling with stride 2.
    pub fn avg_pool2(&self) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(TensorError::config(
                "avg_pool2",
                format!("spatial dims {h}×{w} must be even"),
            ));
        }
        Ok(Tensor::from_fn([n, c, h / 2, w / 2], |ni, ci, hi, wi| {
            let (y, x) = (hi * 2, wi * 2);
            (self.at(ni, ci, y, x)
                + self.at(ni, ci, y, x + 1)
                + self.at(ni, ci, y + 1, x)
                + self.at(ni, ci, y + 1, x + 1))
                * 0.25
        }))
    }

    /// Copies channels `start..start+len`.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if start + len > c {
            return Err(TensorError::config(
                "narrow_channels",
                format!("range {start}..{} exceeds {c} channels", start + len),
            ));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * len * plane);
        for ni in 0..n {
            let base = (ni * c + start) * plane;
            data.extend_from_slice(&self.data[base..base + len * plane]);
        }
        Ok(Tensor {
            shape: [n, len, h, w],
            data,
        })
    }

    /// Stacks `groups` copies of the channel axis: `(N, C, H, W) -> (N, groups·C, H, W)`.
    pub fn repeat_channels(&self, groups: usize) -> Tensor {
        let [n, c, h, w] = self.shape;
        let block = c * h * w;
        let mut data = Vec::with_capacity(n * groups * block);
        for ni in 0..n {
            let src = &self.data[ni * block..(ni + 1) * block];
            for _ in 0..groups {
                data.extend_from_slice(src);
            }
        }
        Tensor {
            shape: [n, groups * c, h, w],
            data,
        }
    }

    /// Sums the `groups` channel blocks: `(N, groups·C, H, W) -> (N, C, H, W)`.
    /// Accumulates in block order starting from zero.
    pub fn sum_channel_groups(&self, groups: usize) -> Result<Tensor> {
        let [n, c, h, w] = self.shape;
        if groups == 0 || c % groups != 0 {
            return Err(TensorError::config(
                "sum_groups",
                format!("{c} channels not divisible into {groups} groups"),
            ));
        }
        let co = c / groups;
        let block = co * h * w;
        let mut out = Tensor::zeros([n, co, h, w]);
        for ni in 0..n {
            let dst = &mut out.data[ni * block..(ni + 1) * block];
            for g in 0..groups {
                let src = &self.data[(ni * groups + g) * block..(ni * groups + g + 1) * block];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        Ok(out)
    }
}
