//! 2-D convolution via im2col + GEMM, with zero padding.

use crate::error::{Result, TensorError};
use crate::gemm::gemm;
use crate::tensor::Tensor;

/// `floor((size + 2·pad − kernel) / stride) + 1`, or `None` if the kernel does not fit.
pub fn conv_output_dim(size: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Geometry {
    pub fn new(input: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Self> {
        let [n, cin, h, w] = input.shape();
        let [cout, wcin, kh, kw] = weight.shape();
        if wcin != cin {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                left: input.shape(),
                right: weight.shape(),
            });
        }
        if stride == 0 {
            return Err(TensorError::config("conv2d", "stride must be at least 1"));
        }
        let (ho, wo) = match (
            conv_output_dim(h, kh, stride, pad),
            conv_output_dim(w, kw, stride, pad),
        ) {
            (Some(ho), Some(wo)) => (ho, wo),
            _ => {
                return Err(TensorError::config(
                    "conv2d",
                    format!(
                        "kernel {kh}×{kw} does not fit input {h}×{w} with pad {pad} (input {:?}, weight {:?})",
                        input.shape(),
                        weight.shape()
                    ),
                ))
            }
        };
        Ok(Geometry {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.ho * self.wo
    }

    fn in_sample(&self) -> usize {
        self.cin * self.h * self.w
    }
}

/// Unfolds one input sample into a `(cin·kh·kw) × (ho·wo)` matrix.
fn im2col(g: &Geometry, x: &[f64], cols: &mut [f64]) {
    let plane = g.out_plane();
    for c in 0..g.cin {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((c * g.kh + ky) * g.kw + kx) * plane;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let dst = &mut cols[row + oy * g.wo..row + (oy + 1) * g.wo];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &x[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates the column matrix back into an input sample.
fn col2im(g: &Geometry, cols: &[f64], dx: &mut [f64]) {
    let plane = g.out_plane();
    for c in 0..g.cin {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = ((c * g.kh + ky) * g.kw + kx) * plane;
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dx[base + ix as usize] += cols[row + oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Zero-padded 2-D cross-correlation. `weight` is `(Cout, Cin, kH, kW)`, `bias`
/// is `(1, Cout, 1, 1)`.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = Geometry::new(input, weight, stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [1, g.cout, 1, 1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d bias",
                left: weight.shape(),
                right: b.shape(),
            });
        }
    }
    let plane = g.out_plane();
    let mut out = Tensor::zeros([g.n, g.cout, g.ho, g.wo]);
    let mut cols = if g.pointwise() {
        Vec::new()
    } else {
        vec![0.0; g.patch() * plane]
    };
    let x = input.data();
    for ni in 0..g.n {
        let xs = &x[ni * g.in_sample()..(ni + 1) * g.in_sample()];
        let ys = &mut out.data_mut()[ni * g.cout * plane..(ni + 1) * g.cout * plane];
        if let Some(b) = bias {
            for (co, chunk) in ys.chunks_mut(plane).enumerate() {
                chunk.fill(b.data()[co]);
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        if g.pointwise() {
            gemm(g.cout, g.cin, plane, weight.data(), false, xs, false, ys, beta);
        } else {
            im2col(&g, xs, &mut cols);
            gemm(g.cout, g.patch(), plane, weight.data(), false, &cols, false, ys, beta);
        }
    }
    Ok(out)
}

pub(crate) struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

pub(crate) fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
    want: [bool; 3],
) -> Result<ConvGrads> {
    let g = Geometry::new(input, weight, stride, pad)?;
    let plane = g.out_plane();
    let [want_x, want_w, want_b] = want;
    let mut dx = want_x.then(|| Tensor::zeros(input.shape()));
    let mut dw = want_w.then(|| Tensor::zeros(weight.shape()));
    let mut db = want_b.then(|| Tensor::zeros([1, g.cout, 1, 1]));
    let mut cols = if g.pointwise() {
        Vec::new()
    } else {
        vec![0.0; g.patch() * plane]
    };
    let x = input.data();
    for ni in 0..g.n {
        let dys = &grad_out.data()[ni * g.cout * plane..(ni + 1) * g.cout * plane];
        if let Some(db) = db.as_mut() {
            for (co, chunk) in dys.chunks(plane).enumerate() {
                db.data_mut()[co] += chunk.iter().sum::<f64>();
            }
        }
        let xs = &x[ni * g.in_sample()..(ni + 1) * g.in_sample()];
        if let Some(dw) = dw.as_mut() {
            if g.pointwise() {
                gemm(g.cout, plane, g.cin, dys, false, xs, true, dw.data_mut(), 1.0);
            } else {
                im2col(&g, xs, &mut cols);
                gemm(g.cout, plane, g.patch(), dys, false, &cols, true, dw.data_mut(), 1.0);
            }
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx.data_mut()[ni * g.in_sample()..(ni + 1) * g.in_sample()];
            if g.pointwise() {
                gemm(g.cin, g.cout, plane, weight.data(), true, dys, false, dxs, 1.0);
            } else {
                gemm(g.patch(), g.cout, plane, weight.data(), true, dys, false, &mut cols, 0.0);
                col2im(&g, &cols, dxs);
            }
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}

/// Type-A autoregressive mask of shape `(cout, cin, k, k)`: ones strictly before the
/// kernel center in raster order, zeros at the center and after it.
pub fn type_a_mask(cout: usize, cin: usize, k: usize) -> Tensor {
    let center = k / 2;
    Tensor::from_fn([cout, cin, k, k], |_, _, y, x| {
        if y < center || (y == center && x < center) {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        let [n, cin, h, wd] = x.shape();
        let [cout, _, kh, kw] = w.shape();
        let ho = conv_output_dim(h, kh, stride, pad).unwrap();
        let wo = conv_output_dim(wd, kw, stride, pad).unwrap();
        Tensor::from_fn([n, cout, ho, wo], |ni, co, oy, ox| {
            let mut acc = b.data()[co];
            for ci in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                            acc += w.at(co, ci, ky, kx) * x.at(ni, ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::ones([1, 1, 3, 3]);
        let w = Tensor::ones([1, 1, 1, 1]);
        let b = Tensor::zeros([1, 1, 1, 1]);
        assert_eq!(conv2d(&x, &w, Some(&b), 1, 0).unwrap(), x);
    }

    #[test]
    fn output_dims() {
        let x = Tensor::zeros([1, 1, 4, 4]);
        let w = Tensor::zeros([1, 1, 3, 3]);
        assert_eq!(conv2d(&x, &w, None, 2, 1).unwrap().shape(), [1, 1, 2, 2]);
    }

    #[test]
    fn matches_naive_convolution() {
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (2, 0, 3), (1, 0, 1), (2, 0, 1), (1, 2, 5)] {
            let x = Tensor::from_fn([2, 3, 7, 6], |n, c, h, w| ((n * 31 + c * 7 + h * 3 + w) as f64 * 0.7).sin());
            let w = Tensor::from_fn([4, 3, k, k], |o, c, y, x| ((o * 13 + c * 5 + y * 2 + x) as f64 * 0.3).cos());
            let b = Tensor::from_fn([1, 4, 1, 1], |_, c, _, _| c as f64 * 0.1);
            let got = conv2d(&x, &w, Some(&b), stride, pad).unwrap();
            let want = naive(&x, &w, &b, stride, pad);
            assert!(got.max_abs_diff(&want).unwrap() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch_reports_both_shapes() {
        let x = Tensor::zeros([1, 2, 4, 4]);
        let w = Tensor::zeros([1, 3, 3, 3]);
        let err = conv2d(&x, &w, None, 1, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
    }

    #[test]
    fn mask_counts() {
        let m = type_a_mask(1, 1, 3);
        assert_eq!(m.sum(), 4.0);
        assert_eq!(type_a_mask(1, 1, 5).sum(), 12.0);
    }
}
