//! Binary PPM (P6, maxval 255) images and conversions to `(1, 3, H, W)` tensors in `[0, 1]`.

use std::path::Path;

use gmc_tensor::Tensor;

use crate::error::{CodecError, Result};
use crate::io::write_atomic;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(CodecError::Input(format!(
                "{} bytes for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(RgbImage { width, height, data })
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn to_tensor(&self) -> Tensor {
        let (w, h) = (self.width, self.height);
        Tensor::from_fn([1, 3, h, w], |_, c, y, x| self.data[(y * w + x) * 3 + c] as f64 / 255.0)
    }

    /// Quantizes a `(1, 3, H, W)` tensor: clamp to `[0, 1]`, scale, round.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [n, c, h, w] = t.shape();
        if n != 1 || c != 3 {
            return Err(CodecError::Input(format!("expected a 1x3xHxW tensor, got {:?}", t.shape())));
        }
        let mut data = vec![0u8; h * w * 3];
        for ch in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    data[(y * w + x) * 3 + ch] = (t.at(0, ch, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
        RgbImage::new(w, h, data)
    }
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(CodecError::Input("PPM header ended early".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CodecError::Input(format!("bad PPM header field at byte {start}")))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage> {
    if bytes.get(..2) != Some(b"P6") {
        return Err(CodecError::Input("not a binary PPM (P6) file".into()));
    }
    let mut pos = 2;
    let width = header_token(bytes, &mut pos)?;
    let height = header_token(bytes, &mut pos)?;
    let maxval = header_token(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(CodecError::Input(format!("unsupported PPM maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(CodecError::Input("empty PPM image".into()));
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(CodecError::Input("PPM header not terminated by whitespace".into()));
    }
    pos += 1;
    let need = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| CodecError::Input("PPM dimensions overflow".into()))?;
    let data = bytes
        .get(pos..pos + need)
        .ok_or_else(|| CodecError::Input(format!("PPM pixel data truncated: need {need} bytes")))?;
    RgbImage::new(width, height, data.to_vec())
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    decode_ppm(&std::fs::read(path)?)
}

pub fn write_ppm(path: &Path, img: &RgbImage) -> Result<()> {
    write_atomic(path, &encode_ppm(img))?;
    Ok(())
}

/// Pads height and width up to a multiple of `multiple` by repeating the last row/column.
pub fn pad_replicate(t: &Tensor, multiple: usize) -> Tensor {
    let [n, c, h, w] = t.shape();
    let ph = h.div_ceil(multiple) * multiple;
    let pw = w.div_ceil(multiple) * multiple;
    if (ph, pw) == (h, w) {
        return t.clone();
    }
    Tensor::from_fn([n, c, ph, pw], |ni, ci, y, x| t.at(ni, ci, y.min(h - 1), x.min(w - 1)))
}

/// Top-left `height × width` window.
pub fn crop(t: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let [n, c, h, w] = t.shape();
    if height > h || width > w {
        return Err(CodecError::Input(format!("cannot crop {h}x{w} to {height}x{width}")));
    }
    Ok(Tensor::from_fn([n, c, height, width], |ni, ci, y, x| t.at(ni, ci, y, x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_with_comment() {
        let img = RgbImage::new(3, 2, (0..18).map(|v| v * 14).collect()).unwrap();
        let bytes = encode_ppm(&img);
        assert_eq!(decode_ppm(&bytes).unwrap(), img);
        let mut commented = b"P6 # made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(&img.data);
        assert_eq!(decode_ppm(&commented).unwrap(), img);
    }

    #[test]
    fn rejects_bad_ppm() {
        assert!(decode_ppm(b"P3\n1 1\n255\n123").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\n123").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n123456").is_err());
    }

    #[test]
    fn tensor_conversion_is_exact_on_8bit() {
        let img = RgbImage::new(4, 3, (0..36).map(|v| (v * 7 % 256) as u8).collect()).unwrap();
        assert_eq!(RgbImage::from_tensor(&img.to_tensor()).unwrap(), img);
    }

    #[test]
    fn pad_then_crop() {
        let t = Tensor::from_fn([1, 3, 5, 6], |_, c, y, x| (c * 100 + y * 10 + x) as f64);
        let p = pad_replicate(&t, 4);
        assert_eq!(p.shape(), [1, 3, 8, 8]);
        assert_eq!(p.at(0, 1, 7, 7), t.at(0, 1, 4, 5));
        assert_eq!(p.at(0, 2, 2, 7), t.at(0, 2, 2, 5));
        assert_eq!(crop(&p, 5, 6).unwrap(), t);
    }
}
