//! IDX3 unsigned-byte image files (the MNIST layout).
//!
//! Layout: magic `0x00000803`, then count, rows, cols as big-endian u32, then
//! `count · rows · cols` pixel bytes in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::Tensor;

pub const IDX3_MAGIC: u32 = 0x0000_0803;
const HEADER_LEN: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct IdxImageSet {
    count: usize,
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
}

impl IdxImageSet {
    pub fn new(count: usize, rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if count == 0 || rows == 0 || cols == 0 {
            return Err(Error::Format(format!("degenerate image set {count}x{rows}x{cols}")));
        }
        if pixels.len() != count * rows * cols {
            return Err(Error::Format(format!(
                "expected {} pixel bytes, got {}",
                count * rows * cols,
                pixels.len()
            )));
        }
        Ok(Self {
            count,
            rows,
            cols,
            pixels,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn image_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn raw(&self) -> &[u8] {
        &self.pixels
    }

    /// Pixel `p` as `2p/255 − 1`.
    pub fn value(&self, image: usize, index: usize) -> f64 {
        normalize(self.pixels[image * self.image_len() + index])
    }

    pub fn image(&self, i: usize) -> Vec<f64> {
        let n = self.image_len();
        self.pixels[i * n..(i + 1) * n].iter().map(|&p| normalize(p)).collect()
    }

    /// All images as a `count × (rows · cols)` tensor in `[-1, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.pixels.iter().map(|&p| normalize(p)).collect();
        Tensor::matrix(self.count, self.image_len(), data).expect("validated dimensions")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len());
        out.extend_from_slice(&IDX3_MAGIC.to_be_bytes());
        for v in [self.count, self.rows, self.cols] {
            out.extend_from_slice(&(v as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.pixels);
        out
    }
}

fn normalize(p: u8) -> f64 {
    2.0 * p as f64 / 255.0 - 1.0
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxImageSet> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated IDX header: expected {HEADER_LEN} bytes, got {}",
            bytes.len()
        )));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let magic = word(0);
    if magic != IDX3_MAGIC {
        return Err(Error::Format(format!(
            "bad IDX magic 0x{magic:08x}, expected 0x{IDX3_MAGIC:08x}"
        )));
    }
    let (count, rows, cols) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "truncated IDX payload: expected {expected} bytes, got {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "IDX payload has {} trailing bytes",
            payload.len() - expected
        )));
    }
    IdxImageSet::new(count, rows, cols, payload.to_vec())
}

pub fn read_idx(path: &Path) -> Result<IdxImageSet> {
    parse_idx(&std::fs::read(path)?)
}

pub fn write_idx(path: &Path, set: &IdxImageSet) -> Result<()> {
    write_atomic(path, &set.encode())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend([0, 255, 0, 255, 255, 0, 255, 0]);
        b
    }

    #[test]
    fn decodes_fixture() {
        let set = parse_idx(&fixture()).unwrap();
        assert_eq!((set.count(), set.rows(), set.cols()), (2, 2, 2));
        assert_eq!(set.image(0), vec![-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(set.image(1), vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut b = fixture();
        b[3] = 1;
        let err = parse_idx(&b).unwrap_err().to_string();
        assert!(err.contains("0x00000801"), "{err}");
    }

    #[test]
    fn truncation_reports_counts() {
        let b = fixture();
        let err = parse_idx(&b[..b.len() - 3]).unwrap_err().to_string();
        assert!(err.contains("expected 8") && err.contains("got 5"), "{err}");
    }
}
