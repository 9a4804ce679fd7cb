//! Sample dumps: plain CSV points and binary PGM tile grids.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DumpFormat {
    /// One sample per line, comma separated; only for `d ≤ 3`.
    CsvPoints,
    /// P5 grid of `height × width` tiles.
    PgmGrid { height: usize, width: usize },
}

impl DumpFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DumpFormat::CsvPoints => "csv",
            DumpFormat::PgmGrid { .. } => "pgm",
        }
    }
}

/// Shortest round-tripping decimal form for every value.
pub fn csv_points(samples: &Tensor) -> Result<String> {
    let (n, d) = samples.as_matrix_dims("csv_points")?;
    if d > 3 {
        return Err(Error::Config(format!("csv-points needs d <= 3, got d = {d}")));
    }
    let mut out = String::with_capacity(n * d * 12);
    for row in samples.data().chunks(d) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to String");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_csv_points(text: &str) -> Result<Tensor> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput { op: "parse_csv_points" });
    }
    Tensor::from_rows(&rows)
}

/// Maps `[-1, 1]` to `0..=255` as `round((x + 1) · 127.5)`, clipping outside values.
pub fn to_pixel(x: f64) -> u8 {
    ((x + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Tiles samples into a `ceil(√n)`-column grid; unused tiles stay black.
pub fn pgm_grid(samples: &Tensor, height: usize, width: usize) -> Result<Vec<u8>> {
    let (n, d) = samples.as_matrix_dims("pgm_grid")?;
    if height == 0 || width == 0 || height * width != d {
        return Err(Error::Config(format!(
            "pgm-grid cannot reshape {d} values into {height}x{width} tiles"
        )));
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let grid_rows = n.div_ceil(cols);
    let (pw, ph) = (cols * width, grid_rows * height);
    let mut pixels = vec![0u8; pw * ph];
    for (i, sample) in samples.data().chunks(d).enumerate() {
        let (gy, gx) = (i / cols, i % cols);
        for y in 0..height {
            for x in 0..width {
                pixels[(gy * height + y) * pw + gx * width + x] = to_pixel(sample[y * width + x]);
            }
        }
    }
    let mut out = format!("P5\n{pw} {ph}\n255\n").into_bytes();
    out.extend(pixels);
    Ok(out)
}

/// Splits a P5 file into `(width, height, pixels)`.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("not a P5 file: {}", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Format(format!("PGM header: {e}")));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let data = &bytes[(pos + 1).min(bytes.len())..];
    if data.len() != w * h {
        return Err(Error::Format(format!(
            "PGM payload: expected {} bytes, got {}",
            w * h,
            data.len()
        )));
    }
    Ok((w, h, data.to_vec()))
}

pub fn dump_samples(path: &Path, samples: &Tensor, format: DumpFormat) -> Result<()> {
    let bytes = match format {
        DumpFormat::CsvPoints => csv_points(samples)?.into_bytes(),
        DumpFormat::PgmGrid { height, width } => pgm_grid(samples, height, width)?,
    };
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_values_map_to_pixel_range() {
        let s = Tensor::matrix(2, 4, vec![-1.0; 4].into_iter().chain(vec![1.0; 4]).collect()).unwrap();
        let (w, h, px) = parse_pgm(&pgm_grid(&s, 2, 2).unwrap()).unwrap();
        assert_eq!((w, h), (4, 2));
        assert_eq!(&px[0..2], &[0, 0]);
        assert_eq!(&px[2..4], &[255, 255]);
    }

    #[test]
    fn csv_rejects_high_dimension() {
        assert!(csv_points(&Tensor::zeros(&[2, 4])).is_err());
    }

    #[test]
    fn pgm_rejects_bad_shape() {
        assert!(pgm_grid(&Tensor::zeros(&[2, 5]), 2, 2).is_err());
    }
}
