//! Per-iteration metrics, their CSV form, and window diagnostics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub generator_loss: f64,
    pub discriminator_loss_mean: f64,
    pub discriminator_losses: Vec<f64>,
    pub d_real_mean: f64,
    pub d_fake_mean: f64,
    pub generator_grad_norm: f64,
    /// Norm of discriminator k's share of the generator-output gradient.
    pub subspace_grad_norms: Vec<f64>,
    pub mode_coverage: Option<f64>,
}

pub fn metrics_header(k: usize) -> String {
    let mut h = String::from(
        "iteration,generator_loss,discriminator_loss_mean,d_real_mean,d_fake_mean,generator_grad_norm,mode_coverage",
    );
    for i in 0..k {
        write!(h, ",discriminator_loss_k{i}").expect("writing to String");
    }
    for i in 0..k {
        write!(h, ",subspace_grad_norm_k{i}").expect("writing to String");
    }
    h
}

impl MetricsRow {
    /// One CSV line without the trailing newline; an absent coverage is an empty field.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},",
            self.iteration,
            self.generator_loss,
            self.discriminator_loss_mean,
            self.d_real_mean,
            self.d_fake_mean,
            self.generator_grad_norm
        );
        if let Some(c) = self.mode_coverage {
            write!(s, "{c}").expect("writing to String");
        }
        for v in self.discriminator_losses.iter().chain(&self.subspace_grad_norms) {
            write!(s, ",{v}").expect("writing to String");
        }
        s
    }

    pub fn from_csv(line: &str, k: usize) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 7 + 2 * k {
            return Err(Error::Format(format!(
                "metrics row has {} fields, expected {}",
                fields.len(),
                7 + 2 * k
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("metrics field {s:?}: {e}")))
        };
        Ok(Self {
            iteration: fields[0]
                .parse()
                .map_err(|e| Error::Format(format!("iteration {:?}: {e}", fields[0])))?,
            generator_loss: num(fields[1])?,
            discriminator_loss_mean: num(fields[2])?,
            d_real_mean: num(fields[3])?,
            d_fake_mean: num(fields[4])?,
            generator_grad_norm: num(fields[5])?,
            mode_coverage: if fields[6].is_empty() { None } else { Some(num(fields[6])?) },
            discriminator_losses: fields[7..7 + k].iter().map(|s| num(s)).collect::<Result<_>>()?,
            subspace_grad_norms: fields[7 + k..].iter().map(|s| num(s)).collect::<Result<_>>()?,
        })
    }
}

/// Reads a metrics CSV written by the trainer.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyInput { op: "parse_metrics_csv" })?;
    let k = header.matches(",discriminator_loss_k").count();
    if header != metrics_header(k) {
        return Err(Error::Format(format!("unexpected metrics header {header:?}")));
    }
    lines.filter(|l| !l.is_empty()).map(|l| MetricsRow::from_csv(l, k)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaturationReport {
    pub window: usize,
    /// Fraction of rows with mean D(fake) below the threshold.
    pub saturated_fraction: f64,
    /// Least-squares slope of the generator gradient norm per iteration.
    pub grad_norm_slope: f64,
    pub median_grad_norm: f64,
    pub mean_subspace_grad_norms: Vec<f64>,
}

pub const MIN_DIAGNOSTIC_WINDOW: usize = 10;

pub fn saturation_diagnostics(rows: &[MetricsRow], threshold: f64) -> Result<SaturationReport> {
    let n = rows.len();
    if n < MIN_DIAGNOSTIC_WINDOW {
        return Err(Error::Contract(format!(
            "diagnostic window needs at least {MIN_DIAGNOSTIC_WINDOW} rows, got {n}"
        )));
    }
    let saturated = rows.iter().filter(|r| r.d_fake_mean < threshold).count();

    let xs: Vec<f64> = rows.iter().map(|r| r.iteration as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.generator_grad_norm).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    let k = rows[0].subspace_grad_norms.len();
    let mut subspace = vec![0.0; k];
    for r in rows {
        for (acc, v) in subspace.iter_mut().zip(&r.subspace_grad_norms) {
            *acc += v;
        }
    }
    subspace.iter_mut().for_each(|v| *v /= n as f64);

    Ok(SaturationReport {
        window: n,
        saturated_fraction: saturated as f64 / n as f64,
        grad_norm_slope: slope,
        median_grad_norm: median(&ys),
        mean_subspace_grad_norms: subspace,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fraction of `centers` with at least one sample within `radius`.
pub fn mode_coverage(samples: &Tensor, centers: &[Vec<f64>], radius: f64) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::EmptyInput { op: "mode_coverage" });
    }
    if !(radius > 0.0) {
        return Err(Error::Config(format!("coverage radius must be positive, got {radius}")));
    }
    let (_, d) = samples.as_matrix_dims("mode_coverage")?;
    if centers.iter().any(|c| c.len() != d) {
        return Err(Error::dim("mode_coverage", &[d], &[centers[0].len()]));
    }
    let r2 = radius * radius;
    let covered = centers
        .iter()
        .filter(|c| {
            samples
                .data()
                .chunks(d)
                .any(|s| s.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= r2)
        })
        .count();
    Ok(covered as f64 / centers.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize, fake: f64, grad: f64) -> MetricsRow {
        MetricsRow {
            iteration: i,
            generator_loss: 0.7,
            discriminator_loss_mean: 1.4,
            discriminator_losses: vec![1.4, 1.3],
            d_real_mean: 0.5,
            d_fake_mean: fake,
            generator_grad_norm: grad,
            subspace_grad_norms: vec![0.1, 0.2],
            mode_coverage: None,
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut r = row(3, 0.25, 1.5);
        r.mode_coverage = Some(0.875);
        let back = MetricsRow::from_csv(&r.to_csv(), 2).unwrap();
        assert_eq!(back, r);
        let text = format!("{}\n{}\n", metrics_header(2), row(4, 0.1, 0.3).to_csv());
        assert_eq!(parse_metrics_csv(&text).unwrap().len(), 1);
    }

    #[test]
    fn saturation_extremes() {
        let calm: Vec<_> = (0..10).map(|i| row(i, 0.5, 1.0)).collect();
        assert_eq!(saturation_diagnostics(&calm, 0.01).unwrap().saturated_fraction, 0.0);
        let sat: Vec<_> = (0..10).map(|i| row(i, 1e-7, 1.0)).collect();
        assert_eq!(saturation_diagnostics(&sat, 0.01).unwrap().saturated_fraction, 1.0);
        assert!(saturation_diagnostics(&sat[..9], 0.01).is_err());
    }

    #[test]
    fn slope_of_linear_trend() {
        let rows: Vec<_> = (0..20).map(|i| row(i, 0.5, 3.0 - 0.1 * i as f64)).collect();
        let rep = saturation_diagnostics(&rows, 0.01).unwrap();
        assert!((rep.grad_norm_slope + 0.1).abs() < 1e-12);
        assert!((rep.mean_subspace_grad_norms[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn coverage_counts() {
        let centers: Vec<Vec<f64>> = (0..8).map(|j| vec![j as f64, 0.0]).collect();
        let all = Tensor::from_rows(&centers).unwrap();
        assert_eq!(mode_coverage(&all, &centers, 0.1).unwrap(), 1.0);
        let one = Tensor::from_rows(&vec![vec![3.0, 0.0]; 20]).unwrap();
        assert_eq!(mode_coverage(&one, &centers, 0.1).unwrap(), 0.125);
    }
}
