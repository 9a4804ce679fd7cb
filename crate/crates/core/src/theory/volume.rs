//! Support-volume growth under orthonormal projection: the determinant
//! inequality and Monte Carlo support fractions.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::data::GaussianMixture;
use crate::error::{Error, Result};
use crate::linalg::{from_dmatrix, orthonormal_rows, to_dmatrix};
use crate::rng::{derive_seed, rng, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeterminantCheck {
    pub det_projected: f64,
    pub det_full: f64,
    pub holds: bool,
}

/// `det(WᵀΣW)` against `det(Σ)` for `Σ` SPD with spectrum in `(0, 1]` (at least
/// one eigenvalue below 1) and `W` a `d × m` matrix with orthonormal columns.
pub fn determinant_inequality_check(sigma: &Tensor, w: &Tensor) -> Result<DeterminantCheck> {
    let s = to_dmatrix(sigma)?;
    let wm = to_dmatrix(w)?;
    let d = s.nrows();
    if s.ncols() != d || wm.nrows() != d {
        return Err(Error::Config(format!(
            "expected d×d covariance and d×m projection, got {:?} and {:?}",
            sigma.shape(),
            w.shape()
        )));
    }
    let scale = s.amax().max(1.0);
    if (&s - s.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Config("covariance is not symmetric".into()));
    }
    let eig = s.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo <= 0.0 {
        return Err(Error::Config(format!("covariance is not positive definite (min eigenvalue {lo})")));
    }
    if hi > 1.0 + 1e-12 {
        return Err(Error::Config(format!("covariance spectral norm {hi} exceeds 1")));
    }
    if hi >= 1.0 && lo >= 1.0 {
        return Err(Error::Config("covariance needs an eigenvalue below 1".into()));
    }
    let m = wm.ncols();
    let gram = wm.transpose() * &wm;
    if (gram - DMatrix::<f64>::identity(m, m)).amax() > 1e-10 {
        return Err(Error::Config("projection columns are not orthonormal".into()));
    }
    let det_projected = (wm.transpose() * &s * &wm).determinant();
    let det_full = eig.eigenvalues.iter().product();
    Ok(DeterminantCheck {
        det_projected,
        det_full,
        holds: det_projected > det_full,
    })
}

/// Random SPD `d × d` matrix with eigenvalues uniform in `(0, 1)` and a random
/// `d × m` orthonormal-column matrix.
pub fn random_determinant_instance(d: usize, m: usize, r: &mut Rng) -> Result<(Tensor, Tensor)> {
    if m == 0 || m > d {
        return Err(Error::Config(format!("need 1 <= m <= d, got m = {m}, d = {d}")));
    }
    let gauss = |r: &mut Rng, rows: usize, cols: usize| {
        let data: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(r)).collect();
        Tensor::matrix(rows, cols, data)
    };
    let q = to_dmatrix(&orthonormal_rows(&gauss(r, d, d)?)?)?;
    let lambda: Vec<f64> = (0..d).map(|_| 1.0 - r.random::<f64>()).map(|u| u.min(1.0 - 1e-9)).collect();
    let s = q.transpose() * DMatrix::from_diagonal(&DVector::from_vec(lambda)) * &q;
    let s = (&s + s.transpose()) * 0.5;
    let w = orthonormal_rows(&gauss(r, m, d)?)?.transpose()?;
    Ok((from_dmatrix(&s), w))
}

/// 99% two-sided normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioEstimate {
    pub hits: u64,
    pub samples: u64,
    pub fraction: f64,
    /// Wilson score interval at 99%.
    pub low: f64,
    pub high: f64,
}

impl RatioEstimate {
    pub fn new(hits: u64, samples: u64) -> Self {
        let n = samples as f64;
        let p = hits as f64 / n;
        let z2 = Z_99 * Z_99;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = Z_99 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
        Self {
            hits,
            samples,
            fraction: p,
            low: (center - half).max(0.0),
            high: (center + half).min(1.0),
        }
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.low <= other.high && other.low <= self.high
    }

    /// Strictly larger with disjoint intervals.
    pub fn exceeds(&self, other: &Self) -> bool {
        self.low > other.high
    }
}

#[derive(Clone, Debug)]
pub struct VolumeReport {
    pub ambient: RatioEstimate,
    pub projected: RatioEstimate,
    /// Per component `(ambient, projected)` with threshold `ε / τ_j`.
    pub components: Vec<(RatioEstimate, RatioEstimate)>,
    pub warning: Option<String>,
}

impl VolumeReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("quantity,hits,samples,fraction,ci_low,ci_high\n");
        let mut line = |name: &str, e: &RatioEstimate| {
            writeln!(s, "{name},{},{},{},{},{}", e.hits, e.samples, e.fraction, e.low, e.high)
                .expect("writing to String");
        };
        line("ambient", &self.ambient);
        line("projected", &self.projected);
        for (j, (a, p)) in self.components.iter().enumerate() {
            line(&format!("ambient_component_{j}"), a);
            line(&format!("projected_component_{j}"), p);
        }
        s
    }
}

/// Uniform point in the unit ball of ℝ^d: Gaussian direction, radius `U^{1/d}`.
pub fn uniform_in_ball(d: usize, r: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(r)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            let radius = r.random::<f64>().powf(1.0 / d as f64);
            return v.into_iter().map(|x| x * radius / norm).collect();
        }
    }
}

fn max_sigma(mix: &GaussianMixture) -> f64 {
    (0..mix.len())
        .map(|j| mix.covariance(j).symmetric_eigenvalues().max().max(0.0).sqrt())
        .fold(0.0, f64::max)
}

/// Gaussian with its Cholesky factor precomputed.
struct Prepared {
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl Prepared {
    fn new(mean: &[f64], cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let chol = cov.clone().cholesky().ok_or_else(|| Error::Domain {
            op: "support_volume_ratio",
            detail: "covariance is not positive definite".into(),
        })?;
        let chol_l = chol.l();
        let log_det: f64 = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean: DVector::from_column_slice(mean),
            chol_l,
            log_norm: -0.5 * (log_det + d as f64 * (2.0 * std::f64::consts::PI).ln()),
        })
    }

    fn density(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let y = self
            .chol_l
            .solve_lower_triangular(&diff)
            .expect("cholesky factor is invertible");
        (self.log_norm - 0.5 * y.norm_squared()).exp()
    }
}

struct Sampler {
    weights: Vec<f64>,
    components: Vec<Prepared>,
    thresholds: Vec<f64>,
}

impl Sampler {
    fn new(mix: &GaussianMixture, thresholds: Vec<f64>) -> Result<Self> {
        let components = (0..mix.len())
            .map(|j| Prepared::new(mix.mean(j), mix.covariance(j)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights: mix.weights().to_vec(),
            components,
            thresholds,
        })
    }

    /// Hits for the mixture at `eps` and for each component at `eps / τ_j`.
    fn count(&self, eps: f64, samples: u64, r: &mut Rng) -> (u64, Vec<u64>) {
        let d = self.components[0].mean.len();
        let k = self.components.len();
        let mut total = 0;
        let mut per = vec![0u64; k];
        let mut dens = vec![0.0; k];
        for _ in 0..samples {
            let u = DVector::from_vec(uniform_in_ball(d, r));
            let mut p = 0.0;
            for j in 0..k {
                dens[j] = self.components[j].density(&u);
                p += self.weights[j] * dens[j];
            }
            if p > eps {
                total += 1;
            }
            for j in 0..k {
                if dens[j] > self.thresholds[j] {
                    per[j] += 1;
                }
            }
        }
        (total, per)
    }
}

/// Fraction of the unit ball where the density exceeds `eps`, before and after
/// projecting with the orthonormalized `m × d` matrix `w`. Each mixture
/// component is also measured alone against `eps / τ_j`.
pub fn support_volume_ratio(
    mix: &GaussianMixture,
    w: &Tensor,
    eps: f64,
    mc_samples: u64,
    seed: u64,
) -> Result<VolumeReport> {
    if !(eps > 0.0) || mc_samples == 0 {
        return Err(Error::Config("eps and sample count must be positive".into()));
    }
    let (m, d) = w.as_matrix_dims("support_volume_ratio")?;
    if d != mix.dim() || m > d {
        return Err(Error::dim("support_volume_ratio", w.shape(), &[m, mix.dim()]));
    }
    for j in 0..mix.len() {
        let norm = mix.mean(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm >= 1.0 {
            return Err(Error::Config(format!("component {j} center lies outside the unit ball")));
        }
    }
    let sep = 6.0 * max_sigma(mix);
    for i in 0..mix.len() {
        for j in i + 1..mix.len() {
            let dist = mix
                .mean(i)
                .iter()
                .zip(mix.mean(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist <= sep {
                return Err(Error::Config(format!(
                    "components {i} and {j} are {dist} apart, need more than {sep}"
                )));
            }
        }
    }
    let q = orthonormal_rows(w)?;
    let projected = mix.project(&q)?;
    let thresholds: Vec<f64> = mix.weights().iter().map(|t| eps / t).collect();

    let peak = |mx: &GaussianMixture| -> Result<f64> {
        (0..mx.len())
            .map(|j| mx.density(mx.mean(j)))
            .try_fold(0.0, |acc: f64, v| v.map(|x| acc.max(x)))
    };
    let mut warning = None;
    for (name, mx) in [("ambient", mix), ("projected", &projected)] {
        let p = peak(mx)?;
        if eps >= p {
            warning = Some(format!("{name} density peak {p} does not exceed eps {eps}: support is empty"));
        }
    }

    let (a_total, a_per) =
        Sampler::new(mix, thresholds.clone())?.count(eps, mc_samples, &mut rng(derive_seed(seed, 0)));
    let (p_total, p_per) =
        Sampler::new(&projected, thresholds)?.count(eps, mc_samples, &mut rng(derive_seed(seed, 1)));
    Ok(VolumeReport {
        ambient: RatioEstimate::new(a_total, mc_samples),
        projected: RatioEstimate::new(p_total, mc_samples),
        components: a_per
            .into_iter()
            .zip(p_per)
            .map(|(a, p)| (RatioEstimate::new(a, mc_samples), RatioEstimate::new(p, mc_samples)))
            .collect(),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let s = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 0.25]).unwrap();
        let e1 = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
        let c = determinant_inequality_check(&s, &e1).unwrap();
        assert_eq!((c.det_projected, c.det_full, c.holds), (1.0, 0.25, true));
        let half = Tensor::matrix(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let u = Tensor::matrix(2, 1, vec![0.6, 0.8]).unwrap();
        let c = determinant_inequality_check(&half, &u).unwrap();
        assert!((c.det_projected - 0.5).abs() < 1e-15 && (c.det_full - 0.25).abs() < 1e-15);
    }

    #[test]
    fn preconditions_enforced() {
        let id = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let e1 = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
        assert!(determinant_inequality_check(&id, &e1).is_err());
        let big = Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 0.5]).unwrap();
        assert!(determinant_inequality_check(&big, &e1).is_err());
        let s = Tensor::matrix(2, 2, vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        let not_unit = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(determinant_inequality_check(&s, &not_unit).is_err());
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let e = RatioEstimate::new(30, 1000);
        assert!(e.low < 0.03 && 0.03 < e.high);
        let z = RatioEstimate::new(0, 1000);
        assert_eq!(z.low, 0.0);
        assert!(z.high > 0.0);
    }
}
