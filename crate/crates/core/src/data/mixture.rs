//! Gaussian mixtures with possibly singular covariances.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::to_dmatrix;
use crate::rng::{rng, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
struct Component {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    /// `factor · factorᵀ = cov`, from the eigendecomposition.
    factor: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    components: Vec<Component>,
    dim: usize,
}

#[derive(Clone, Debug)]
pub struct MixtureSample {
    /// `n × d`.
    pub samples: Tensor,
    /// Component index of each sample.
    pub components: Vec<usize>,
}

impl GaussianMixture {
    /// Validates `Σ τ = 1`, `τ ≥ 0`, and that each covariance is symmetric
    /// positive semidefinite.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Tensor>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != covariances.len() {
            return Err(Error::Config(format!(
                "mixture needs matching non-empty weights/means/covariances, got {}/{}/{}",
                weights.len(),
                means.len(),
                covariances.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("mixture weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::Config("mixture dimension must be positive".into()));
        }
        let mut components = Vec::with_capacity(weights.len());
        for (mean, cov) in means.into_iter().zip(covariances) {
            if mean.len() != dim || cov.shape() != [dim, dim] {
                return Err(Error::dim("mixture component", &[dim, dim], cov.shape()));
            }
            let cov = to_dmatrix(&cov)?;
            let scale = cov.amax().max(1.0);
            if (&cov - cov.transpose()).amax() > 1e-12 * scale {
                return Err(Error::Config("covariance is not symmetric".into()));
            }
            let eig = cov.clone().symmetric_eigen();
            if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
                return Err(Error::Config("covariance is not positive semidefinite".into()));
            }
            let sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
            let factor = &eig.eigenvectors * sqrt;
            components.push(Component {
                mean: DVector::from_vec(mean),
                cov,
                factor,
            });
        }
        let cumulative = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            weights,
            cumulative,
            components,
            dim,
        })
    }

    /// Isotropic components `N(μ_j, σ_j² I)`.
    pub fn isotropic(weights: Vec<f64>, means: Vec<Vec<f64>>, sigmas: &[f64]) -> Result<Self> {
        let covs = means
            .iter()
            .zip(sigmas)
            .map(|(m, s)| {
                let d = m.len();
                let mut c = vec![0.0; d * d];
                for i in 0..d {
                    c[i * d + i] = s * s;
                }
                Tensor::matrix(d, d, c)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, means, covs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mean(&self, j: usize) -> &[f64] {
        self.components[j].mean.as_slice()
    }

    pub fn covariance(&self, j: usize) -> &DMatrix<f64> {
        &self.components[j].cov
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.components.iter().map(|c| c.mean.as_slice().to_vec()).collect()
    }

    pub fn sample_with(&self, n: usize, r: &mut Rng) -> Result<MixtureSample> {
        if n == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        let d = self.dim;
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        let mut z = DVector::zeros(d);
        for _ in 0..n {
            let u: f64 = r.random();
            let j = self
                .cumulative
                .iter()
                .position(|&c| u < c)
                .unwrap_or(self.weights.len() - 1);
            let comp = &self.components[j];
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(r);
            }
            let x = &comp.mean + &comp.factor * &z;
            data.extend(x.iter());
            labels.push(j);
        }
        Ok(MixtureSample {
            samples: Tensor::matrix(n, d, data)?,
            components: labels,
        })
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<MixtureSample> {
        self.sample_with(n, &mut rng(seed))
    }

    /// Mixture density at `x`. Requires every covariance to be positive definite.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        let mut p = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            p += w * self.component_density(j, x)?;
        }
        Ok(p)
    }

    pub fn component_density(&self, j: usize, x: &[f64]) -> Result<f64> {
        gaussian_log_density(&self.components[j].mean, &self.components[j].cov, x).map(f64::exp)
    }

    /// Distribution of `Wᵀx` for an `m × d` matrix `w` (rows are projection
    /// directions): components `N(Wᵀμ, WᵀΣW)` with the same weights.
    pub fn project(&self, w: &Tensor) -> Result<GaussianMixture> {
        let wm = to_dmatrix(w)?;
        if wm.ncols() != self.dim {
            return Err(Error::dim("mixture project", w.shape(), &[wm.nrows(), self.dim]));
        }
        let mut means = Vec::with_capacity(self.len());
        let mut covs = Vec::with_capacity(self.len());
        for c in &self.components {
            means.push((&wm * &c.mean).as_slice().to_vec());
            let pc = &wm * &c.cov * wm.transpose();
            let sym = (&pc + pc.transpose()) * 0.5;
            covs.push(crate::linalg::from_dmatrix(&sym));
        }
        GaussianMixture::new(self.weights.clone(), means, covs)
    }
}

/// `log N(x | mean, cov)` via Cholesky.
pub fn gaussian_log_density(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
    let d = mean.len();
    if x.len() != d {
        return Err(Error::dim("gaussian density", &[x.len()], &[d]));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain {
            op: "gaussian density",
            detail: "covariance is not positive definite".into(),
        })?;
    let diff = DVector::from_column_slice(x) - mean;
    let y = chol.l().solve_lower_triangular(&diff).expect("cholesky factor is invertible");
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (y.norm_squared() + log_det + d as f64 * (2.0 * std::f64::consts::PI).ln()))
}
