//! Ring of Gaussian modes living in a random 2-plane of ℝ^d.
//!
//! Modes sit on the unit circle of the plane at angles `2πj/K` and carry
//! isotropic in-plane noise of standard deviation `sigma`. The plane is mapped
//! into ℝ^d by a seeded orthonormal `d × 2` matrix `U` (the identity when
//! `d = 2`) and the result is multiplied by `scale = 1 / ((1 + 4σ) maxᵢ‖Uᵢ‖)`,
//! which keeps every coordinate of anything within 4σ of the ring inside
//! `[-1, 1]`. Rare draws beyond that are clipped.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{rng, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedRing {
    num_modes: usize,
    sigma: f64,
    /// `d × 2`, orthonormal columns.
    embedding: Tensor,
    scale: f64,
    centers: Vec<Vec<f64>>,
}

impl EmbeddedRing {
    pub fn new(num_modes: usize, ambient_dim: usize, sigma: f64, embedding_seed: u64) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(Error::Config("embedded ring needs ambient dimension >= 2".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::Config("ring sigma must be positive".into()));
        }
        if num_modes == 0 {
            return Err(Error::Config("ring needs at least one mode".into()));
        }
        let d = ambient_dim;
        let embedding = if d == 2 {
            Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0])?
        } else {
            let mut r = rng(embedding_seed);
            let raw: Vec<f64> = (0..2 * d).map(|_| StandardNormal.sample(&mut r)).collect();
            // Orthonormalize the two d-vectors, then store them as columns.
            let rows = crate::linalg::orthonormal_rows(&Tensor::matrix(2, d, raw)?)?;
            rows.transpose()?
        };
        let max_row = (0..d)
            .map(|i| embedding.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let scale = 1.0 / ((1.0 + 4.0 * sigma) * max_row);
        let mut ring = Self {
            num_modes,
            sigma,
            embedding,
            scale,
            centers: Vec::new(),
        };
        ring.centers = ring
            .plane_centers()
            .iter()
            .map(|p| ring.embed(p[0], p[1]))
            .collect();
        Ok(ring)
    }

    /// Mode centers in plane coordinates, before embedding and scaling.
    pub fn plane_centers(&self) -> Vec<[f64; 2]> {
        (0..self.num_modes)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * j as f64 / self.num_modes as f64;
                [a.cos(), a.sin()]
            })
            .collect()
    }

    fn embed(&self, u: f64, v: f64) -> Vec<f64> {
        let d = self.ambient_dim();
        (0..d)
            .map(|i| self.scale * (self.embedding.get2(i, 0) * u + self.embedding.get2(i, 1) * v))
            .collect()
    }

    pub fn ambient_dim(&self) -> usize {
        self.embedding.rows()
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Mode standard deviation in ambient units (`sigma · scale`).
    pub fn effective_sigma(&self) -> f64 {
        self.sigma * self.scale
    }

    pub fn embedding(&self) -> &Tensor {
        &self.embedding
    }

    /// Mode centers in ambient coordinates.
    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn sample_with(&self, n: usize, r: &mut Rng) -> Result<Tensor> {
        if n == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        let d = self.ambient_dim();
        let centers = self.plane_centers();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let j = rand::Rng::random_range(r, 0..self.num_modes);
            let nu: f64 = StandardNormal.sample(r);
            let nv: f64 = StandardNormal.sample(r);
            let (u, v) = (centers[j][0] + self.sigma * nu, centers[j][1] + self.sigma * nv);
            data.extend(self.embed(u, v).into_iter().map(|x| x.clamp(-1.0, 1.0)));
        }
        Tensor::matrix(n, d, data)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Tensor> {
        self.sample_with(n, &mut rng(seed))
    }

    /// Maps ambient samples back to (unscaled) plane coordinates, `Uᵀx / scale`.
    pub fn plane_coordinates(&self, x: &Tensor) -> Result<Tensor> {
        let d = self.ambient_dim();
        if x.cols() != d {
            return Err(Error::dim("plane_coordinates", x.shape(), &[x.rows(), d]));
        }
        let mut out = Vec::with_capacity(x.rows() * 2);
        for row in x.data().chunks(d) {
            for c in 0..2 {
                let s: f64 = (0..d).map(|i| self.embedding.get2(i, c) * row[i]).sum();
                out.push(s / self.scale);
            }
        }
        Tensor::matrix(x.rows(), 2, out)
    }
}

/// One-shot sampler: `n` ring samples plus the ambient mode centers.
pub fn embedded_ring(
    num_modes: usize,
    ambient_dim: usize,
    sigma: f64,
    embedding_seed: u64,
    n: usize,
    sample_seed: u64,
) -> Result<(Tensor, Vec<Vec<f64>>)> {
    let ring = EmbeddedRing::new(num_modes, ambient_dim, sigma, embedding_seed)?;
    Ok((ring.sample(n, sample_seed)?, ring.centers().to_vec()))
}
