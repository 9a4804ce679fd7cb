//! Discrete distributions on finite grids, the optimal discriminator, and
//! marginal pushforwards under binned linear projections.

use std::f64::consts::LN_2;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    points: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

/// `γ^d` points with coordinates `−1 + 2i/(γ−1)` per axis (just `0` when
/// `γ = 1`), last axis varying fastest.
pub fn regular_grid(dim: usize, gamma: usize) -> Vec<Vec<f64>> {
    let coord = |i: usize| {
        if gamma == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (gamma - 1) as f64
        }
    };
    let total = gamma.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; dim];
            for a in (0..dim).rev() {
                p[a] = coord(idx % gamma);
                idx /= gamma;
            }
            p
        })
        .collect()
}

impl DiscreteDistribution {
    pub fn new(points: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput { op: "DiscreteDistribution" });
        }
        if points.len() != probs.len() {
            return Err(Error::dim("DiscreteDistribution", &[points.len()], &[probs.len()]));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::Config("grid points must share a positive dimension".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Config(format!("probabilities sum to {total}, not 1")));
        }
        let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
        sorted.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("grid points must be distinct".into()));
        }
        Ok(Self { points, probs })
    }

    pub fn on_grid(dim: usize, gamma: usize, probs: Vec<f64>) -> Result<Self> {
        Self::new(regular_grid(dim, gamma), probs)
    }

    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Random probabilities from normalized exponential draws; each point is
    /// zeroed with probability `sparsity` (at least one point keeps mass).
    pub fn random(points: Vec<Vec<f64>>, sparsity: f64, r: &mut Rng) -> Result<Self> {
        let n = points.len();
        let keep = r.random_range(0..n);
        let mut w: Vec<f64> = (0..n)
            .map(|i| {
                let e = -(1.0 - r.random::<f64>()).ln();
                if i != keep && r.random::<f64>() < sparsity {
                    0.0
                } else {
                    e.max(1e-300)
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        Self::new(points, w)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

fn require_shared(px: &DiscreteDistribution, pg: &DiscreteDistribution) -> Result<()> {
    if px.same_grid(pg) {
        Ok(())
    } else {
        Err(Error::Contract("distributions must share one grid".into()))
    }
}

/// `D*(y) = Px(y) / (Px(y) + Pg(y))`; `None` where both vanish.
pub fn optimal_discriminator(px: &DiscreteDistribution, pg: &DiscreteDistribution) -> Result<Vec<Option<f64>>> {
    require_shared(px, pg)?;
    Ok(px
        .probs
        .iter()
        .zip(&pg.probs)
        .map(|(&a, &b)| if a + b > 0.0 { Some(a / (a + b)) } else { None })
        .collect())
}

/// `x log y` with `0 log y = 0`.
fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `Σ Px log D + Σ Pg log(1 − D)` for a discriminator given per point.
/// Points where the weight is zero contribute nothing.
pub fn value(px: &DiscreteDistribution, pg: &DiscreteDistribution, d: &[f64]) -> Result<f64> {
    require_shared(px, pg)?;
    if d.len() != px.len() {
        return Err(Error::dim("value", &[px.len()], &[d.len()]));
    }
    Ok(px
        .probs
        .iter()
        .zip(&pg.probs)
        .zip(d)
        .map(|((&a, &b), &dv)| xlogy(a, dv) + xlogy(b, 1.0 - dv))
        .sum())
}

/// `KL(p ‖ q)` with `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| if a == 0.0 { 0.0 } else { a * (a / b).ln() })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueDecomposition {
    /// `V(D*, G)` by direct summation.
    pub value: f64,
    /// `KL(Px ‖ (Px + Pg)/2)`.
    pub kl_real: f64,
    /// `KL(Pg ‖ (Px + Pg)/2)`.
    pub kl_generated: f64,
    /// `value − (−2 log 2 + kl_real + kl_generated)`.
    pub identity_gap: f64,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-10;

/// Evaluates `V` at `D*` and the two KL terms independently, failing if the
/// identity `V = −2 log 2 + KL₁ + KL₂` is off by more than 1e-10.
pub fn value_decomposition(px: &DiscreteDistribution, pg: &DiscreteDistribution) -> Result<ValueDecomposition> {
    let dstar = optimal_discriminator(px, pg)?;
    let d: Vec<f64> = dstar.iter().map(|v| v.unwrap_or(0.5)).collect();
    let v = value(px, pg, &d)?;
    let mid: Vec<f64> = px.probs.iter().zip(&pg.probs).map(|(a, b)| 0.5 * (a + b)).collect();
    let kl_real = kl_divergence(&px.probs, &mid);
    let kl_generated = kl_divergence(&pg.probs, &mid);
    let gap = v - (-2.0 * LN_2 + kl_real + kl_generated);
    if gap.abs() > IDENTITY_TOLERANCE {
        return Err(Error::Internal(format!("value identity violated by {gap:e}")));
    }
    Ok(ValueDecomposition {
        value: v,
        kl_real,
        kl_generated,
        identity_gap: gap,
    })
}

/// Uniform binning of `W x` over the projected range of a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct Binning {
    /// Per projected axis: `(low, high, bins)`; a degenerate axis has one bin.
    axes: Vec<(f64, f64, usize)>,
}

impl Binning {
    /// `w` is `m × d` (rows are projection directions).
    pub fn fit(w: &Tensor, points: &[Vec<f64>], bins: usize) -> Result<(Self, Vec<Vec<f64>>)> {
        if bins == 0 {
            return Err(Error::Config("bins must be >= 1".into()));
        }
        let (m, d) = w.as_matrix_dims("binning")?;
        if points.is_empty() {
            return Err(Error::EmptyInput { op: "binning" });
        }
        if points[0].len() != d {
            return Err(Error::dim("binning", w.shape(), &[points[0].len()]));
        }
        let projected: Vec<Vec<f64>> = points
            .iter()
            .map(|p| (0..m).map(|i| w.row(i).iter().zip(p).map(|(a, b)| a * b).sum()).collect())
            .collect();
        let axes = (0..m)
            .map(|a| {
                let lo = projected.iter().map(|v| v[a]).fold(f64::INFINITY, f64::min);
                let hi = projected.iter().map(|v| v[a]).fold(f64::NEG_INFINITY, f64::max);
                let scale = lo.abs().max(hi.abs()).max(1.0);
                let n = if hi - lo <= 1e-12 * scale { 1 } else { bins };
                (lo, hi, n)
            })
            .collect();
        Ok((Self { axes }, projected))
    }

    pub fn bin_count(&self) -> usize {
        self.axes.iter().map(|a| a.2).product()
    }

    /// Flat bin index, last axis fastest; the top edge belongs to the last bin.
    pub fn index(&self, y: &[f64]) -> usize {
        let mut idx = 0;
        for (&(lo, hi, n), &v) in self.axes.iter().zip(y) {
            let b = if n == 1 {
                0
            } else {
                (((v - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
            };
            idx = idx * n + b;
        }
        idx
    }

    /// Bin centers in flat-index order.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        let total = self.bin_count();
        (0..total)
            .map(|mut idx| {
                let mut c = vec![0.0; self.axes.len()];
                for (a, &(lo, hi, n)) in self.axes.iter().enumerate().rev() {
                    let b = idx % n;
                    idx /= n;
                    c[a] = if n == 1 {
                        lo
                    } else {
                        lo + (b as f64 + 0.5) * (hi - lo) / n as f64
                    };
                }
                c
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub distribution: DiscreteDistribution,
    /// Bin index of each source grid point.
    pub assignment: Vec<usize>,
}

/// Pushforward of `p` under `x ↦ W x` with `bins` uniform bins per projected
/// axis over the projected range of the grid.
pub fn marginalize(p: &DiscreteDistribution, w: &Tensor, bins: usize) -> Result<Marginal> {
    let (binning, projected) = Binning::fit(w, p.points(), bins)?;
    let assignment: Vec<usize> = projected.iter().map(|y| binning.index(y)).collect();
    let mut probs = vec![0.0; binning.bin_count()];
    for (&b, &pr) in assignment.iter().zip(p.probs()) {
        probs[b] += pr;
    }
    let total: f64 = probs.iter().sum();
    // Re-normalize away accumulated rounding so the result validates.
    probs.iter_mut().for_each(|v| *v /= total);
    Ok(Marginal {
        distribution: DiscreteDistribution::new(binning.centers(), probs)?,
        assignment,
    })
}

/// `Σ_k V_k(D_k*, G)` over the binned marginals of each projection.
pub fn projected_value(
    px: &DiscreteDistribution,
    pg: &DiscreteDistribution,
    projections: &[Tensor],
    bins: usize,
) -> Result<f64> {
    require_shared(px, pg)?;
    let mut total = 0.0;
    for w in projections {
        let mx = marginalize(px, w, bins)?.distribution;
        let mg = marginalize(pg, w, bins)?.distribution;
        total += value_decomposition(&mx, &mg)?.value;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_layout() {
        let g = regular_grid(2, 2);
        assert_eq!(g, vec![vec![-1.0, -1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![1.0, 1.0]]);
        assert_eq!(regular_grid(3, 4).len(), 64);
    }

    #[test]
    fn optimal_discriminator_direct_formula() {
        let pts = regular_grid(1, 2);
        let px = DiscreteDistribution::new(pts.clone(), vec![0.75, 0.25]).unwrap();
        let pg = DiscreteDistribution::new(pts, vec![0.25, 0.75]).unwrap();
        let d = optimal_discriminator(&px, &pg).unwrap();
        assert_eq!(d, vec![Some(0.75), Some(0.25)]);
    }

    #[test]
    fn disjoint_supports() {
        let pts = regular_grid(1, 2);
        let px = DiscreteDistribution::new(pts.clone(), vec![1.0, 0.0]).unwrap();
        let pg = DiscreteDistribution::new(pts, vec![0.0, 1.0]).unwrap();
        let v = value_decomposition(&px, &pg).unwrap();
        assert!(v.value.abs() < 1e-15);
        assert!((v.kl_real - LN_2).abs() < 1e-15 && (v.kl_generated - LN_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_distributions() {
        let pts = regular_grid(1, 2);
        assert!(DiscreteDistribution::new(pts.clone(), vec![0.5, 0.4]).is_err());
        assert!(DiscreteDistribution::new(pts, vec![1.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(vec![vec![0.0], vec![0.0]], vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn degenerate_projection_single_bin() {
        let p = DiscreteDistribution::uniform(regular_grid(2, 2)).unwrap();
        let w = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let m = marginalize(&p, &w, 3).unwrap();
        assert_eq!(m.distribution.probs(), &[1.0]);
    }
}
