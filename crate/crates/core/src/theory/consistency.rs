//! Whether matched binned marginals force matched joints on a grid: the 0/1
//! constraint matrix, its exact rank, and the largest single-cell residual
//! `|Px(x₀) − Pg(x₀)|` compatible with every marginal agreeing.

use std::fmt::Write as _;

use num_traits::Zero;

use super::discrete::Binning;
use super::simplex::{rational, rational_to_f64, exact_rank, FeasibleTableau, Rational};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMatrix {
    /// Row-major 0/1 entries, one row per (projection, bin).
    entries: Vec<Vec<u8>>,
    /// `(projection index, bin index)` per row.
    meta: Vec<(usize, usize)>,
    columns: usize,
    projections: usize,
    rank: usize,
}

impl ConstraintMatrix {
    pub fn rows(&self) -> &[Vec<u8>] {
        &self.entries
    }

    pub fn row_meta(&self) -> &[(usize, usize)] {
        &self.meta
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn projections(&self) -> usize {
        self.projections
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.columns
    }

    pub fn column_sums(&self) -> Vec<usize> {
        (0..self.columns)
            .map(|j| self.entries.iter().map(|r| r[j] as usize).sum())
            .collect()
    }
}

/// Stacks one indicator row per projected bin for every projection. `A[(k,b), j] = 1`
/// iff grid point `j` falls in bin `b` of projection `k`.
pub fn build_constraint_matrix(projections: &[Tensor], points: &[Vec<f64>], bins: usize) -> Result<ConstraintMatrix> {
    if projections.is_empty() {
        return Err(Error::EmptyInput { op: "build_constraint_matrix" });
    }
    let n = points.len();
    let mut entries = Vec::new();
    let mut meta = Vec::new();
    for (k, w) in projections.iter().enumerate() {
        let (binning, projected) = Binning::fit(w, points, bins)?;
        let start = entries.len();
        entries.extend((0..binning.bin_count()).map(|_| vec![0u8; n]));
        meta.extend((0..binning.bin_count()).map(|b| (k, b)));
        for (j, y) in projected.iter().enumerate() {
            entries[start + binning.index(y)][j] = 1;
        }
    }
    let rational_rows: Vec<Vec<Rational>> = entries
        .iter()
        .map(|r| r.iter().map(|&v| rational(v as i64)).collect())
        .collect();
    let rank = exact_rank(&rational_rows);
    Ok(ConstraintMatrix {
        entries,
        meta,
        columns: n,
        projections: projections.len(),
        rank,
    })
}

#[derive(Clone, Debug)]
pub struct ResidualEntry {
    /// Number of projections in the constraint set.
    pub k: usize,
    pub max_residual: Rational,
    /// Cell attaining the maximum.
    pub argmax: usize,
    pub rank: usize,
    pub columns: usize,
    /// Finite-difference Lipschitz constant of the maximizing residual over
    /// neighbouring grid cells.
    pub lipschitz: f64,
    /// `B · L_R / K^{1/(d−m)}` with `B` the largest point norm.
    pub bound_term: f64,
    /// Maximizing pair `(Px, Pg)`.
    pub witness: (Vec<f64>, Vec<f64>),
}

impl ResidualEntry {
    pub fn max_residual_f64(&self) -> f64 {
        rational_to_f64(&self.max_residual)
    }

    pub fn is_zero(&self) -> bool {
        self.max_residual.is_zero()
    }

    pub fn full_rank(&self) -> bool {
        self.rank == self.columns
    }
}

fn neighbour_lipschitz(points: &[Vec<f64>], r: &[f64]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n = points.len();
    let mut spacing = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            spacing = spacing.min(dist(&points[i], &points[j]));
        }
    }
    let mut l: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(&points[i], &points[j]);
            if d <= spacing * (1.0 + 1e-9) {
                l = l.max((r[i] - r[j]).abs() / d);
            }
        }
    }
    l
}

/// Largest `Px(x₀) − Pg(x₀)` over cells `x₀`, subject to `A Px = A Pg` and both
/// being distributions on `points`. By the `Px ↔ Pg` symmetry this is also the
/// largest `|R(x₀)|`.
pub fn max_residual(projections: &[Tensor], points: &[Vec<f64>], bins: usize) -> Result<ResidualEntry> {
    let a = build_constraint_matrix(projections, points, bins)?;
    let n = points.len();
    let mut rows: Vec<Vec<Rational>> = Vec::new();
    let mut rhs = Vec::new();
    for r in a.rows().iter().filter(|r| r.iter().any(|&v| v != 0)) {
        let mut row = Vec::with_capacity(2 * n);
        row.extend(r.iter().map(|&v| rational(v as i64)));
        row.extend(r.iter().map(|&v| rational(-(v as i64))));
        rows.push(row);
        rhs.push(rational(0));
    }
    for half in 0..2 {
        rows.push((0..2 * n).map(|j| rational((j / n == half) as i64)).collect());
        rhs.push(rational(1));
    }
    let tableau = FeasibleTableau::new(&rows, &rhs)?;

    let mut best: Option<(usize, super::simplex::LpSolution)> = None;
    for cell in 0..n {
        let mut c = vec![rational(0); 2 * n];
        c[cell] = rational(1);
        c[n + cell] = rational(-1);
        let sol = tableau.maximize(&c)?;
        if best.as_ref().is_none_or(|(_, b)| sol.value > b.value) {
            best = Some((cell, sol));
        }
    }
    let (argmax, sol) = best.expect("at least one cell");
    let px: Vec<f64> = sol.x[..n].iter().map(rational_to_f64).collect();
    let pg: Vec<f64> = sol.x[n..].iter().map(rational_to_f64).collect();
    let residual: Vec<f64> = px.iter().zip(&pg).map(|(a, b)| a - b).collect();
    let lipschitz = neighbour_lipschitz(points, &residual);
    let d = points[0].len();
    let m = projections[0].rows();
    let radius = points
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let bound_term = if d > m {
        radius * lipschitz / (projections.len() as f64).powf(1.0 / (d - m) as f64)
    } else {
        0.0
    };
    Ok(ResidualEntry {
        k: projections.len(),
        max_residual: sol.value,
        argmax,
        rank: a.rank(),
        columns: n,
        lipschitz,
        bound_term,
        witness: (px, pg),
    })
}

#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub entries: Vec<ResidualEntry>,
}

impl ResidualReport {
    /// `max_residual` for the nested prefixes `projections[..k]`, `k = 1..=K`.
    pub fn nested(projections: &[Tensor], points: &[Vec<f64>], bins: usize) -> Result<Self> {
        let entries = (1..=projections.len())
            .map(|k| max_residual(&projections[..k], points, bins))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn is_non_increasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].max_residual <= w[0].max_residual)
    }

    /// `rank = γ^d ⟺ residual = 0` on every entry.
    pub fn rank_matches_uniqueness(&self) -> bool {
        self.entries.iter().all(|e| e.full_rank() == e.is_zero())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,max_residual,bound_term,rank,columns,lipschitz\n");
        for e in &self.entries {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                e.k,
                e.max_residual_f64(),
                e.bound_term,
                e.rank,
                e.columns,
                e.lipschitz
            )
            .expect("writing to String");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::super::discrete::regular_grid;
    use super::*;

    fn axes() -> Vec<Tensor> {
        vec![
            Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap(),
            Tensor::matrix(1, 2, vec![0.0, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn axis_marginals_leave_half_unresolved() {
        let e = max_residual(&axes(), &regular_grid(2, 2), 2).unwrap();
        assert_eq!(e.max_residual, Rational::new(1.into(), 2.into()));
        assert_eq!(e.rank, 3);
    }

    #[test]
    fn diagonal_view_completes_rank() {
        let mut p = axes();
        p.push(Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        let e = max_residual(&p, &regular_grid(2, 2), 2).unwrap();
        assert_eq!(e.rank, 4);
        assert!(e.is_zero());
    }
}
