//! Dense two-phase simplex over exact rationals with Bland's rule.
//!
//! Problems are `maximize cᵀx subject to A x = b, x ≥ 0`. Phase one is solved
//! once per constraint set; [`FeasibleTableau::maximize`] then runs phase two
//! from that basis for any number of objectives.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rational(n: i64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub value: Rational,
    pub x: Vec<Rational>,
}

/// Tableau in canonical form for a feasible basis of the original variables.
#[derive(Clone, Debug)]
pub struct FeasibleTableau {
    /// `rows × (vars + 1)`, last column is the right-hand side.
    rows: Vec<Vec<Rational>>,
    basis: Vec<usize>,
    vars: usize,
}

fn pivot(rows: &mut [Vec<Rational>], obj: Option<&mut Vec<Rational>>, r: usize, c: usize) {
    let p = rows[r][c].clone();
    if !p.is_one() {
        for v in rows[r].iter_mut() {
            if !v.is_zero() {
                *v = &*v / &p;
            }
        }
    }
    let pivot_row = rows[r].clone();
    let eliminate = |row: &mut Vec<Rational>| {
        let f = row[c].clone();
        if f.is_zero() {
            return;
        }
        for (v, pv) in row.iter_mut().zip(&pivot_row) {
            if !pv.is_zero() {
                *v = &*v - &f * pv;
            }
        }
    };
    for (i, row) in rows.iter_mut().enumerate() {
        if i != r {
            eliminate(row);
        }
    }
    if let Some(o) = obj {
        eliminate(o);
    }
}

/// Runs simplex iterations on `rows` for the reduced-cost row `obj` (entries
/// are `−c_j` reduced; a negative entry means the objective can improve).
/// Only columns `< allowed` may enter. Returns `false` when unbounded.
fn optimize(rows: &mut [Vec<Rational>], obj: &mut Vec<Rational>, basis: &mut [usize], allowed: usize) -> bool {
    let rhs = obj.len() - 1;
    loop {
        let Some(enter) = (0..allowed).find(|&j| obj[j].is_negative()) else {
            return true;
        };
        let mut leave: Option<(usize, Rational)> = None;
        for (i, row) in rows.iter().enumerate() {
            if row[enter].is_positive() {
                let ratio = &row[rhs] / &row[enter];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((r, _)) = leave else {
            return false;
        };
        pivot(rows, Some(obj), r, enter);
        basis[r] = enter;
    }
}

impl FeasibleTableau {
    /// Phase one. Redundant equality rows are dropped; an infeasible system is
    /// an error.
    pub fn new(a: &[Vec<Rational>], b: &[Rational]) -> Result<Self> {
        let m = a.len();
        if m == 0 || b.len() != m {
            return Err(Error::Contract(format!("{m} constraint rows with {} right-hand sides", b.len())));
        }
        let n = a[0].len();
        if a.iter().any(|r| r.len() != n) {
            return Err(Error::Contract("ragged constraint matrix".into()));
        }
        let width = n + m + 1;
        let mut rows: Vec<Vec<Rational>> = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (row, bi))| {
                let flip = bi.is_negative();
                let mut t = Vec::with_capacity(width);
                t.extend(row.iter().map(|v| if flip { -v } else { v.clone() }));
                t.extend((0..m).map(|j| if j == i { rational(1) } else { rational(0) }));
                t.push(if flip { -bi } else { bi.clone() });
                t
            })
            .collect();
        let mut basis: Vec<usize> = (n..n + m).collect();
        // Minimize Σ artificials: reduced costs are −(column sums) over originals.
        let mut obj = vec![rational(0); width];
        for row in &rows {
            for j in 0..n {
                obj[j] -= &row[j];
            }
            obj[width - 1] -= &row[width - 1];
        }
        if !optimize(&mut rows, &mut obj, &mut basis, n) {
            return Err(Error::Internal("phase one reported unbounded".into()));
        }
        if !obj[width - 1].is_zero() {
            return Err(Error::Internal("linear program is infeasible".into()));
        }
        // Drive remaining zero-level artificials out of the basis.
        let mut i = 0;
        while i < rows.len() {
            if basis[i] >= n {
                match (0..n).find(|&j| !rows[i][j].is_zero()) {
                    Some(j) => {
                        pivot(&mut rows, None, i, j);
                        basis[i] = j;
                    }
                    None => {
                        rows.remove(i);
                        basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        let rows = rows
            .into_iter()
            .map(|mut r| {
                let rhs = r.pop().expect("rhs column");
                r.truncate(n);
                r.push(rhs);
                r
            })
            .collect();
        Ok(Self { rows, basis, vars: n })
    }

    pub fn constraint_rows(&self) -> usize {
        self.rows.len()
    }

    /// Phase two for `maximize cᵀx` from the stored feasible basis.
    pub fn maximize(&self, c: &[Rational]) -> Result<LpSolution> {
        let n = self.vars;
        if c.len() != n {
            return Err(Error::Contract(format!("objective has {} entries, expected {n}", c.len())));
        }
        let mut rows = self.rows.clone();
        let mut basis = self.basis.clone();
        let mut obj: Vec<Rational> = c.iter().map(|v| -v).collect();
        obj.push(rational(0));
        for (i, &bj) in basis.iter().enumerate() {
            let f = obj[bj].clone();
            if !f.is_zero() {
                for (o, v) in obj.iter_mut().zip(&rows[i]) {
                    *o = &*o - &f * v;
                }
            }
        }
        if !optimize(&mut rows, &mut obj, &mut basis, n) {
            return Err(Error::Internal("linear program is unbounded".into()));
        }
        let mut x = vec![rational(0); n];
        for (i, &bj) in basis.iter().enumerate() {
            x[bj] = rows[i][n].clone();
        }
        Ok(LpSolution { value: obj[n].clone(), x })
    }
}

/// `maximize cᵀx s.t. A x = b, x ≥ 0`.
pub fn solve_lp(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> Result<LpSolution> {
    FeasibleTableau::new(a, b)?.maximize(c)
}

/// Exact rank by Gaussian elimination over the rationals.
pub fn exact_rank(rows: &[Vec<Rational>]) -> usize {
    let mut m: Vec<Vec<Rational>> = rows.to_vec();
    let cols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..m.len()).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let pivot_row = m[rank].clone();
        for row in m.iter_mut().skip(rank + 1) {
            if row[c].is_zero() {
                continue;
            }
            let f = &row[c] / &pivot_row[c];
            for (v, pv) in row.iter_mut().zip(&pivot_row).skip(c) {
                if !pv.is_zero() {
                    *v = &*v - &f * pv;
                }
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}
