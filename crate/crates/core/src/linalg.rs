//! Thin bridges between `Tensor` and nalgebra, plus the few dense routines
//! the projection and theory code share.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn to_dmatrix(t: &Tensor) -> Result<DMatrix<f64>> {
    let (r, c) = t.as_matrix_dims("to_dmatrix")?;
    Ok(DMatrix::from_row_slice(r, c, t.data()))
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Tensor {
    let (r, c) = m.shape();
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(m[(i, j)]);
        }
    }
    Tensor::matrix(r, c, data).expect("non-empty matrix")
}

/// Numerical rank from a column-pivoted QR: diagonal entries of R larger than
/// `rel_tol * |R₀₀|` count.
pub fn numeric_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let n = r.nrows().min(r.ncols());
    let lead = r[(0, 0)].abs();
    if lead == 0.0 {
        return 0;
    }
    (0..n).filter(|&i| r[(i, i)].abs() > rel_tol * lead).count()
}

/// Modified Gram–Schmidt with one re-orthogonalization pass over the rows of
/// `m`. Fails if any row is (numerically) in the span of the previous ones.
pub fn orthonormal_rows(m: &Tensor) -> Result<Tensor> {
    let (rows, cols) = m.as_matrix_dims("orthonormal_rows")?;
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut v = m.row(i).to_vec();
        let original = norm(&v);
        for _ in 0..2 {
            for u in &q {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vk, uk) in v.iter_mut().zip(u) {
                    *vk -= dot * uk;
                }
            }
        }
        let n = norm(&v);
        if original == 0.0 || n <= 1e-10 * original {
            return Err(Error::Rank {
                expected: rows,
                found: i,
            });
        }
        v.iter_mut().for_each(|x| *x /= n);
        q.push(v);
    }
    let data = q.into_iter().flatten().collect();
    Tensor::matrix(rows, cols, data)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Orthogonal projector onto the row space of `w` (m×d): `Wᵀ (W Wᵀ)⁻¹ W`.
pub fn row_space_projector(w: &Tensor) -> Result<DMatrix<f64>> {
    let wm = to_dmatrix(w)?;
    let gram = &wm * wm.transpose();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Rank {
            expected: wm.nrows(),
            found: numeric_rank(&wm, 1e-12),
        })?;
    Ok(wm.transpose() * inv * wm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_simple_matrices() {
        let m = DMatrix::from_row_slice(3, 3, &[1., 2., 3., 2., 4., 6., 0., 1., 1.]);
        assert_eq!(numeric_rank(&m, 1e-12), 2);
        assert_eq!(numeric_rank(&DMatrix::<f64>::identity(4, 4), 1e-12), 4);
    }

    #[test]
    fn gram_schmidt_detects_dependence() {
        let m = Tensor::matrix(2, 3, vec![1., 2., 3., 2., 4., 6.]).unwrap();
        assert!(matches!(orthonormal_rows(&m), Err(Error::Rank { .. })));
    }
}
