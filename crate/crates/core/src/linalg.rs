//! Thin wrappers over nalgebra decompositions with the conventions the rest
//! of the crate relies on (sorted spectra, sign-fixed QR).

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Thin QR of `a` (m×n, m ≥ n) with the diagonal of R made non-negative.
pub fn qr_sign_fixed(a: DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthonormal basis (d×(d−k)) of the complement of the span of the
/// orthonormal columns of `q` (d×k).
pub fn orthonormal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, k) = q.shape();
    let mut aug = DMatrix::zeros(d, k + d);
    aug.columns_mut(0, k).copy_from(q);
    aug.columns_mut(k, d).fill_with_identity();
    let full = aug.qr().q();
    full.columns(k, d - k).into_owned()
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Eigenvalues of a symmetric matrix, descending.
pub fn symmetric_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Subtracts the column means from every row.
pub fn center_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mean: DVector<f64> = m.row_sum().transpose() / n;
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= mean.transpose();
    }
    out
}

/// Number of singular values above `rel_tol * s_1`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let top = s.first().copied().unwrap_or(0.0);
    Ok(s.iter().filter(|&&v| v > rel_tol * top).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_completes_the_frame() {
        let q = qr_sign_fixed(DMatrix::from_fn(7, 3, |i, j| ((i * 5 + j * 3) % 7) as f64 - 2.5));
        let c = orthonormal_complement(&q);
        assert_eq!(c.shape(), (7, 4));
        let mut full = DMatrix::zeros(7, 7);
        full.columns_mut(0, 3).copy_from(&q);
        full.columns_mut(3, 4).copy_from(&c);
        assert!((full.transpose() * &full - DMatrix::<f64>::identity(7, 7)).amax() < 1e-12);
    }

    #[test]
    fn qr_has_positive_diagonal_and_orthonormal_columns() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -3.0, 0.5, 2.0, -1.0]);
        let q = qr_sign_fixed(a.clone());
        let qtq = q.transpose() * &q;
        assert!((qtq - DMatrix::identity(2, 2)).amax() < 1e-12);
        let r = q.transpose() * a;
        assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0);
    }

    #[test]
    fn singular_values_sorted() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        assert_eq!(singular_values(&m).unwrap(), vec![3.0, 1.0]);
    }

    #[test]
    fn rank_of_outer_product_is_one() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let v = DVector::from_vec(vec![1.0, -1.0]);
        assert_eq!(numerical_rank(&(u * v.transpose()), 1e-10).unwrap(), 1);
    }
}
