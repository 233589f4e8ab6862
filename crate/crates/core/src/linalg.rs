//! Thin helpers over nalgebra for the small dense systems used here.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalues (ascending) and matching orthonormal eigenvectors of a
/// symmetric matrix. The input is symmetrized first.
pub fn sym_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Reciprocal 2-norm condition number of a symmetric matrix,
/// `min |lambda| / max |lambda|`. Zero for the zero matrix.
pub fn rcond_sym(a: &DMatrix<f64>) -> f64 {
    let (values, _) = sym_eigen(a);
    rcond_from_spectrum(&values)
}

pub fn rcond_from_spectrum(values: &[f64]) -> f64 {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if max == 0.0 || !max.is_finite() {
        0.0
    } else {
        min / max
    }
}

/// Solves `a x = b` by column-pivoted QR. Returns `None` when `a` is exactly
/// rank deficient.
pub fn qr_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    a.clone().col_piv_qr().solve(b)
}

pub fn qr_solve_vec(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().col_piv_qr().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_rcond() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let (v, _) = sym_eigen(&a);
        assert_eq!(v, vec![1.0, 4.0]);
        assert!((rcond_sym(&a) - 0.25).abs() < 1e-15);
        assert_eq!(rcond_sym(&DMatrix::zeros(2, 2)), 0.0);
    }

    #[test]
    fn qr_solve_matches_known_solution() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![3.0, 5.0]);
        let x = qr_solve_vec(&a, &b).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }
}
