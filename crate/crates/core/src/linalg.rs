//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `XᵀX` computed as a symmetric product.
pub fn gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = x.tr_mul(x);
    symmetrize(&mut g);
    g
}

/// Replace `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Ratio of extreme singular values; infinite for exactly singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive definite matrix, `None` if Cholesky fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut inv = m.clone().cholesky()?.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// `M^{-1/2}` for symmetric `M` via eigendecomposition. Fails when the smallest
/// eigenvalue is below `rel_floor · λ_max`.
pub fn sym_inv_sqrt(m: &DMatrix<f64>, rel_floor: f64) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.max();
    if !(lmax > 0.0) {
        return None;
    }
    let floor = rel_floor * lmax;
    if eig.eigenvalues.iter().any(|&l| !(l > floor)) {
        return None;
    }
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()),
    );
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&d) * q.transpose();
    symmetrize(&mut out);
    Some(out)
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().sum()
}

/// Largest eigenvalue of `XᵀX`, using whichever Gram matrix is smaller.
pub fn max_gram_eigenvalue(x: &DMatrix<f64>) -> f64 {
    if x.nrows() == 0 || x.ncols() == 0 {
        return 0.0;
    }
    let g = if x.nrows() < x.ncols() {
        let mut g = x * x.transpose();
        symmetrize(&mut g);
        g
    } else {
        gram(x)
    };
    SymmetricEigen::new(g).eigenvalues.max().max(0.0)
}

/// Rows of `m` picked by `idx`, in order.
pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

/// Columns of `m` picked by `idx`, in order.
pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}
