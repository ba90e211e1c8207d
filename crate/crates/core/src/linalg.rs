//! Small dense linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which a component matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(idx.len(), idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(m.nrows(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Symmetric square root of a positive semidefinite matrix; tiny negative
/// eigenvalues from rounding are clamped to zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d = DMatrix::from_diagonal(&vals.map(|v| v.max(0.0).sqrt()));
    &vecs * d * vecs.transpose()
}

/// Inverse of a symmetric positive definite matrix, refusing ill-conditioned
/// input.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(m);
    let n = vals.len();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let max = vals[n - 1];
    let min = vals[0];
    if !(max > 0.0) || !(min > 0.0) || max / min > MAX_CONDITION || !max.is_finite() {
        return Err(Error::SingularComponent(format!(
            "{what}: eigenvalue range [{min:e}, {max:e}]"
        )));
    }
    let d = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v));
    Ok(symmetrize(&(&vecs * d * vecs.transpose())))
}

/// Inverse of a general square matrix with a condition-number guard.
pub fn checked_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(Error::SingularComponent(format!(
            "{what}: singular values range [{min:e}, {max:e}]"
        )));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularComponent(what.to_string()))
}

/// Solve `a x = b` for symmetric positive definite `a`, via Cholesky with an
/// LU fallback.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

/// Numerical rank with relative tolerance on singular values.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Orthonormal basis (columns) of the null space of the `k x p` matrix `a`,
/// assumed to have full row rank.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, p) = a.shape();
    if k == 0 {
        return DMatrix::identity(p, p);
    }
    // Eigenvectors of A'A with zero eigenvalues span the null space.
    let ata = a.transpose() * a;
    let (_vals, vecs) = sym_eigen(&ata);
    // ascending order: the first p-k eigenvectors belong to the zero block
    vecs.columns(0, p - k).into_owned()
}

/// Minimum-norm solution of the underdetermined system `a x = c`.
pub fn min_norm_solution(a: &DMatrix<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let aat = a * a.transpose();
    let y = solve_spd(&aat, c)?;
    Some(a.transpose() * y)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
