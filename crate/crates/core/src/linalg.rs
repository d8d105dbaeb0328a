//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const EIGEN_CLIP: f64 = 1e-12;

/// Symmetric square root of a PSD matrix; eigenvalues below `EIGEN_CLIP` are set to zero.
pub fn psd_sqrt(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(c));
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
        return Err(Error::Invalid("covariance is not positive semidefinite".into()));
    }
    let roots = eig.eigenvalues.map(|v| if v <= EIGEN_CLIP { 0.0 } else { v.sqrt() });
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

pub fn symmetrize(c: &DMatrix<f64>) -> DMatrix<f64> {
    (c + c.transpose()) * 0.5
}

pub fn is_psd(c: &DMatrix<f64>, tol: f64) -> bool {
    if c.nrows() == 0 {
        return true;
    }
    let eig = SymmetricEigen::new(symmetrize(c));
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    eig.eigenvalues.iter().all(|&v| v >= -tol * scale)
}

/// Minimum-norm least-squares solution of `a x = b` and the residual norm.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    if a.ncols() == 0 {
        return (DVector::zeros(0), b.norm());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    let eps = (smax * 1e-12).max(1e-300);
    let x = svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()));
    let r = (a * &x - b).norm();
    (x, r)
}

/// Orthonormal basis of the kernel of `m` (rows are linear functionals on R^d).
pub fn kernel_basis(m: &DMatrix<f64>, d: usize) -> Vec<DVector<f64>> {
    if m.nrows() == 0 {
        return (0..d).map(|j| unit(d, j)).collect();
    }
    let gram = m.transpose() * m;
    let eig = SymmetricEigen::new(symmetrize(&gram));
    let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let tol = 1e-12 * top.max(1.0);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for (k, &v) in eig.eigenvalues.iter().enumerate() {
        if v.abs() <= tol {
            let mut col: DVector<f64> = eig.eigenvectors.column(k).into_owned();
            canonical_sign(&mut col);
            basis.push(col);
        }
    }
    basis
}

/// Flip so the first entry that is not negligible is positive.
pub fn canonical_sign(v: &mut DVector<f64>) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

pub fn unit(d: usize, j: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[j] = 1.0;
    e
}

/// Projector onto the orthogonal complement of the span of an orthonormal family.
pub fn complement_projector(basis: &[DVector<f64>], d: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(d, d);
    for v in basis {
        p -= v * v.transpose();
    }
    p
}
