//! Small dense helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{cis, cplx, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Hermitian eigendecomposition with eigenvalues sorted ascending and the
/// eigenvector columns permuted to match.
pub fn hermitian_eigh<T: Real>(m: &CMatrix<T>) -> Result<(DVector<T>, CMatrix<T>)> {
    if !m.is_square() {
        return Err(Error::Eigen(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let eig = SymmetricEigen::try_new(m.clone(), T::default_epsilon(), 0).ok_or_else(|| {
        Error::Eigen(format!(
            "no convergence for {}x{} matrix with Frobenius norm {:.6e}",
            m.nrows(),
            m.ncols(),
            m.norm().as_f64()
        ))
    })?;
    Ok(sorted(eig.eigenvalues, eig.eigenvectors))
}

/// Real symmetric eigendecomposition, sorted ascending.
pub fn symmetric_eigh<T: Real>(m: &DMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    let eig = SymmetricEigen::try_new(m.clone(), T::default_epsilon(), 0)
        .ok_or_else(|| Error::Eigen(format!("no convergence for {}x{} real matrix", m.nrows(), m.ncols())))?;
    Ok(sorted(eig.eigenvalues, eig.eigenvectors))
}

fn sorted<T: Real, N: nalgebra::Scalar + Copy>(vals: DVector<T>, vecs: DMatrix<N>) -> (DVector<T>, DMatrix<N>) {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).expect("finite eigenvalues"));
    let vals = DVector::from_iterator(vals.len(), order.iter().map(|&i| vals[i]));
    let vecs = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, order[c])]);
    (vals, vecs)
}

/// `V diag(e^{-i lambda t}) V^dagger` from a stored eigensystem.
pub fn evolve_from_eigen<T: Real>(vals: &DVector<T>, vecs: &CMatrix<T>, t: T) -> CMatrix<T> {
    let mut scaled = vecs.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= cis(-vals[k] * t);
    }
    scaled * vecs.adjoint()
}

pub fn to_complex<T: Real>(m: &DMatrix<T>) -> CMatrix<T> {
    m.map(cplx)
}

pub fn identity<T: Real>(d: usize) -> CMatrix<T> {
    CMatrix::identity(d, d)
}

/// Largest singular value.
pub fn operator_norm<T: Real>(m: &CMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b))
}

/// `||U^dagger U - I||` in operator norm.
pub fn unitarity_defect<T: Real>(u: &CMatrix<T>) -> T {
    let d = u.ncols();
    operator_norm(&(u.adjoint() * u - identity::<T>(d)))
}

/// `||M - M^dagger||` in Frobenius norm.
pub fn hermiticity_defect<T: Real>(m: &CMatrix<T>) -> T {
    (m - m.adjoint()).norm()
}

pub fn is_diagonal<T: Real>(m: &CMatrix<T>) -> bool {
    let zero = Complex::new(T::zero(), T::zero());
    (0..m.nrows()).all(|r| (0..m.ncols()).all(|c| r == c || m[(r, c)] == zero))
}
