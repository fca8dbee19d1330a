//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetry tolerance for covariance-like inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues above this (negative) floor count as numerically zero.
pub const PSD_TOL: f64 = -1e-10;

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eigen(&symmetrize(m)).0[0]
}

/// Rebuilds `V diag(f(λ)) Vᵀ`, symmetrized.
fn spectral_map(values: &DVector<f64>, vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= f(values[k]);
    }
    symmetrize(&(scaled * vectors.transpose()))
}

/// Principal square root of a symmetric PSD matrix.
///
/// Eigenvalues down to `PSD_TOL` are clamped to zero; anything more negative
/// is rejected, as is a non-symmetric input.
pub fn sqrt_psd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(s)?;
    let asym = max_asymmetry(s);
    let scale = 1.0 + s.amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }
    let (values, vectors) = sym_eigen(&symmetrize(s));
    if let Some(&lo) = values.iter().next() {
        if lo < PSD_TOL * scale {
            return Err(Error::NotPsd { min_eigenvalue: lo });
        }
    }
    Ok(spectral_map(&values, &vectors, |v| v.max(0.0).sqrt()))
}

/// Square root and inverse square root of a symmetric positive definite matrix.
pub fn sqrt_and_inv_sqrt_pd(s: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_square(s)?;
    let (values, vectors) = sym_eigen(&symmetrize(s));
    if let Some(&lo) = values.iter().next() {
        if lo <= 0.0 || !lo.is_finite() {
            return Err(Error::SingularCovariance { min_eigenvalue: lo });
        }
    }
    Ok((
        spectral_map(&values, &vectors, f64::sqrt),
        spectral_map(&values, &vectors, |v| 1.0 / v.sqrt()),
    ))
}
