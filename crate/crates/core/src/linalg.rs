//! Dense complex subspace toolkit.
//!
//! Everything here is built on one singular value decomposition routine with a
//! fixed ordering rule (descending singular value, ties by the position the
//! decomposition emitted them in), so repeated calls on identical input agree
//! bit-for-bit. Matrices with zero rows or zero columns are legal and denote
//! the trivial subspace.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Thresholds that turn exact-arithmetic "with probability one" statements
/// into floating-point checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Relative singular-value cutoff, scaled by `sigma_max * max(rows, cols)`.
    pub rank_rel: f64,
    /// Absolute cutoff on residual norms and leakage ratios.
    pub leakage_abs: f64,
}

impl Tolerance {
    pub fn new(rank_rel: f64, leakage_abs: f64) -> Result<Self> {
        let ok = |x: f64| x > 0.0 && x < 1e-3;
        if !ok(rank_rel) || !ok(leakage_abs) {
            return Err(Error::InvalidConfig(format!(
                "tolerances must lie in (0, 1e-3), got rank_rel={rank_rel}, leakage_abs={leakage_abs}"
            )));
        }
        Ok(Self { rank_rel, leakage_abs })
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rank_rel: 1e-10,
            leakage_abs: 1e-8,
        }
    }
}

pub(crate) fn check_finite(a: &ComplexMatrix) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidMatrix)
    }
}

/// Singular value decomposition with descending singular values.
struct Decomposition {
    /// Length `min(rows, cols)`.
    sigma: Vec<f64>,
    /// Left singular vectors, `rows x rows`.
    u: ComplexMatrix,
    /// Right singular vectors, `cols x cols`; columns past `sigma.len()`
    /// belong to singular value zero.
    v: ComplexMatrix,
}

// nalgebra's complex SVD loses accuracy on rank-deficient input, which is the
// common case here, so the factorization is done by faer.
fn decompose(a: &ComplexMatrix) -> Result<Decomposition> {
    let (rows, cols) = a.shape();
    let m = faer::Mat::<faer::c64>::from_fn(rows, cols, |i, j| a[(i, j)]);
    let svd = m.svd().map_err(|_| Error::NoConvergence)?;
    let s = svd.S().column_vector();
    let sigma = (0..rows.min(cols)).map(|i| s[i].re).collect();
    let u = ComplexMatrix::from_fn(rows, rows, |i, j| svd.U()[(i, j)]);
    let v = ComplexMatrix::from_fn(cols, cols, |i, j| svd.V()[(i, j)]);
    Ok(Decomposition { sigma, u, v })
}

fn threshold(sigma_max: f64, rows: usize, cols: usize, tol: &Tolerance) -> f64 {
    tol.rank_rel * sigma_max * rows.max(cols) as f64
}

fn rank_of(sigma: &[f64], rows: usize, cols: usize, tol: &Tolerance) -> usize {
    let smax = sigma.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    let cut = threshold(smax, rows, cols, tol);
    sigma.iter().filter(|&&s| s > cut).count()
}

/// Number of singular values above `rank_rel * sigma_max * max(rows, cols)`.
pub fn numerical_rank(a: &ComplexMatrix, tol: &Tolerance) -> Result<usize> {
    check_finite(a)?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0);
    }
    let d = decompose(a)?;
    Ok(rank_of(&d.sigma, a.nrows(), a.ncols(), tol))
}

/// Orthonormal basis of the right nullspace, columns ordered by ascending
/// singular value.
pub fn nullspace_basis(a: &ComplexMatrix, tol: &Tolerance) -> Result<ComplexMatrix> {
    check_finite(a)?;
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    if rows == 0 {
        return Ok(ComplexMatrix::identity(cols, cols));
    }
    let d = decompose(a)?;
    let r = rank_of(&d.sigma, rows, cols, tol);
    let idx: Vec<usize> = (r..d.v.ncols()).rev().collect();
    Ok(ComplexMatrix::from_fn(cols, idx.len(), |i, j| d.v[(i, idx[j])]))
}

/// Orthonormal basis of the column space of `a`.
pub fn column_basis(a: &ComplexMatrix, tol: &Tolerance) -> Result<ComplexMatrix> {
    check_finite(a)?;
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(ComplexMatrix::zeros(rows, 0));
    }
    let d = decompose(a)?;
    let r = rank_of(&d.sigma, rows, cols, tol);
    Ok(d.u.columns(0, r).into_owned())
}

/// Column basis where the rank cutoff is measured against an external scale
/// rather than the largest singular value of `a` itself.
fn column_basis_scaled(a: &ComplexMatrix, scale: f64, tol: &Tolerance) -> Result<ComplexMatrix> {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 || scale <= 0.0 {
        return Ok(ComplexMatrix::zeros(rows, 0));
    }
    let d = decompose(a)?;
    let cut = threshold(scale, rows, cols, tol);
    let r = d.sigma.iter().filter(|&&s| s > cut).count();
    Ok(d.u.columns(0, r).into_owned())
}

fn largest_singular_value(a: &ComplexMatrix) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(decompose(a)?.sigma.first().copied().unwrap_or(0.0))
}

/// Horizontal concatenation. All blocks must share a row count.
pub fn hstack(blocks: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
    let Some(first) = blocks.first() else {
        return Ok(ComplexMatrix::zeros(0, 0));
    };
    let rows = first.nrows();
    if let Some(bad) = blocks.iter().find(|b| b.nrows() != rows) {
        return Err(Error::ShapeMismatch(format!(
            "expected {rows} rows, found {}",
            bad.nrows()
        )));
    }
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(*b);
        at += b.ncols();
    }
    Ok(out)
}

/// Matrix whose columns are the given vectors.
pub fn from_columns(rows: usize, cols: &[&ComplexVector]) -> Result<ComplexMatrix> {
    let mut out = ComplexMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        if c.len() != rows {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} in a {rows}-row stack",
                c.len()
            )));
        }
        out.set_column(j, c);
    }
    Ok(out)
}

/// Orthonormal basis of `span(A) ∩ span(B)`, obtained from the nullspace of
/// `[A, -B]`: each null vector `[x; y]` contributes `A x`.
pub fn intersection_basis(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    tol: &Tolerance,
) -> Result<ComplexMatrix> {
    check_finite(a)?;
    check_finite(b)?;
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "intersection of {}-row and {}-row spans",
            a.nrows(),
            b.nrows()
        )));
    }
    let n = a.nrows();
    if a.ncols() == 0 || b.ncols() == 0 || n == 0 {
        return Ok(ComplexMatrix::zeros(n, 0));
    }
    let neg_b = -b;
    let stacked = hstack(&[a, &neg_b])?;
    let null = nullspace_basis(&stacked, tol)?;
    if null.ncols() == 0 {
        return Ok(ComplexMatrix::zeros(n, 0));
    }
    let x = null.rows(0, a.ncols()).into_owned();
    let image = a * x;
    let scale = largest_singular_value(a)?.max(largest_singular_value(b)?);
    column_basis_scaled(&image, scale, tol)
}

/// Orthogonal projector onto the complement of `span(B)`, i.e. `I - Q Q^H`
/// with `Q` an orthonormal basis of `span(B)`.
pub fn complement_projector(b: &ComplexMatrix, tol: &Tolerance) -> Result<ComplexMatrix> {
    let n = b.nrows();
    let q = column_basis(b, tol)?;
    let mut p = ComplexMatrix::identity(n, n);
    if q.ncols() > 0 {
        p -= &q * q.adjoint();
    }
    Ok(p)
}

/// Dimension of the sum of the given subspaces.
pub fn union_span_dim(bases: &[&ComplexMatrix], tol: &Tolerance) -> Result<usize> {
    let stacked = hstack(bases)?;
    numerical_rank(&stacked, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian_matrix, trial_rng};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn gaussian(rows: usize, cols: usize, stream: u64) -> ComplexMatrix {
        complex_gaussian_matrix(&mut trial_rng(11, stream), rows, cols)
    }

    #[test]
    fn rank_identity_and_dependent_columns() {
        let tol = Tolerance::default();
        assert_eq!(numerical_rank(&ComplexMatrix::identity(4, 4), &tol).unwrap(), 4);
        let a = ComplexMatrix::from_row_slice(3, 2, &[c(1.0), c(2.0), c(-1.0), c(-2.0), c(0.5), c(1.0)]);
        assert_eq!(numerical_rank(&a, &tol).unwrap(), 1);
        assert_eq!(numerical_rank(&gaussian(5, 3, 0), &tol).unwrap(), 3);
    }

    #[test]
    fn rank_rejects_nan() {
        let mut a = ComplexMatrix::identity(2, 2);
        a[(0, 1)] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(numerical_rank(&a, &Tolerance::default()), Err(Error::InvalidMatrix));
    }

    #[test]
    fn nullspace_of_identity_is_empty() {
        let basis = nullspace_basis(&ComplexMatrix::identity(3, 3), &Tolerance::default()).unwrap();
        assert_eq!(basis.shape(), (3, 0));
    }

    #[test]
    fn nullspace_of_wide_random_matrix() {
        let tol = Tolerance::default();
        let a = gaussian(5, 6, 1);
        let basis = nullspace_basis(&a, &tol).unwrap();
        assert_eq!(basis.shape(), (6, 1));
        assert!((&a * &basis).norm() <= tol.leakage_abs * a.norm());
        assert!((basis.column(0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_subspaces_are_accurate() {
        let tol = Tolerance::default();
        for (rows, cols, rank) in [(3, 4, 2), (5, 3, 2), (6, 6, 3), (12, 10, 4), (4, 3, 2)] {
            for seed in 0..200 {
                let a = &gaussian(rows, rank, seed) * &gaussian(rank, cols, seed + 1000);
                assert_eq!(numerical_rank(&a, &tol).unwrap(), rank);
                let p = complement_projector(&a, &tol).unwrap();
                assert!((&p * &a).norm() <= tol.leakage_abs * a.norm(), "{rows}x{cols} seed {seed}");
                let null = nullspace_basis(&a, &tol).unwrap();
                assert_eq!(null.ncols(), cols - rank);
                assert!((&a * &null).norm() <= tol.leakage_abs * a.norm());
            }
        }
    }

    #[test]
    fn nullspace_is_deterministic() {
        let tol = Tolerance::default();
        let a = gaussian(4, 9, 2);
        assert_eq!(nullspace_basis(&a, &tol).unwrap(), nullspace_basis(&a, &tol).unwrap());
    }

    #[test]
    fn intersection_dimensions() {
        let tol = Tolerance::default();
        let a = gaussian(5, 2, 3);
        assert_eq!(intersection_basis(&a, &a, &tol).unwrap().ncols(), 2);
        let (x, y) = (gaussian(5, 3, 4), gaussian(5, 3, 5));
        let both = intersection_basis(&x, &y, &tol).unwrap();
        assert_eq!(both.ncols(), 1);
        // the intersection direction lies in both spans
        let px = complement_projector(&x, &tol).unwrap();
        let py = complement_projector(&y, &tol).unwrap();
        assert!((&px * &both).norm() < 1e-9);
        assert!((&py * &both).norm() < 1e-9);
        let (p, q) = (gaussian(5, 2, 6), gaussian(5, 2, 7));
        assert_eq!(intersection_basis(&p, &q, &tol).unwrap().shape(), (5, 0));
    }

    #[test]
    fn intersection_shape_mismatch() {
        let tol = Tolerance::default();
        let err = intersection_basis(&gaussian(4, 2, 0), &gaussian(5, 2, 1), &tol).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn projector_cases() {
        let tol = Tolerance::default();
        let empty = ComplexMatrix::zeros(4, 0);
        assert_eq!(complement_projector(&empty, &tol).unwrap(), ComplexMatrix::identity(4, 4));

        let b = gaussian(5, 4, 8);
        let p = complement_projector(&b, &tol).unwrap();
        assert_eq!(numerical_rank(&p, &tol).unwrap(), 1);
        assert!((&p * &b).norm() <= tol.leakage_abs);

        let e1 = ComplexMatrix::from_column_slice(3, 1, &[c(1.0), c(0.0), c(0.0)]);
        let p = complement_projector(&e1, &tol).unwrap();
        let expected = ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(0.0), c(1.0), c(1.0)]));
        assert!((p - expected).norm() < 1e-15);
    }

    #[test]
    fn projector_rank_deficient_input() {
        let tol = Tolerance::default();
        let v = gaussian(4, 1, 9);
        let b = hstack(&[&v, &(&v * c(3.0))]).unwrap();
        let p = complement_projector(&b, &tol).unwrap();
        assert_eq!(numerical_rank(&p, &tol).unwrap(), 3);
        assert!((&p * &b).norm() < 1e-12);
    }

    #[test]
    fn union_dims() {
        let tol = Tolerance::default();
        let mut a = ComplexMatrix::zeros(4, 2);
        a[(0, 0)] = c(1.0);
        a[(1, 1)] = c(1.0);
        let mut b = ComplexMatrix::zeros(4, 2);
        b[(2, 0)] = c(1.0);
        b[(3, 1)] = c(1.0);
        assert_eq!(union_span_dim(&[&a, &b], &tol).unwrap(), 4);
        assert_eq!(union_span_dim(&[&a, &a], &tol).unwrap(), 2);
        assert!(union_span_dim(&[&a, &gaussian(3, 1, 0)], &tol).is_err());
    }

    #[test]
    fn tolerance_bounds() {
        assert!(Tolerance::new(1e-10, 1e-8).is_ok());
        assert!(Tolerance::new(0.0, 1e-8).is_err());
        assert!(Tolerance::new(1e-10, 1e-2).is_err());
    }
}
