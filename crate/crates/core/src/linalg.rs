//! Dense real/complex matrix kernel.
//!
//! Thin layer over `nalgebra` for the handful of factorizations the rest of
//! the crate needs: Kronecker products, rank-revealing kernels, spectra,
//! definiteness tests and the Lyapunov-matrix completion used between the two
//! synthesis stages.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e} > tol {tol:e})")]
    Asymmetric { asymmetry: f64, tol: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("controller order n_c = {n_c} is below plant order n = {n}")]
    OrderTooSmall { n: usize, n_c: usize },
    #[error("coupling condition [X I; I Y] >= 0 violated (min eigenvalue {min_eig:e})")]
    CouplingViolated { min_eig: f64 },
    #[error("X - Y^-1 has eigenvalue {min_eig:e} below -tol")]
    NegativeGap { min_eig: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// `m + mᵀ`.
pub fn sym(m: &Matrix) -> Matrix {
    m + m.transpose()
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Assembles a dense matrix from a grid of blocks.
///
/// Every block in a grid row must share its row count and every block in a
/// grid column its column count. Panics on inconsistent shapes; callers
/// build these grids from dimensions they already validated.
pub fn stack(grid: &[&[&Matrix]]) -> Matrix {
    assert!(!grid.is_empty(), "empty block grid");
    let ncols_grid = grid[0].len();
    let row_heights: Vec<usize> = grid.iter().map(|row| row[0].nrows()).collect();
    let col_widths: Vec<usize> = (0..ncols_grid).map(|j| grid[0][j].ncols()).collect();
    let total_rows: usize = row_heights.iter().sum();
    let total_cols: usize = col_widths.iter().sum();
    let mut out = Matrix::zeros(total_rows, total_cols);
    let mut r0 = 0;
    for (i, row) in grid.iter().enumerate() {
        assert_eq!(row.len(), ncols_grid, "ragged block grid");
        let mut c0 = 0;
        for (j, blk) in row.iter().enumerate() {
            assert_eq!(blk.nrows(), row_heights[i], "block ({i},{j}) row count");
            assert_eq!(blk.ncols(), col_widths[j], "block ({i},{j}) column count");
            out.view_mut((r0, c0), (blk.nrows(), blk.ncols())).copy_from(blk);
            c0 += col_widths[j];
        }
        r0 += row_heights[i];
    }
    out
}

pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), (b.nrows(), b.ncols())).copy_from(b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

fn singular_values_and_right_vectors(m: &Matrix) -> (Vec<f64>, Matrix) {
    let cols = m.ncols();
    // Pad wide matrices to square so the factorization returns a full V.
    let padded;
    let work = if m.nrows() < cols {
        let mut p = Matrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        padded = p;
        &padded
    } else {
        m
    };
    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    (svd.singular_values.iter().copied().collect(), v_t)
}

/// Singular values of `m`, largest first.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with the relative threshold `tol·σ_max`.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tol * smax).count()
}

/// Orthonormal basis of `{v | m v = 0}`.
///
/// Singular values at or below `tol·σ_max` count as zero. A trivial kernel
/// yields a matrix with zero columns. Each basis column is sign-normalized so
/// that its largest-magnitude entry is positive.
pub fn null_space_basis(m: &Matrix, tol: f64) -> Matrix {
    let cols = m.ncols();
    if cols == 0 {
        return Matrix::zeros(0, 0);
    }
    let (sv, v_t) = singular_values_and_right_vectors(m);
    let smax = sv.iter().copied().fold(0.0_f64, f64::max);
    let threshold = tol * smax;
    let kernel_rows: Vec<usize> =
        (0..v_t.nrows()).filter(|&i| smax == 0.0 || sv.get(i).copied().unwrap_or(0.0) <= threshold).collect();
    let mut basis = Matrix::zeros(cols, kernel_rows.len());
    for (k, &i) in kernel_rows.iter().enumerate() {
        let mut col = v_t.row(i).transpose();
        let pivot = col.iter().copied().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
        basis.set_column(k, &col);
    }
    basis
}

/// Eigenvalues of a square matrix together with the smallest `|arg λ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub min_abs_arg: f64,
}

pub fn spectrum(m: &Matrix) -> Result<Spectrum, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let eigenvalues: Vec<Complex64> =
        m.clone().complex_eigenvalues().iter().map(|z| Complex64::new(z.re, z.im)).collect();
    let min_abs_arg = eigenvalues.iter().map(|z| z.arg().abs()).fold(f64::INFINITY, f64::min);
    Ok(Spectrum { eigenvalues, min_abs_arg })
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    symmetric_eigenvalues(m)[0]
}

fn check_symmetric(m: &Matrix, tol: f64) -> Result<(), LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    let asymmetry = max_abs(&(m - m.transpose()));
    let allowed = tol * (1.0 + max_abs(m));
    if asymmetry > allowed {
        return Err(LinalgError::Asymmetric { asymmetry, tol: allowed });
    }
    Ok(())
}

/// True iff the smallest eigenvalue of the symmetrized `m` exceeds `tol`.
pub fn is_positive_definite(m: &Matrix, tol: f64) -> Result<bool, LinalgError> {
    check_symmetric(m, tol)?;
    Ok(min_symmetric_eigenvalue(m) > tol)
}

/// Completes `X_cl = [x X₂; X₂ᵀ X₃]` so that the leading `n×n` block of
/// `X_cl⁻¹` equals `y`.
///
/// `X₃ = I` and `X₂ X₂ᵀ = x − y⁻¹` from its eigenfactorization; eigenvalues
/// of `x − y⁻¹` within `tol` below zero are clipped. If the result is only
/// positive definite up to `tol`, a ridge `tol·I` is added to `X₃`.
pub fn complete_lyapunov(x: &Matrix, y: &Matrix, n_c: usize, tol: f64) -> Result<Matrix, LinalgError> {
    let n = x.nrows();
    check_symmetric(x, tol)?;
    check_symmetric(y, tol)?;
    if y.nrows() != n {
        return Err(LinalgError::Dimension(format!("x is {n}x{n} but y is {}x{}", y.nrows(), y.ncols())));
    }
    if n_c < n {
        return Err(LinalgError::OrderTooSmall { n, n_c });
    }
    let x = symmetrize(x);
    let y = symmetrize(y);
    let eye = Matrix::identity(n, n);
    let coupling = stack(&[&[&x, &eye], &[&eye, &y]]);
    let coupling_min = min_symmetric_eigenvalue(&coupling);
    if coupling_min < -tol {
        return Err(LinalgError::CouplingViolated { min_eig: coupling_min });
    }
    let y_inv = y
        .clone()
        .cholesky()
        .ok_or(LinalgError::NotPositiveDefinite { min_eig: min_symmetric_eigenvalue(&y) })?
        .inverse();
    let gap = symmetrize(&(&x - &y_inv));
    let eig = SymmetricEigen::new(gap);
    let gap_min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if gap_min < -tol {
        return Err(LinalgError::NegativeGap { min_eig: gap_min });
    }
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let factor = &eig.eigenvectors * Matrix::from_diagonal(&sqrt_vals);
    let mut x2 = Matrix::zeros(n, n_c);
    x2.view_mut((0, 0), (n, n)).copy_from(&factor);
    let mut x3 = Matrix::identity(n_c, n_c);

    let mut x_cl = stack(&[&[&x, &x2], &[&x2.transpose(), &x3]]);
    let min_eig = min_symmetric_eigenvalue(&x_cl);
    if min_eig <= tol {
        x3 += Matrix::identity(n_c, n_c) * tol;
        x_cl = stack(&[&[&x, &x2], &[&x2.transpose(), &x3]]);
        let repaired = min_symmetric_eigenvalue(&x_cl);
        if repaired <= 0.0 {
            return Err(LinalgError::NotPositiveDefinite { min_eig: repaired });
        }
    }
    Ok(x_cl)
}
