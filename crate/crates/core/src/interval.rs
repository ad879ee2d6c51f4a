//! Interval uncertainty model.
//!
//! An interval matrix `[lower, upper]` is rewritten as `mid + left·F·right`
//! where `F = diag(δ)` with `|δ| ≤ 1` ranges over one scalar per entry,
//! ordered row-major. Zero radii keep their (zero) slots so every factor
//! shape is a function of the matrix dimensions alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("lower and upper bounds differ in shape: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("bounds are misordered (lower > upper) at entries {entries:?}; pass the canonicalize flag to reorder")]
    Misordered { entries: Vec<(usize, usize, f64, f64)> },
    #[error("non-finite bound at ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("delta has length {got}, expected {expected}")]
    DeltaLength { got: usize, expected: usize },
    #[error("delta[{index}] = {value} lies outside [-1, 1]")]
    DeltaRange { index: usize, value: f64 },
    #[error("{count} vertices exceed the cap of {cap}")]
    TooManyVertices { count: u128, cap: usize },
    #[error("order alpha = {0} outside [1, 2)")]
    Order(f64),
    #[error("inconsistent plant dimensions: {0}")]
    Dimension(String),
}

/// Elementwise bounds `lower ≤ M ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMatrix {
    lower: Matrix,
    upper: Matrix,
}

/// `mid ± rad` view of an interval matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MidpointRadius {
    pub mid: Matrix,
    pub rad: Matrix,
}

/// `left` (`n×(n·p)`) and `right` (`(n·p)×p`) with `left·right = rad`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyFactors {
    pub left: Matrix,
    pub right: Matrix,
}

impl IntervalMatrix {
    /// Validated constructor. Misordered entries are rejected unless
    /// `canonicalize` is set, in which case each entry is reordered by
    /// elementwise min/max.
    pub fn from_bounds(lower: Matrix, upper: Matrix, canonicalize: bool) -> Result<Self, IntervalError> {
        if lower.shape() != upper.shape() {
            return Err(IntervalError::ShapeMismatch(lower.shape(), upper.shape()));
        }
        for i in 0..lower.nrows() {
            for j in 0..lower.ncols() {
                if !lower[(i, j)].is_finite() || !upper[(i, j)].is_finite() {
                    return Err(IntervalError::NonFinite(i, j));
                }
            }
        }
        let misordered = misordered_entries(&lower, &upper);
        if misordered.is_empty() {
            return Ok(Self { lower, upper });
        }
        if !canonicalize {
            return Err(IntervalError::Misordered { entries: misordered });
        }
        let lo = lower.zip_map(&upper, f64::min);
        let hi = lower.zip_map(&upper, f64::max);
        Ok(Self { lower: lo, upper: hi })
    }

    pub fn new(lower: Matrix, upper: Matrix) -> Result<Self, IntervalError> {
        Self::from_bounds(lower, upper, false)
    }

    /// Zero-width interval around `m`.
    pub fn degenerate(m: Matrix) -> Self {
        Self { lower: m.clone(), upper: m }
    }

    pub fn from_midpoint_radius(mr: &MidpointRadius) -> Result<Self, IntervalError> {
        Self::new(&mr.mid - &mr.rad, &mr.mid + &mr.rad)
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn upper(&self) -> &Matrix {
        &self.upper
    }

    pub fn shape(&self) -> (usize, usize) {
        self.lower.shape()
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn midpoint_radius(&self) -> MidpointRadius {
        MidpointRadius { mid: (&self.lower + &self.upper) * 0.5, rad: (&self.upper - &self.lower) * 0.5 }
    }

    pub fn factors(&self) -> UncertaintyFactors {
        structure_factors(&self.midpoint_radius())
    }

    pub fn contains(&self, m: &Matrix, tol: f64) -> bool {
        m.shape() == self.shape()
            && m.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| *v >= lo - tol && *v <= hi + tol)
    }

    /// `mid + left·diag(delta)·right`; `delta` is row-major over the entries.
    pub fn sample_member(&self, delta: &[f64]) -> Result<Matrix, IntervalError> {
        check_delta(delta, self.len())?;
        let mr = self.midpoint_radius();
        let f = structure_factors(&mr);
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_column_slice(delta));
        Ok(&mr.mid + &f.left * d * &f.right)
    }

    /// Number of entries with a nonzero radius.
    pub fn uncertain_count(&self) -> usize {
        self.lower.iter().zip(self.upper.iter()).filter(|(lo, hi)| hi > lo).count()
    }

    /// Row-major delta vectors of every vertex: `±1` on each uncertain entry,
    /// `0` elsewhere. Ordered as a binary counter over the uncertain entries
    /// with the first uncertain entry as the most significant bit, `-1` first.
    pub fn vertex_deltas(&self, max_count: usize) -> Result<Vec<Vec<f64>>, IntervalError> {
        let uncertain: Vec<usize> = self
            .lower
            .transpose()
            .iter()
            .zip(self.upper.transpose().iter())
            .enumerate()
            .filter(|(_, (lo, hi))| hi > lo)
            .map(|(k, _)| k)
            .collect();
        let k = uncertain.len();
        let count: u128 = 1u128.checked_shl(k as u32).unwrap_or(u128::MAX);
        if count > max_count as u128 {
            return Err(IntervalError::TooManyVertices { count, cap: max_count });
        }
        let count = count as usize;
        let mut out = Vec::with_capacity(count);
        for code in 0..count {
            let mut delta = vec![0.0; self.len()];
            for (bit, &entry) in uncertain.iter().enumerate() {
                let set = (code >> (k - 1 - bit)) & 1 == 1;
                delta[entry] = if set { 1.0 } else { -1.0 };
            }
            out.push(delta);
        }
        Ok(out)
    }

    pub fn vertices(&self, max_count: usize) -> Result<Vec<Matrix>, IntervalError> {
        self.vertex_deltas(max_count)?.iter().map(|d| self.sample_member(d)).collect()
    }
}

fn misordered_entries(lower: &Matrix, upper: &Matrix) -> Vec<(usize, usize, f64, f64)> {
    let mut out = Vec::new();
    for i in 0..lower.nrows() {
        for j in 0..lower.ncols() {
            if lower[(i, j)] > upper[(i, j)] {
                out.push((i, j, lower[(i, j)], upper[(i, j)]));
            }
        }
    }
    out
}

fn check_delta(delta: &[f64], expected: usize) -> Result<(), IntervalError> {
    if delta.len() != expected {
        return Err(IntervalError::DeltaLength { got: delta.len(), expected });
    }
    if let Some((index, &value)) = delta.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0)) {
        return Err(IntervalError::DeltaRange { index, value });
    }
    Ok(())
}

/// Builds the unit-vector factor pair for an `n×p` radius matrix.
///
/// Slot `k = i·p + j` carries `√rad[i,j]` in column `k` of `left` (row `i`)
/// and in row `k` of `right` (column `j`).
pub fn structure_factors(mr: &MidpointRadius) -> UncertaintyFactors {
    let (n, p) = mr.rad.shape();
    let mut left = Matrix::zeros(n, n * p);
    let mut right = Matrix::zeros(n * p, p);
    for i in 0..n {
        for j in 0..p {
            let k = i * p + j;
            let s = mr.rad[(i, j)].max(0.0).sqrt();
            left[(i, k)] = s;
            right[(k, j)] = s;
        }
    }
    UncertaintyFactors { left, right }
}

/// Plant dimensions `(n, l, m)`: states, inputs, outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantDims {
    pub n: usize,
    pub l: usize,
    pub m: usize,
}

/// Interval fractional-order plant `D^α x = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainPlant {
    pub a: IntervalMatrix,
    pub b: IntervalMatrix,
    pub c: IntervalMatrix,
    pub alpha: f64,
}

impl UncertainPlant {
    pub fn new(a: IntervalMatrix, b: IntervalMatrix, c: IntervalMatrix, alpha: f64) -> Result<Self, IntervalError> {
        if !(1.0..2.0).contains(&alpha) {
            return Err(IntervalError::Order(alpha));
        }
        let (n, n2) = a.shape();
        if n != n2 || n == 0 {
            return Err(IntervalError::Dimension(format!("A is {n}x{n2}")));
        }
        if b.shape().0 != n || b.shape().1 == 0 {
            return Err(IntervalError::Dimension(format!("B is {:?}, expected {n}xl", b.shape())));
        }
        if c.shape().1 != n || c.shape().0 == 0 {
            return Err(IntervalError::Dimension(format!("C is {:?}, expected mx{n}", c.shape())));
        }
        Ok(Self { a, b, c, alpha })
    }

    pub fn dims(&self) -> PlantDims {
        PlantDims { n: self.a.shape().0, l: self.b.shape().1, m: self.c.shape().0 }
    }

    /// Length of a full member delta: `n² + n·l + m·n`.
    pub fn delta_len(&self) -> usize {
        self.a.len() + self.b.len() + self.c.len()
    }

    /// `(A₀, B₀, C₀)`.
    pub fn nominal(&self) -> (Matrix, Matrix, Matrix) {
        (self.a.midpoint_radius().mid, self.b.midpoint_radius().mid, self.c.midpoint_radius().mid)
    }

    /// Member selected by a concatenated `[δ_A, δ_B, δ_C]` vector.
    pub fn member(&self, delta: &[f64]) -> Result<(Matrix, Matrix, Matrix), IntervalError> {
        check_delta(delta, self.delta_len())?;
        let (na, nb) = (self.a.len(), self.b.len());
        Ok((
            self.a.sample_member(&delta[..na])?,
            self.b.sample_member(&delta[na..na + nb])?,
            self.c.sample_member(&delta[na + nb..])?,
        ))
    }
}
