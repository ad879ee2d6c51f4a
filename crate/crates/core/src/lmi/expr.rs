//! Affine matrix expressions `C + Σ Lᵢ·op(Vᵢ)·Rᵢ` over decision variables.
//!
//! Shape errors in the builder methods are programming errors and panic,
//! the same way mismatched `nalgebra` products do.

use crate::linalg::{kron, Matrix};

/// Handle to a declared decision variable. Carries the variable's shape so
/// expressions can be shape-checked without the owning problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId {
    pub(crate) index: usize,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
}

impl VarId {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Term {
    pub(crate) left: Matrix,
    pub(crate) var: VarId,
    pub(crate) right: Matrix,
    pub(crate) transpose: bool,
}

impl Term {
    fn var_shape(&self) -> (usize, usize) {
        if self.transpose {
            (self.var.cols, self.var.rows)
        } else {
            (self.var.rows, self.var.cols)
        }
    }

    fn eval(&self, value: &Matrix) -> Matrix {
        if self.transpose {
            &self.left * value.transpose() * &self.right
        } else {
            &self.left * value * &self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixExpr {
    pub(crate) constant: Matrix,
    pub(crate) terms: Vec<Term>,
}

impl AffineMatrixExpr {
    pub fn constant(m: Matrix) -> Self {
        Self { constant: m, terms: Vec::new() }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Matrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(Matrix::identity(n, n))
    }

    /// The bare variable `V`.
    pub fn var(v: VarId) -> Self {
        Self {
            constant: Matrix::zeros(v.rows, v.cols),
            terms: vec![Term {
                left: Matrix::identity(v.rows, v.rows),
                var: v,
                right: Matrix::identity(v.cols, v.cols),
                transpose: false,
            }],
        }
    }

    /// `left · V · right`.
    pub fn product(left: &Matrix, v: VarId, right: &Matrix) -> Self {
        Self::var(v).lmul(left).rmul(right)
    }

    /// `v · I_n` for a scalar variable.
    pub fn scaled_identity(v: VarId, n: usize) -> Self {
        Self::scalar_times(v, &Matrix::identity(n, n))
    }

    /// `v · g` for a scalar variable and constant `g`, one rank-one term per
    /// nonzero column of `g`.
    pub fn scalar_times(v: VarId, g: &Matrix) -> Self {
        assert_eq!(v.shape(), (1, 1), "scalar_times needs a scalar variable");
        let terms = (0..g.ncols())
            .filter(|&j| g.column(j).iter().any(|x| *x != 0.0))
            .map(|j| {
                let mut right = Matrix::zeros(1, g.ncols());
                right[(0, j)] = 1.0;
                Term { left: g.columns(j, 1).into_owned(), var: v, right, transpose: false }
            })
            .collect();
        Self { constant: Matrix::zeros(g.nrows(), g.ncols()), terms }
    }

    pub fn rows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn cols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &Matrix {
        &self.constant
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Variables referenced by any term, in first-use order.
    pub fn vars(&self) -> Vec<VarId> {
        let mut out: Vec<VarId> = Vec::new();
        for t in &self.terms {
            if !out.contains(&t.var) {
                out.push(t.var);
            }
        }
        out
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(mut self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "expression shapes differ in add");
        self.constant += &other.constant;
        self.terms.extend(other.terms.iter().cloned());
        self
    }

    pub fn sub(self, other: &Self) -> Self {
        self.add(&other.clone().scale(-1.0))
    }

    pub fn add_constant(mut self, m: &Matrix) -> Self {
        assert_eq!(self.shape(), m.shape(), "constant shape differs in add_constant");
        self.constant += m;
        self
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.constant *= s;
        for t in &mut self.terms {
            t.left *= s;
        }
        self
    }

    /// `m · self`.
    pub fn lmul(self, m: &Matrix) -> Self {
        assert_eq!(m.ncols(), self.rows(), "left factor has wrong width");
        Self {
            constant: m * &self.constant,
            terms: self.terms.into_iter().map(|t| Term { left: m * &t.left, ..t }).collect(),
        }
    }

    /// `self · m`.
    pub fn rmul(self, m: &Matrix) -> Self {
        assert_eq!(self.cols(), m.nrows(), "right factor has wrong height");
        Self {
            constant: &self.constant * m,
            terms: self.terms.into_iter().map(|t| Term { right: &t.right * m, ..t }).collect(),
        }
    }

    pub fn transpose(self) -> Self {
        Self {
            constant: self.constant.transpose(),
            terms: self
                .terms
                .into_iter()
                .map(|t| Term {
                    left: t.right.transpose(),
                    var: t.var,
                    right: t.left.transpose(),
                    transpose: !t.transpose,
                })
                .collect(),
        }
    }

    /// `self + selfᵀ`.
    pub fn sym(self) -> Self {
        assert_eq!(self.rows(), self.cols(), "sym needs a square expression");
        let t = self.clone().transpose();
        self.add(&t)
    }

    /// `m ⊗ self`, expanded entry by entry:
    /// `e_i e_jᵀ ⊗ (L V R) = (e_i ⊗ L) V (e_jᵀ ⊗ R)`.
    pub fn kron_left(self, m: &Matrix) -> Self {
        let (p, q) = m.shape();
        let mut terms = Vec::new();
        for i in 0..p {
            for j in 0..q {
                let coeff = m[(i, j)];
                if coeff == 0.0 {
                    continue;
                }
                let mut ei = Matrix::zeros(p, 1);
                ei[(i, 0)] = coeff;
                let mut ej = Matrix::zeros(1, q);
                ej[(0, j)] = 1.0;
                for t in &self.terms {
                    terms.push(Term {
                        left: kron(&ei, &t.left),
                        var: t.var,
                        right: kron(&ej, &t.right),
                        transpose: t.transpose,
                    });
                }
            }
        }
        Self { constant: kron(m, &self.constant), terms }
    }

    /// Places `self` at `(row, col)` inside a `rows × cols` zero expression.
    pub fn embed(self, rows: usize, cols: usize, row: usize, col: usize) -> Self {
        assert!(row + self.rows() <= rows && col + self.cols() <= cols, "embedding out of bounds");
        let mut pad_left = Matrix::zeros(rows, self.rows());
        pad_left.view_mut((row, 0), (self.rows(), self.rows())).fill_with_identity();
        let mut pad_right = Matrix::zeros(self.cols(), cols);
        pad_right.view_mut((0, col), (self.cols(), self.cols())).fill_with_identity();
        self.lmul(&pad_left).rmul(&pad_right)
    }

    /// Block assembly. Every block in a grid row must share its height and
    /// every block in a grid column its width.
    pub fn from_blocks(grid: &[Vec<AffineMatrixExpr>]) -> Self {
        assert!(!grid.is_empty() && !grid[0].is_empty(), "empty block grid");
        let heights: Vec<usize> = grid.iter().map(|r| r[0].rows()).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols()).collect();
        let (rows, cols) = (heights.iter().sum(), widths.iter().sum());
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, block) in row.iter().enumerate() {
                assert_eq!(block.shape(), (heights[bi], widths[bj]), "block ({bi}, {bj}) has the wrong shape");
                if !(block.is_constant() && block.constant.iter().all(|v| *v == 0.0)) {
                    out = out.add(&block.clone().embed(rows, cols, r0, c0));
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        out
    }

    /// Value at the given per-variable values (indexed by `VarId::index`).
    pub fn eval_raw(&self, values: &[Matrix]) -> Matrix {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let v = &values[t.var.index];
            assert_eq!(v.shape(), (t.var.rows, t.var.cols), "value shape mismatch for variable {}", t.var.index);
            out += t.eval(v);
        }
        out
    }

    /// Symmetrized value `(E + Eᵀ)/2`.
    pub fn eval(&self, values: &[Matrix]) -> Matrix {
        let e = self.eval_raw(values);
        (&e + e.transpose()) * 0.5
    }

    pub(crate) fn check_terms(&self) -> Result<(), String> {
        for (k, t) in self.terms.iter().enumerate() {
            let (vr, vc) = t.var_shape();
            if t.left.ncols() != vr
                || t.right.nrows() != vc
                || t.left.nrows() != self.rows()
                || t.right.ncols() != self.cols()
            {
                return Err(format!("term {k} does not conform to the {}x{} expression", self.rows(), self.cols()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(index: usize, rows: usize, cols: usize) -> VarId {
        VarId { index, rows, cols }
    }

    fn m(r: usize, c: usize, d: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, d)
    }

    #[test]
    fn product_and_transpose_evaluate() {
        let x = v(0, 2, 3);
        let l = m(1, 2, &[1.0, 2.0]);
        let r = m(3, 1, &[1.0, 0.0, -1.0]);
        let val = m(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let e = AffineMatrixExpr::product(&l, x, &r);
        assert_eq!(e.eval_raw(std::slice::from_ref(&val)), &l * &val * &r);
        assert_eq!(e.clone().transpose().eval_raw(std::slice::from_ref(&val)), (&l * &val * &r).transpose());
    }

    #[test]
    fn kron_left_matches_dense_kron() {
        let x = v(0, 2, 2);
        let theta = m(2, 2, &[0.3, -0.7, 0.7, 0.3]);
        let l = m(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, -1.0]);
        let val = m(2, 2, &[1.0, 2.0, -3.0, 4.0]);
        let e = AffineMatrixExpr::product(&l, x, &Matrix::identity(2, 2)).add_constant(&m(3, 2, &[1.0; 6]));
        let got = e.clone().kron_left(&theta).eval_raw(std::slice::from_ref(&val));
        let want = kron(&theta, &e.eval_raw(&[val]));
        assert!((got - want).abs().max() < 1e-14);
    }

    #[test]
    fn blocks_and_scaled_identity() {
        let eta = v(0, 1, 1);
        let x = v(1, 2, 2);
        let grid = vec![
            vec![AffineMatrixExpr::var(x), AffineMatrixExpr::zeros(2, 1)],
            vec![AffineMatrixExpr::zeros(1, 2), AffineMatrixExpr::scaled_identity(eta, 1).scale(-1.0)],
        ];
        let e = AffineMatrixExpr::from_blocks(&grid);
        let got = e.eval_raw(&[m(1, 1, &[3.0]), m(2, 2, &[1.0, 2.0, 2.0, 5.0])]);
        assert_eq!(got, m(3, 3, &[1.0, 2.0, 0.0, 2.0, 5.0, 0.0, 0.0, 0.0, -3.0]));
        let id = AffineMatrixExpr::scaled_identity(eta, 3).eval_raw(&[m(1, 1, &[2.5]), Matrix::zeros(2, 2)]);
        assert_eq!(id, Matrix::identity(3, 3) * 2.5);
    }

    #[test]
    fn sym_doubles_symmetric_part() {
        let x = v(0, 2, 2);
        let a = m(2, 2, &[0.0, 1.0, -2.0, 3.0]);
        let e = AffineMatrixExpr::product(&Matrix::identity(2, 2), x, &a).sym();
        let val = m(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let xa = &val * &a;
        assert_eq!(e.eval_raw(&[val]), &xa + xa.transpose());
        assert!(e.check_terms().is_ok());
    }
}
