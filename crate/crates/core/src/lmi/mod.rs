//! LMI modeling layer and a built-in feasibility backend.
//!
//! Constraints are affine symmetric-matrix inequalities over named decision
//! variables. Each is compiled to a standard form
//! `G(x) = C + Σ xₖ·Aₖ ⪰ margin·I` over the stacked coordinate vector `x`,
//! with negative-sense constraints negated. Strict constraints use the
//! problem's strictness margin ε; non-strict ones use margin 0.

mod expr;
mod solver;

use std::fmt::Write as _;

use thiserror::Error;

use crate::linalg::{min_symmetric_eigenvalue, Matrix};

pub use expr::{AffineMatrixExpr, VarId};
pub use solver::{solve_feasibility, solve_with, Objective, SolveOutcome, SolverOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("expression references an undeclared variable (index {0})")]
    UnknownVar(usize),
    #[error("variable dimensions must be at least 1")]
    EmptyVar,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("assignment does not match the problem: {0}")]
    Assignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Symmetric(usize),
    Rectangular(usize, usize),
    Scalar,
}

impl VarKind {
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            VarKind::Symmetric(n) => (n, n),
            VarKind::Rectangular(r, c) => (r, c),
            VarKind::Scalar => (1, 1),
        }
    }

    /// Number of free coordinates.
    pub fn coordinate_count(&self) -> usize {
        match *self {
            VarKind::Symmetric(n) => n * (n + 1) / 2,
            VarKind::Rectangular(r, c) => r * c,
            VarKind::Scalar => 1,
        }
    }

    /// Unit positions making up basis element `k`. Symmetric coordinates run
    /// over the upper triangle row by row; off-diagonal ones carry both
    /// `(i, j)` and `(j, i)`.
    pub(crate) fn basis(&self, k: usize) -> Vec<(usize, usize)> {
        match *self {
            VarKind::Symmetric(n) => {
                let mut rem = k;
                for i in 0..n {
                    let len = n - i;
                    if rem < len {
                        let j = i + rem;
                        return if i == j { vec![(i, i)] } else { vec![(i, j), (j, i)] };
                    }
                    rem -= len;
                }
                unreachable!("coordinate {k} out of range for symmetric({n})")
            }
            VarKind::Rectangular(_, c) => vec![(k / c, k % c)],
            VarKind::Scalar => vec![(0, 0)],
        }
    }

    pub(crate) fn assemble(&self, x: &[f64]) -> Matrix {
        let (r, c) = self.shape();
        let mut m = Matrix::zeros(r, c);
        for (k, &v) in x.iter().enumerate() {
            for (i, j) in self.basis(k) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVar {
    pub name: String,
    pub kind: VarKind,
    /// Strict lower bound for scalar variables (`v > bound`).
    pub lower_bound: Option<f64>,
}

/// Constraint sense relative to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `E ≺ −εI`
    NegDef,
    /// `E ⪯ 0`
    NegSemiDef,
    /// `E ⪰ 0`
    PosSemiDef,
    /// `E ≻ εI`
    PosDef,
}

impl Sense {
    pub fn is_strict(&self) -> bool {
        matches!(self, Sense::NegDef | Sense::PosDef)
    }

    fn sign(&self) -> f64 {
        match self {
            Sense::NegDef | Sense::NegSemiDef => -1.0,
            Sense::PosDef | Sense::PosSemiDef => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub label: String,
    pub expr: AffineMatrixExpr,
    pub sense: Sense,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LmiProblem {
    vars: Vec<DecisionVar>,
    constraints: Vec<Constraint>,
    strictness_margin: Option<f64>,
}

/// Solver output: values per declared variable plus the standard-form
/// minimum eigenvalue of each (possibly implicit) constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub values: Vec<Matrix>,
    pub residuals: Vec<f64>,
    /// `min_j (λ_min(G_j) − margin_j)` at the returned point.
    pub slack: f64,
}

impl Assignment {
    pub fn value(&self, v: VarId) -> &Matrix {
        &self.values[v.index]
    }

    pub fn scalar(&self, v: VarId) -> f64 {
        self.values[v.index][(0, 0)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintCheck {
    pub label: String,
    pub min_eigenvalue: f64,
    pub required: f64,
    pub passed: bool,
}

impl ConstraintCheck {
    pub fn slack(&self) -> f64 {
        self.min_eigenvalue - self.required
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<ConstraintCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn min_slack(&self) -> f64 {
        self.checks.iter().map(ConstraintCheck::slack).fold(f64::INFINITY, f64::min)
    }
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn declare(&mut self, name: &str, kind: VarKind, lower_bound: Option<f64>) -> Result<VarId, LmiError> {
        if self.vars.iter().any(|v| v.name == name) {
            return Err(LmiError::DuplicateName(name.to_string()));
        }
        let (rows, cols) = kind.shape();
        if rows == 0 || cols == 0 {
            return Err(LmiError::EmptyVar);
        }
        self.vars.push(DecisionVar { name: name.to_string(), kind, lower_bound });
        Ok(VarId { index: self.vars.len() - 1, rows, cols })
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> Result<VarId, LmiError> {
        self.declare(name, VarKind::Symmetric(n), None)
    }

    pub fn rectangular(&mut self, name: &str, rows: usize, cols: usize) -> Result<VarId, LmiError> {
        self.declare(name, VarKind::Rectangular(rows, cols), None)
    }

    /// Scalar with an optional strict lower bound.
    pub fn scalar(&mut self, name: &str, lower_bound: Option<f64>) -> Result<VarId, LmiError> {
        self.declare(name, VarKind::Scalar, lower_bound)
    }

    pub fn add_constraint(&mut self, label: &str, expr: AffineMatrixExpr, sense: Sense) -> Result<usize, LmiError> {
        if expr.rows() != expr.cols() {
            return Err(LmiError::Dimension(format!("constraint `{label}` is {}x{}", expr.rows(), expr.cols())));
        }
        for v in expr.vars() {
            match self.vars.get(v.index) {
                Some(d) if d.kind.shape() == v.shape() => {}
                _ => return Err(LmiError::UnknownVar(v.index)),
            }
        }
        expr.check_terms().map_err(LmiError::Dimension)?;
        self.constraints.push(Constraint { label: label.to_string(), expr, sense });
        Ok(self.constraints.len() - 1)
    }

    pub fn vars(&self) -> &[DecisionVar] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn set_strictness_margin(&mut self, eps: f64) {
        self.strictness_margin = Some(eps);
    }

    /// Explicit margin if set, else `1e-7 · max(1, largest constant entry)`.
    pub fn strictness_margin(&self) -> f64 {
        self.strictness_margin.unwrap_or_else(|| {
            let scale =
                self.constraints.iter().flat_map(|c| c.expr.constant.iter()).fold(1.0_f64, |acc, v| acc.max(v.abs()));
            1e-7 * scale
        })
    }

    pub fn coordinate_count(&self) -> usize {
        self.vars.iter().map(|v| v.kind.coordinate_count()).sum()
    }

    pub(crate) fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.vars
            .iter()
            .map(|v| {
                let o = acc;
                acc += v.kind.coordinate_count();
                o
            })
            .collect()
    }

    pub(crate) fn values_from_coordinates(&self, x: &[f64]) -> Vec<Matrix> {
        self.offsets()
            .iter()
            .zip(&self.vars)
            .map(|(&o, v)| v.kind.assemble(&x[o..o + v.kind.coordinate_count()]))
            .collect()
    }

    /// Weights for `Σ trace(V)` over the given symmetric variables.
    pub fn trace_weights(&self, vars: &[VarId]) -> Vec<f64> {
        let offsets = self.offsets();
        let mut w = vec![0.0; self.coordinate_count()];
        for v in vars {
            let kind = self.vars[v.index].kind;
            for k in 0..kind.coordinate_count() {
                let basis = kind.basis(k);
                if basis.len() == 1 && basis[0].0 == basis[0].1 {
                    w[offsets[v.index] + k] = 1.0;
                }
            }
        }
        w
    }

    pub(crate) fn standard_form(&self) -> solver::StandardForm {
        solver::StandardForm::compile(self)
    }

    /// Plain-text standard form for cross-checking with other tools.
    ///
    /// ```text
    /// lmi-standard-form v1
    /// coordinates <N>
    /// var <name> <kind> <offset> <count>
    /// blocks <J>
    /// block <j> <label> dim <d> margin <m>
    /// C
    /// <d rows of d numbers>
    /// A <k>              (only nonzero coefficient blocks)
    /// <d rows of d numbers>
    /// ```
    /// Every block reads `C + Σ xₖ·Aₖ ⪰ margin·I`.
    pub fn standard_form_text(&self) -> String {
        let sf = self.standard_form();
        let mut out = String::from("lmi-standard-form v1\n");
        let _ = writeln!(out, "coordinates {}", sf.coordinates);
        for (v, o) in self.vars.iter().zip(self.offsets()) {
            let kind = match v.kind {
                VarKind::Symmetric(n) => format!("symmetric({n})"),
                VarKind::Rectangular(r, c) => format!("rectangular({r}x{c})"),
                VarKind::Scalar => "scalar".to_string(),
            };
            let _ = writeln!(out, "var {} {} {} {}", v.name, kind, o, v.kind.coordinate_count());
        }
        let _ = writeln!(out, "blocks {}", sf.blocks.len());
        let dump = |out: &mut String, m: &Matrix| {
            for i in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.17e}", m[(i, j)])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        };
        for (j, b) in sf.blocks.iter().enumerate() {
            let _ = writeln!(out, "block {} {} dim {} margin {:.17e}", j, b.label, b.constant.nrows(), b.margin);
            out.push_str("C\n");
            dump(&mut out, &b.constant);
            for (k, a) in b.coeffs.iter().enumerate() {
                if let Some(a) = a {
                    let _ = writeln!(out, "A {k}");
                    dump(&mut out, a);
                }
            }
        }
        out
    }
}

/// `[[block, off_diagᵀ], [off_diag, −η·I]]`.
///
/// Negative definiteness of the result is equivalent to
/// `block + η⁻¹·off_diagᵀ·off_diag ≺ 0` for `η > 0`.
pub fn schur_embed(
    block: &AffineMatrixExpr,
    off_diag: &AffineMatrixExpr,
    eta: VarId,
) -> Result<AffineMatrixExpr, LmiError> {
    if block.rows() != block.cols() {
        return Err(LmiError::Dimension(format!("block is {}x{}", block.rows(), block.cols())));
    }
    if off_diag.cols() != block.cols() {
        return Err(LmiError::Dimension(format!(
            "off-diagonal has {} columns, block has {}",
            off_diag.cols(),
            block.cols()
        )));
    }
    if eta.shape() != (1, 1) {
        return Err(LmiError::Dimension("multiplier must be a scalar variable".into()));
    }
    let r = off_diag.rows();
    Ok(AffineMatrixExpr::from_blocks(&[
        vec![block.clone(), off_diag.clone().transpose()],
        vec![off_diag.clone(), AffineMatrixExpr::scaled_identity(eta, r).scale(-1.0)],
    ]))
}

/// Recomputes every constraint from the expression trees with dense
/// arithmetic. Passes when `λ_min ≥ required − tol`, where `required` is ε for
/// strict constraints and 0 otherwise. Scalar lower bounds are checked as
/// `v − bound ≥ ε − tol`.
pub fn verify_assignment(p: &LmiProblem, a: &Assignment, tol: f64) -> Result<VerifyReport, LmiError> {
    if a.values.len() != p.vars.len() {
        return Err(LmiError::Assignment(format!("{} values for {} variables", a.values.len(), p.vars.len())));
    }
    for (v, m) in p.vars.iter().zip(&a.values) {
        if v.kind.shape() != m.shape() {
            return Err(LmiError::Assignment(format!("`{}` has shape {:?}", v.name, m.shape())));
        }
        if !m.iter().all(|x| x.is_finite()) {
            return Err(LmiError::Assignment(format!("`{}` has non-finite entries", v.name)));
        }
    }
    let eps = p.strictness_margin();
    let mut checks = Vec::new();
    for c in &p.constraints {
        let value = c.expr.eval(&a.values) * c.sense.sign();
        let min_eigenvalue = min_symmetric_eigenvalue(&value);
        let required = if c.sense.is_strict() { eps } else { 0.0 };
        checks.push(ConstraintCheck {
            label: c.label.clone(),
            min_eigenvalue,
            required,
            passed: min_eigenvalue >= required - tol,
        });
    }
    for (v, m) in p.vars.iter().zip(&a.values) {
        if let Some(lb) = v.lower_bound {
            let min_eigenvalue = m[(0, 0)] - lb;
            checks.push(ConstraintCheck {
                label: format!("{} > {}", v.name, lb),
                min_eigenvalue,
                required: eps,
                passed: min_eigenvalue >= eps - tol,
            });
        }
    }
    Ok(VerifyReport { checks })
}
