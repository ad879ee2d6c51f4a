//! Log-barrier path-following backend.
//!
//! Phase 1 maximizes a common shift `t` with `G_j(x) − t·I ≻ 0` for every
//! block, inside the ball `‖x‖ ≤ radius`. Feasibility is decided from the
//! residuals at the returned point, never from the iteration status. An
//! optional phase 2 minimizes a linear objective from the phase-1 point
//! with the margins held fixed.

use nalgebra::Cholesky;

use super::{LmiError, LmiProblem};
use crate::linalg::{min_symmetric_eigenvalue, Matrix, Vector};

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub(crate) label: String,
    pub(crate) constant: Matrix,
    pub(crate) coeffs: Vec<Option<Matrix>>,
    pub(crate) margin: f64,
}

impl Block {
    fn eval(&self, x: &[f64]) -> Matrix {
        let mut g = self.constant.clone();
        for (a, &xk) in self.coeffs.iter().zip(x) {
            if let Some(a) = a {
                g += a * xk;
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub(crate) coordinates: usize,
    pub(crate) blocks: Vec<Block>,
}

fn symmetrized(m: Matrix) -> Matrix {
    (&m + m.transpose()) * 0.5
}

impl StandardForm {
    pub(crate) fn compile(p: &LmiProblem) -> Self {
        let offsets = p.offsets();
        let coordinates = p.coordinate_count();
        let eps = p.strictness_margin();
        let mut blocks = Vec::new();
        for c in &p.constraints {
            let sign = c.sense.sign();
            let d = c.expr.rows();
            let mut coeffs: Vec<Option<Matrix>> = vec![None; coordinates];
            for t in &c.expr.terms {
                let kind = p.vars[t.var.index].kind;
                for k in 0..kind.coordinate_count() {
                    let mut contrib = Matrix::zeros(d, d);
                    for (i, j) in kind.basis(k) {
                        let (i, j) = if t.transpose { (j, i) } else { (i, j) };
                        contrib += t.left.column(i) * t.right.row(j);
                    }
                    if contrib.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let slot = &mut coeffs[offsets[t.var.index] + k];
                    match slot {
                        Some(acc) => *acc += contrib,
                        None => *slot = Some(contrib),
                    }
                }
            }
            let coeffs = coeffs
                .into_iter()
                .map(|a| a.map(|a| symmetrized(a) * sign).filter(|a| a.iter().any(|v| *v != 0.0)))
                .collect();
            blocks.push(Block {
                label: c.label.clone(),
                constant: symmetrized(c.expr.constant.clone()) * sign,
                coeffs,
                margin: if c.sense.is_strict() { eps } else { 0.0 },
            });
        }
        for (v, o) in p.vars.iter().zip(&offsets) {
            if let Some(lb) = v.lower_bound {
                let mut coeffs = vec![None; coordinates];
                coeffs[*o] = Some(Matrix::from_element(1, 1, 1.0));
                blocks.push(Block {
                    label: format!("{} > {}", v.name, lb),
                    constant: Matrix::from_element(1, 1, -lb),
                    coeffs,
                    margin: eps,
                });
            }
        }
        Self { coordinates, blocks }
    }

    fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.constant.nrows()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Bound on the Euclidean norm of the coordinate vector.
    pub radius: f64,
    /// Stop once the barrier duality gap bound `m/τ` drops below this.
    pub gap_tol: f64,
    pub mu: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { radius: 1e4, gap_tol: 1e-9, mu: 10.0, max_newton: 100, max_outer: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Maximize the common slack.
    MaxMargin,
    /// Minimize `weights·x` while every strict block keeps
    /// `λ_min ≥ max(ε, slack)` and every non-strict one `λ_min ≥ 0`.
    Linear { weights: Vec<f64>, slack: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Feasible(super::Assignment),
    /// `best_slack` is `min_j (λ_min(G_j) − margin_j)` at the max-margin point.
    Infeasible {
        best_slack: f64,
    },
}

impl SolveOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SolveOutcome::Feasible(_))
    }

    pub fn assignment(&self) -> Option<&super::Assignment> {
        match self {
            SolveOutcome::Feasible(a) => Some(a),
            SolveOutcome::Infeasible { .. } => None,
        }
    }
}

pub fn solve_feasibility(p: &LmiProblem) -> Result<SolveOutcome, LmiError> {
    solve_with(p, &SolverOptions::default(), &Objective::MaxMargin)
}

pub fn solve_with(p: &LmiProblem, opts: &SolverOptions, objective: &Objective) -> Result<SolveOutcome, LmiError> {
    let sf = p.standard_form();
    let n = sf.coordinates;
    let x0 = vec![0.0; n];
    let t0 = sf.blocks.iter().map(|b| min_symmetric_eigenvalue(&b.eval(&x0))).fold(f64::INFINITY, f64::min);
    let t0 = if t0.is_finite() { t0 - 1.0 } else { -1.0 };

    let phase1 = Barrier {
        sf: &sf,
        shifts: vec![0.0; sf.blocks.len()],
        with_t: true,
        radius: opts.radius,
        cost: {
            let mut c = vec![0.0; n + 1];
            c[n] = -1.0;
            c
        },
    };
    let mut z = x0.clone();
    z.push(t0);
    let z = phase1.run(z, opts)?;
    let mut x: Vec<f64> = z[..n].to_vec();

    let slacks = |x: &[f64], extra: &dyn Fn(usize) -> f64| -> Vec<f64> {
        sf.blocks
            .iter()
            .enumerate()
            .map(|(j, b)| min_symmetric_eigenvalue(&b.eval(x)) - b.margin.max(extra(j)))
            .collect()
    };
    let best = slacks(&x, &|_| 0.0).into_iter().fold(f64::INFINITY, f64::min);
    if !(best >= 0.0) {
        return Ok(SolveOutcome::Infeasible { best_slack: best });
    }

    if let Objective::Linear { weights, slack } = objective {
        if weights.len() != n {
            return Err(LmiError::Dimension(format!("{} objective weights for {} coordinates", weights.len(), n)));
        }
        let required = |j: usize| if sf.blocks[j].margin > 0.0 { *slack } else { 0.0 };
        let start = slacks(&x, &required);
        if start.iter().all(|s| *s > 0.0) {
            let phase2 = Barrier {
                sf: &sf,
                shifts: (0..sf.blocks.len()).map(|j| sf.blocks[j].margin.max(required(j))).collect(),
                with_t: false,
                radius: opts.radius,
                cost: weights.clone(),
            };
            x = phase2.run(x, opts)?;
        } else {
            return Ok(SolveOutcome::Infeasible { best_slack: start.into_iter().fold(f64::INFINITY, f64::min) });
        }
    }

    let residuals: Vec<f64> = sf.blocks.iter().map(|b| min_symmetric_eigenvalue(&b.eval(&x))).collect();
    let slack = residuals.iter().zip(&sf.blocks).map(|(r, b)| r - b.margin).fold(f64::INFINITY, f64::min);
    if !(slack >= 0.0) {
        return Ok(SolveOutcome::Infeasible { best_slack: slack });
    }
    Ok(SolveOutcome::Feasible(super::Assignment { values: p.values_from_coordinates(&x), residuals, slack }))
}

struct Barrier<'a> {
    sf: &'a StandardForm,
    shifts: Vec<f64>,
    with_t: bool,
    radius: f64,
    cost: Vec<f64>,
}

impl Barrier<'_> {
    fn dim(&self) -> usize {
        self.sf.coordinates + usize::from(self.with_t)
    }

    fn slack_matrix(&self, j: usize, z: &[f64]) -> Matrix {
        let b = &self.sf.blocks[j];
        let n = self.sf.coordinates;
        let shift = self.shifts[j] + if self.with_t { z[n] } else { 0.0 };
        let mut s = b.eval(&z[..n]);
        for i in 0..s.nrows() {
            s[(i, i)] -= shift;
        }
        s
    }

    fn ball_gap(&self, z: &[f64]) -> f64 {
        let n = self.sf.coordinates;
        self.radius * self.radius - z[..n].iter().map(|v| v * v).sum::<f64>()
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, z: &[f64], tau: f64) -> Option<f64> {
        let r = self.ball_gap(z);
        if !(r > 0.0) {
            return None;
        }
        let mut f = -r.ln() + tau * self.cost.iter().zip(z).map(|(c, v)| c * v).sum::<f64>();
        for j in 0..self.sf.blocks.len() {
            let chol = Cholesky::new(self.slack_matrix(j, z))?;
            f -= 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        f.is_finite().then_some(f)
    }

    fn derivatives(&self, z: &[f64], tau: f64) -> Option<(Vector, Matrix)> {
        let n = self.sf.coordinates;
        let dim = self.dim();
        let mut g = Vector::from_iterator(dim, self.cost.iter().map(|c| c * tau));
        let mut h = Matrix::zeros(dim, dim);
        for (j, b) in self.sf.blocks.iter().enumerate() {
            let chol = Cholesky::new(self.slack_matrix(j, z))?;
            let l = chol.l();
            let whiten = |d: &Matrix| -> Matrix {
                let t = l.solve_lower_triangular(d).expect("triangular factor is nonsingular");
                l.solve_lower_triangular(&t.transpose()).expect("triangular factor is nonsingular")
            };
            let mut ws: Vec<(usize, Matrix)> =
                b.coeffs.iter().enumerate().filter_map(|(k, a)| a.as_ref().map(|a| (k, whiten(a)))).collect();
            if self.with_t {
                ws.push((n, -chol.inverse()));
            }
            for (p, (k, wk)) in ws.iter().enumerate() {
                g[*k] -= wk.trace();
                for (l_idx, wl) in ws.iter().skip(p) {
                    let v = wk.dot(wl);
                    h[(*k, *l_idx)] += v;
                    if *l_idx != *k {
                        h[(*l_idx, *k)] += v;
                    }
                }
            }
        }
        let r = self.ball_gap(z);
        for k in 0..n {
            g[k] += 2.0 * z[k] / r;
            h[(k, k)] += 2.0 / r;
            for l in 0..n {
                h[(k, l)] += 4.0 * z[k] * z[l] / (r * r);
            }
        }
        Some((g, h))
    }

    fn newton_direction(g: &Vector, h: &Matrix) -> Option<Vector> {
        let scale = h.diagonal().amax().max(1e-300);
        let mut ridge = 0.0;
        for _ in 0..8 {
            let mut hr = h.clone();
            for i in 0..hr.nrows() {
                hr[(i, i)] += ridge;
            }
            if let Some(c) = Cholesky::new(hr) {
                let d = -c.solve(g);
                if d.iter().all(|v| v.is_finite()) {
                    return Some(d);
                }
            }
            ridge = if ridge == 0.0 { 1e-14 * scale } else { ridge * 100.0 };
        }
        None
    }

    /// Returns the last strictly feasible iterate reached.
    fn run(&self, mut z: Vec<f64>, opts: &SolverOptions) -> Result<Vec<f64>, LmiError> {
        if self.value(&z, 1.0).is_none() {
            return Err(LmiError::Numerical("starting point is not strictly feasible".into()));
        }
        let m_total = (self.sf.total_dim() + 1) as f64;
        let cost0: f64 = self.cost.iter().zip(&z).map(|(c, v)| c * v).sum();
        let mut tau = (m_total / cost0.abs().max(1.0)).min(1.0);
        let mut stalls = 0;
        for _ in 0..opts.max_outer {
            let mut stalled = false;
            for _ in 0..opts.max_newton {
                let Some((g, h)) = self.derivatives(&z, tau) else {
                    stalled = true;
                    break;
                };
                let Some(dz) = Self::newton_direction(&g, &h) else {
                    stalled = true;
                    break;
                };
                let decrement = -g.dot(&dz);
                if !(decrement > 2e-10) {
                    break;
                }
                let f0 = self.value(&z, tau).expect("iterate stays in the domain");
                let mut step = 1.0;
                let mut accepted = false;
                while step > 1e-14 {
                    let trial: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, b)| a + step * b).collect();
                    if let Some(f) = self.value(&trial, tau) {
                        if f <= f0 - 0.25 * step * decrement {
                            z = trial;
                            accepted = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !accepted {
                    stalled = true;
                    break;
                }
            }
            if m_total / tau < opts.gap_tol {
                break;
            }
            if stalled {
                stalls += 1;
                if stalls >= 2 {
                    break;
                }
            } else {
                stalls = 0;
            }
            tau *= opts.mu;
        }
        Ok(z)
    }
}
