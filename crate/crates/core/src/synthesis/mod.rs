//! Two-stage robust output-feedback design.
//!
//! Stage 1 finds `X`, `Y` from the kernel-reduced inequalities and the
//! coupling condition. `X` and `Y` are completed into a closed-loop
//! Lyapunov matrix, and stage 2 solves for the controller gain with that
//! matrix fixed, which makes the full inequality affine in `K`.

mod stages;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::sector_check;
use crate::interval::UncertainPlant;
use crate::linalg::{complete_lyapunov, kron, null_space_basis, stack, LinalgError, Matrix};
use crate::lmi::{solve_with, verify_assignment, LmiError, Objective, SolveOutcome, SolverOptions};

pub use stages::{
    assemble_stage1, assemble_stage2, sector_form, Stage1, Stage2, STAGE1_CONTROL, STAGE1_COUPLING, STAGE1_OBSERVE,
    STAGE2_MAIN,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("order alpha = {0} outside the accepted range")]
    Order(f64),
    #[error("alpha = {0} too close to 1: cos(theta) vanishes")]
    DegenerateTheta(f64),
    #[error("controller order {n_c} is below the plant order {n}; completion needs n_c >= n")]
    OrderTooSmall { n: usize, n_c: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("stage 1 infeasible (best slack {best_slack:.3e})")]
    Stage1Infeasible { best_slack: f64 },
    #[error("completion failed: {0}")]
    Completion(#[from] LinalgError),
    #[error("stage 2 infeasible after {attempts} attempt(s) (best slack {best_slack:.3e})")]
    Stage2Infeasible { best_slack: f64, attempts: usize },
    #[error("certificate failed independent re-verification: {0}")]
    Verification(String),
    #[error(transparent)]
    Lmi(#[from] LmiError),
}

/// `θ = π − α·π/2` for `1 ≤ α < 2`.
pub fn theta_of(alpha: f64) -> Result<f64, SynthesisError> {
    if !(1.0..2.0).contains(&alpha) {
        return Err(SynthesisError::Order(alpha));
    }
    Ok(std::f64::consts::PI * (1.0 - alpha / 2.0))
}

/// Dynamic output-feedback controller `D^α x_c = A_c x_c + B_c y`,
/// `u = C_c x_c + D_c y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerRealization {
    pub a_c: Matrix,
    pub b_c: Matrix,
    pub c_c: Matrix,
    pub d_c: Matrix,
}

impl ControllerRealization {
    pub fn new(a_c: Matrix, b_c: Matrix, c_c: Matrix, d_c: Matrix) -> Result<Self, SynthesisError> {
        let n_c = a_c.nrows();
        let ok = a_c.ncols() == n_c
            && b_c.nrows() == n_c
            && c_c.ncols() == n_c
            && d_c.nrows() == c_c.nrows()
            && d_c.ncols() == b_c.ncols();
        if !ok {
            return Err(SynthesisError::Dimension(format!(
                "Ac {:?}, Bc {:?}, Cc {:?}, Dc {:?} do not form a controller",
                a_c.shape(),
                b_c.shape(),
                c_c.shape(),
                d_c.shape()
            )));
        }
        Ok(Self { a_c, b_c, c_c, d_c })
    }

    pub fn zeros(n_c: usize, l: usize, m: usize) -> Self {
        Self {
            a_c: Matrix::zeros(n_c, n_c),
            b_c: Matrix::zeros(n_c, m),
            c_c: Matrix::zeros(l, n_c),
            d_c: Matrix::zeros(l, m),
        }
    }

    pub fn order(&self) -> usize {
        self.a_c.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.c_c.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.b_c.ncols()
    }

    /// `K = [[A_c, B_c], [C_c, D_c]]`.
    pub fn gain(&self) -> Matrix {
        stack(&[&[&self.a_c, &self.b_c], &[&self.c_c, &self.d_c]])
    }
}

/// Splits `K` of size `(n_c + l) × (n_c + m)` into its four blocks.
pub fn recover_controller(k: &Matrix, n_c: usize, l: usize, m: usize) -> Result<ControllerRealization, SynthesisError> {
    if k.shape() != (n_c + l, n_c + m) {
        return Err(SynthesisError::Dimension(format!("gain is {:?}, expected {:?}", k.shape(), (n_c + l, n_c + m))));
    }
    Ok(ControllerRealization {
        a_c: k.view((0, 0), (n_c, n_c)).into_owned(),
        b_c: k.view((0, n_c), (n_c, m)).into_owned(),
        c_c: k.view((n_c, 0), (l, n_c)).into_owned(),
        d_c: k.view((n_c, n_c), (l, m)).into_owned(),
    })
}

/// `[[A + B·D_c·C, B·C_c], [B_c·C, A_c]]`.
pub fn closed_loop(a: &Matrix, b: &Matrix, c: &Matrix, k: &ControllerRealization) -> Result<Matrix, SynthesisError> {
    let n = a.nrows();
    let ok = a.ncols() == n && b.nrows() == n && c.ncols() == n && b.ncols() == k.inputs() && c.nrows() == k.outputs();
    if !ok {
        return Err(SynthesisError::Dimension(format!(
            "plant A {:?}, B {:?}, C {:?} vs controller with {} inputs, {} outputs",
            a.shape(),
            b.shape(),
            c.shape(),
            k.inputs(),
            k.outputs()
        )));
    }
    let top_left = a + b * &k.d_c * c;
    let top_right = b * &k.c_c;
    let bottom_left = &k.b_c * c;
    Ok(stack(&[&[&top_left, &top_right], &[&bottom_left, &k.a_c]]))
}

/// Nominal augmented matrices and lifted uncertainty factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPlant {
    pub n: usize,
    pub n_c: usize,
    pub l: usize,
    pub m: usize,
    pub theta: f64,
    pub a0: Matrix,
    pub b0: Matrix,
    pub c0: Matrix,
    pub m_a: Matrix,
    pub r_a: Matrix,
    /// `[[A₀, 0], [0, 0]]`
    pub a0_hat: Matrix,
    /// `[[0, B₀], [I, 0]]`
    pub b0_hat: Matrix,
    /// `[[0, I], [C₀, 0]]`
    pub c0_hat: Matrix,
    pub m_a_hat: Matrix,
    pub r_a_hat: Matrix,
    pub m_b_hat: Matrix,
    pub r_b_hat: Matrix,
    pub m_c_hat: Matrix,
    pub r_c_hat: Matrix,
}

pub fn augment(plant: &UncertainPlant, n_c: usize) -> Result<AugmentedPlant, SynthesisError> {
    if n_c == 0 {
        return Err(SynthesisError::Dimension("controller order must be at least 1".into()));
    }
    let theta = theta_of(plant.alpha)?;
    let dims = plant.dims();
    let (n, l, m) = (dims.n, dims.l, dims.m);
    let (a0, b0, c0) = plant.nominal();
    let fa = plant.a.factors();
    let fb = plant.b.factors();
    let fc = plant.c.factors();
    let z = Matrix::zeros;
    let eye = |k: usize| Matrix::identity(k, k);

    let a0_hat = stack(&[&[&a0, &z(n, n_c)], &[&z(n_c, n), &z(n_c, n_c)]]);
    let b0_hat = stack(&[&[&z(n, n_c), &b0], &[&eye(n_c), &z(n_c, l)]]);
    let c0_hat = stack(&[&[&z(n_c, n), &eye(n_c)], &[&c0, &z(m, n_c)]]);
    let m_a_hat = stack(&[&[&fa.left], &[&z(n_c, n * n)]]);
    let r_a_hat = stack(&[&[&fa.right, &z(n * n, n_c)]]);
    let m_b_hat = stack(&[&[&fb.left], &[&z(n_c, n * l)]]);
    let r_b_hat = stack(&[&[&z(n * l, n_c), &fb.right]]);
    let m_c_hat = stack(&[&[&z(n_c, m * n)], &[&fc.left]]);
    let r_c_hat = stack(&[&[&fc.right, &z(m * n, n_c)]]);
    Ok(AugmentedPlant {
        n,
        n_c,
        l,
        m,
        theta,
        a0,
        b0,
        c0,
        m_a: fa.left,
        r_a: fa.right,
        a0_hat,
        b0_hat,
        c0_hat,
        m_a_hat,
        r_a_hat,
        m_b_hat,
        r_b_hat,
        m_c_hat,
        r_c_hat,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceSelectors {
    /// Orthonormal kernel basis of `B₀ᵀ`.
    pub n_c_basis: Matrix,
    /// Orthonormal kernel basis of `C₀`.
    pub n_o_basis: Matrix,
    /// `[[1, −1], [1, 1]] ⊗ 𝔹₀ᵀ`
    pub p: Matrix,
    /// `I₂ ⊗ ℂ₀`
    pub q: Matrix,
    /// `[[N̂_c, 0], [0, −N̂_c]]` with `N̂_c = [N_c; 0]`.
    pub n_p: Matrix,
    /// `[[N̂_o, 0], [0, −N̂_o]]` with `N̂_o = [N_o; 0]`.
    pub n_q: Matrix,
}

/// Kernels are taken at the nominal matrices. A rank-deficient `B₀` or `C₀`
/// simply yields a larger kernel; an empty kernel makes the matching
/// stage-1 inequality vacuous.
pub fn build_selectors(aug: &AugmentedPlant, tol: f64) -> Result<NullspaceSelectors, SynthesisError> {
    let n_c_basis = null_space_basis(&aug.b0.transpose(), tol);
    let n_o_basis = null_space_basis(&aug.c0, tol);
    let pad = |b: &Matrix| stack(&[&[b], &[&Matrix::zeros(aug.n_c, b.ncols())]]);
    let two_block = |b: &Matrix| {
        let z = Matrix::zeros(b.nrows(), b.ncols());
        let neg = -b;
        stack(&[&[b, &z], &[&z, &neg]])
    };
    let mix = Matrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
    Ok(NullspaceSelectors {
        p: kron(&mix, &aug.b0_hat.transpose()),
        q: kron(&Matrix::identity(2, 2), &aug.c0_hat),
        n_p: two_block(&pad(&n_c_basis)),
        n_q: two_block(&pad(&n_o_basis)),
        n_c_basis,
        n_o_basis,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Strictness margin; `None` uses the problem default.
    pub eps: Option<f64>,
    /// Extra stage-1 solves after a failed stage 2.
    pub retries: usize,
    pub seed: u64,
    pub kernel_tol: f64,
    pub completion_tol: f64,
    pub solver: SolverOptions,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            eps: None,
            retries: 3,
            seed: 0,
            kernel_tol: 1e-12,
            completion_tol: 1e-9,
            solver: SolverOptions::default(),
        }
    }
}

/// Tolerance used when re-checking solver output with `verify_assignment`.
pub const SOLVER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisCertificate {
    pub x: Matrix,
    pub y: Matrix,
    pub x_cl: Matrix,
    /// `η₁ … η₇`.
    pub etas: Vec<f64>,
    pub theta: f64,
    pub stage1_slack: f64,
    pub stage2_slack: f64,
    pub stage1_residuals: Vec<f64>,
    pub stage2_residuals: Vec<f64>,
    /// 0 for the max-margin stage-1 point, `r` for the r-th retry.
    pub attempt: usize,
    /// Sector margin of the nominal closed loop.
    pub nominal_sector_margin: f64,
}

fn outcome_slack(o: &SolveOutcome) -> f64 {
    match o {
        SolveOutcome::Feasible(a) => a.slack,
        SolveOutcome::Infeasible { best_slack } => *best_slack,
    }
}

pub fn synthesize(
    plant: &UncertainPlant,
    n_c: usize,
    options: &SynthesisOptions,
) -> Result<(ControllerRealization, SynthesisCertificate), SynthesisError> {
    let n = plant.dims().n;
    if !(plant.alpha > 1.0 && plant.alpha < 2.0) {
        return Err(SynthesisError::Order(plant.alpha));
    }
    if n_c < n {
        return Err(SynthesisError::OrderTooSmall { n, n_c });
    }
    let aug = augment(plant, n_c)?;
    let sel = build_selectors(&aug, options.kernel_tol)?;
    let mut s1 = assemble_stage1(&aug, &sel)?;
    if let Some(eps) = options.eps {
        s1.problem.set_strictness_margin(eps);
    }
    let first = solve_with(&s1.problem, &options.solver, &Objective::MaxMargin)?;
    let SolveOutcome::Feasible(first) = first else {
        return Err(SynthesisError::Stage1Infeasible { best_slack: outcome_slack(&first) });
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let base_weights = s1.problem.trace_weights(&[s1.x, s1.y]);
    let mut best_slack = f64::NEG_INFINITY;
    let mut last_failure = None;
    for attempt in 0..=options.retries {
        let stage1 = if attempt == 0 {
            first.clone()
        } else {
            let level = 10f64.powi(-(attempt as i32)).min(first.slack / 2.0);
            let weights: Vec<f64> =
                base_weights.iter().map(|w| w * (1.0 + 0.01 * rng.random_range(-1.0..1.0))).collect();
            match solve_with(&s1.problem, &options.solver, &Objective::Linear { weights, slack: level })? {
                SolveOutcome::Feasible(a) => a,
                SolveOutcome::Infeasible { .. } => continue,
            }
        };
        let report = verify_assignment(&s1.problem, &stage1, 10.0 * SOLVER_TOLERANCE)?;
        if !report.all_passed() {
            last_failure = Some(format!("stage 1 (attempt {attempt}), min slack {:.3e}", report.min_slack()));
            continue;
        }
        let x = stage1.value(s1.x).clone();
        let y = stage1.value(s1.y).clone();
        let x_cl = complete_lyapunov(&x, &y, n_c, options.completion_tol)?;

        let mut s2 = assemble_stage2(&aug, &x_cl)?;
        if let Some(eps) = options.eps {
            s2.problem.set_strictness_margin(eps);
        }
        let out = solve_with(&s2.problem, &options.solver, &Objective::MaxMargin)?;
        best_slack = best_slack.max(outcome_slack(&out));
        let SolveOutcome::Feasible(stage2) = out else { continue };
        let report2 = verify_assignment(&s2.problem, &stage2, 10.0 * SOLVER_TOLERANCE)?;
        if !report2.all_passed() {
            last_failure = Some(format!("stage 2 (attempt {attempt}), min slack {:.3e}", report2.min_slack()));
            continue;
        }
        let controller = recover_controller(stage2.value(s2.k), n_c, aug.l, aug.m)?;
        let a_cl = closed_loop(&aug.a0, &aug.b0, &aug.c0, &controller)?;
        let sector = sector_check(&a_cl, plant.alpha, crate::analysis::DEFAULT_SECTOR_MARGIN);
        if !sector.stable {
            last_failure = Some(format!("nominal sector test (attempt {attempt}), margin {:.3e}", sector.margin));
            continue;
        }
        let mut etas = vec![stage1.scalar(s1.eta1), stage1.scalar(s1.eta2)];
        etas.extend(s2.etas.iter().map(|e| stage2.scalar(*e)));
        let cert = SynthesisCertificate {
            x,
            y,
            x_cl,
            etas,
            theta: aug.theta,
            stage1_slack: stage1.slack,
            stage2_slack: stage2.slack,
            stage1_residuals: stage1.residuals.clone(),
            stage2_residuals: stage2.residuals.clone(),
            attempt,
            nominal_sector_margin: sector.margin,
        };
        return Ok((controller, cert));
    }
    match last_failure {
        Some(msg) if best_slack >= 0.0 => Err(SynthesisError::Verification(msg)),
        _ => Err(SynthesisError::Stage2Infeasible { best_slack, attempts: options.retries + 1 }),
    }
}
