//! Stability certification and family sweeps.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interval::{IntervalError, UncertainPlant};
use crate::linalg::{kron, spectrum, sym, Matrix};
use crate::lmi::{solve_feasibility, verify_assignment, AffineMatrixExpr, LmiError, LmiProblem, Sense, SolveOutcome};
use crate::synthesis::{closed_loop, sector_form, theta_of, ControllerRealization, SynthesisError};

/// Default strict margin on the sector test, in radians.
pub const DEFAULT_SECTOR_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Lmi(#[from] LmiError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorCheck {
    pub stable: bool,
    /// `min |arg λ|` over the spectrum.
    pub min_abs_arg: f64,
    /// `min |arg λ| − α·π/2`.
    pub margin: f64,
}

/// Spectral reading of the stability condition: every eigenvalue must
/// satisfy `|arg λ| > α·π/2 + margin`.
///
/// # Panics
/// If `a` is not square.
pub fn sector_check(a: &Matrix, alpha: f64, margin: f64) -> SectorCheck {
    let sp = spectrum(a).expect("sector_check needs a square matrix");
    let m = sp.min_abs_arg - alpha * std::f64::consts::FRAC_PI_2;
    SectorCheck { stable: m > margin, min_abs_arg: sp.min_abs_arg, margin: m }
}

/// `Φ(XA)` with blocks `s(XA + AᵀX)` and `±c(XA − AᵀX)`, written out.
pub fn stability_lmi_blocks(a: &Matrix, x: &Matrix, alpha: f64) -> Result<Matrix, AnalysisError> {
    let theta = theta_of(alpha)?;
    let (s, c) = theta.sin_cos();
    let z = x * a;
    let zs = &z + z.transpose();
    let za = &z - z.transpose();
    Ok(crate::linalg::stack(&[&[&(&zs * s), &(&za * c)], &[&(-&za * c), &(&zs * s)]]))
}

/// `Sym{Θ ⊗ (AᵀX)}` with `Θ = [[sin θ, −cos θ], [cos θ, sin θ]]`.
pub fn stability_lmi_kron(a: &Matrix, x: &Matrix, alpha: f64) -> Result<Matrix, AnalysisError> {
    let theta = theta_of(alpha)?;
    let (s, c) = theta.sin_cos();
    let rot = Matrix::from_row_slice(2, 2, &[s, -c, c, s]);
    Ok(sym(&kron(&rot, &(a.transpose() * x))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityLmiResult {
    pub feasible: bool,
    /// Certificate `X ≻ 0`, normalized so `X ⪯ I`.
    pub x: Option<Matrix>,
    /// Common slack at the max-margin point (for the normalized matrix).
    pub slack: f64,
}

/// Solves `Φ(XA) ≺ 0, 0 ≺ X ⪯ I` for the Frobenius-normalized `A`.
pub fn lemma2_check(a: &Matrix, alpha: f64) -> Result<StabilityLmiResult, AnalysisError> {
    let (n, cols) = a.shape();
    if n != cols {
        return Err(AnalysisError::NotSquare(n, cols));
    }
    let theta = theta_of(alpha)?;
    let norm = a.norm();
    let a_n = if norm > 0.0 { a / norm } else { a.clone() };
    let mut p = LmiProblem::new();
    let x = p.symmetric("X", n)?;
    p.add_constraint(
        "stability",
        sector_form(AffineMatrixExpr::product(&Matrix::identity(n, n), x, &a_n), theta),
        Sense::NegDef,
    )?;
    p.add_constraint("X > 0", AffineMatrixExpr::var(x), Sense::PosDef)?;
    p.add_constraint("X <= I", AffineMatrixExpr::var(x).sub(&AffineMatrixExpr::identity(n)), Sense::NegSemiDef)?;
    match solve_feasibility(&p)? {
        SolveOutcome::Feasible(asg) => {
            let report = verify_assignment(&p, &asg, 10.0 * crate::synthesis::SOLVER_TOLERANCE)?;
            Ok(StabilityLmiResult { feasible: report.all_passed(), slack: asg.slack, x: Some(asg.value(x).clone()) })
        }
        SolveOutcome::Infeasible { best_slack } => {
            Ok(StabilityLmiResult { feasible: false, x: None, slack: best_slack })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub seed: u64,
    pub vertex_cap: usize,
    pub margin: f64,
    /// Maximum number of failing members listed in the report.
    pub failure_cap: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { samples: 1000, seed: 0, vertex_cap: 4096, margin: DEFAULT_SECTOR_MARGIN, failure_cap: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemberKind {
    Nominal,
    Vertex,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberResult {
    pub index: usize,
    pub kind: MemberKind,
    pub margin: f64,
    /// Concatenated `[δ_A, δ_B, δ_C]`, each row-major.
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Always `"sampled"`: vertices plus random members, not an enclosure.
    pub coverage: String,
    pub alpha: f64,
    pub vertex_count: usize,
    pub sample_count: usize,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    pub worst: MemberResult,
    pub failures: Vec<MemberResult>,
    /// Set when the vertex count exceeded the cap and only samples ran.
    pub vertex_fallback: bool,
    /// Per-member closed-loop spectra in member order.
    #[serde(skip)]
    pub eigenvalues: Vec<Vec<Complex64>>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn worst_margin(&self) -> f64 {
        self.worst.margin
    }
}

/// Delta vectors of every vertex of the plant family, or `None` above `cap`.
pub fn plant_vertex_deltas(plant: &UncertainPlant, cap: usize) -> Option<Vec<Vec<f64>>> {
    let va = plant.a.vertex_deltas(cap).ok()?;
    let vb = plant.b.vertex_deltas(cap).ok()?;
    let vc = plant.c.vertex_deltas(cap).ok()?;
    let total = va.len().checked_mul(vb.len())?.checked_mul(vc.len())?;
    if total > cap {
        return None;
    }
    let mut out = Vec::with_capacity(total);
    for a in &va {
        for b in &vb {
            for c in &vc {
                out.push(a.iter().chain(b).chain(c).copied().collect());
            }
        }
    }
    Some(out)
}

/// Uniform delta for sample `index`, drawn from its own stream of `seed`.
pub fn sample_delta(len: usize, seed: u64, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Sector test of the closed loop on every vertex (if within the cap) and on
/// `samples` seeded random members. A plant without uncertainty has exactly
/// one vertex, its nominal. The result does not depend on thread scheduling.
pub fn robust_verify(
    plant: &UncertainPlant,
    k: &ControllerRealization,
    opts: &VerifyOptions,
) -> Result<VerificationReport, AnalysisError> {
    let len = plant.delta_len();
    let vertices = plant_vertex_deltas(plant, opts.vertex_cap);
    let vertex_fallback = vertices.is_none();
    let vertices = vertices.unwrap_or_default();
    let vertex_count = vertices.len();
    let mut members: Vec<(MemberKind, Vec<f64>)> = vertices.into_iter().map(|d| (MemberKind::Vertex, d)).collect();
    members.extend((0..opts.samples).map(|i| (MemberKind::Sample, sample_delta(len, opts.seed, i))));
    if members.is_empty() {
        members.push((MemberKind::Nominal, vec![0.0; len]));
    }

    let results: Vec<(MemberResult, Vec<Complex64>)> = members
        .into_par_iter()
        .enumerate()
        .map(|(index, (kind, delta))| {
            let (a, b, c) = plant.member(&delta)?;
            let a_cl = closed_loop(&a, &b, &c, k)?;
            let eig = spectrum(&a_cl).map_err(|_| AnalysisError::NotSquare(a_cl.nrows(), a_cl.ncols()))?;
            let margin = eig.min_abs_arg - plant.alpha * std::f64::consts::FRAC_PI_2;
            Ok((MemberResult { index, kind, margin, delta }, eig.eigenvalues))
        })
        .collect::<Result<_, AnalysisError>>()?;

    let mut passed = 0;
    let mut failures = Vec::new();
    let mut failed = 0;
    let mut worst: Option<&MemberResult> = None;
    for (r, _) in &results {
        if r.margin > opts.margin {
            passed += 1;
        } else {
            failed += 1;
            if failures.len() < opts.failure_cap {
                failures.push(r.clone());
            }
        }
        if worst.is_none_or(|w| r.margin < w.margin) {
            worst = Some(r);
        }
    }
    let worst = worst.expect("at least one member").clone();
    Ok(VerificationReport {
        coverage: "sampled".into(),
        alpha: plant.alpha,
        vertex_count,
        sample_count: opts.samples,
        seed: opts.seed,
        passed,
        failed,
        worst,
        failures,
        vertex_fallback,
        eigenvalues: results.into_iter().map(|(_, e)| e).collect(),
    })
}
