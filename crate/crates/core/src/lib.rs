//! Synthesis and certification of robust dynamic output-feedback controllers
//! for interval fractional-order LTI plants `D^α x = A x + B u, y = C x` with
//! `1 ≤ α < 2`.
//!
//! The crate is split by role:
//!
//! - [`linalg`]: dense kernel (Kronecker products, kernels, spectra, completion).
//! - [`interval`]: interval matrices, midpoint/radius split, structured factors.
//! - [`lmi`]: affine matrix expressions, LMI problems, and a barrier feasibility backend.
//! - [`synthesis`]: the two-stage controller design pipeline.
//! - [`analysis`]: stability LMI, eigenvalue sector test, and family sweeps.
//! - [`fosim`]: Grünwald–Letnikov time stepping and a Mittag-Leffler oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod analysis;
pub mod fosim;
pub mod interval;
pub mod linalg;
pub mod lmi;
pub mod synthesis;

pub use analysis::{lemma2_check, robust_verify, sector_check, SectorCheck, VerificationReport, VerifyOptions};
pub use fosim::{gl_weights, mittag_leffler, simulate, SimulationConfig, SimulationResult};
pub use interval::{IntervalMatrix, MidpointRadius, PlantDims, UncertainPlant, UncertaintyFactors};
pub use linalg::{Matrix, Spectrum, Vector};
pub use lmi::{AffineMatrixExpr, Assignment, LmiProblem, Sense, SolveOutcome, VarId};
pub use synthesis::{
    closed_loop, synthesize, ControllerRealization, SynthesisCertificate, SynthesisError, SynthesisOptions,
};
