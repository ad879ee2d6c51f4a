//! Fractional-order time stepping and a Mittag-Leffler oracle.

use std::io::{self, Write};

use statrs::function::gamma::{gamma, ln_gamma};
use thiserror::Error;

use crate::interval::PlantDims;
use crate::linalg::{Matrix, Vector};
use crate::synthesis::ControllerRealization;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("stepping matrix I - dt^alpha * A is singular; try a different dt (e.g. {suggested_dt:e})")]
    Singular { suggested_dt: f64 },
    #[error("|z| = {0} is outside the series regime (|z| <= 50)")]
    OutOfRange(f64),
}

/// Signed binomial weights `w_k = (−1)^k·C(α, k)`, `k = 0..=n`.
pub fn gl_weights(alpha: f64, n: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(n + 1);
    w.push(1.0);
    for k in 1..=n {
        let prev = w[k - 1];
        w.push(prev * (1.0 - (alpha + 1.0) / k as f64));
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub alpha: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Short-memory window in steps; `None` keeps the full history.
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    /// Plant states followed by controller states.
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub controls: Vec<Vector>,
    pub dims: PlantDims,
    pub n_c: usize,
}

impl SimulationResult {
    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("at least the initial state")
    }

    /// Header `t,x1..,xc1..,u1..,y1..` then one row per step.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dims.n).map(|i| format!("x{i}")));
        header.extend((1..=self.n_c).map(|i| format!("xc{i}")));
        header.extend((1..=self.dims.l).map(|i| format!("u{i}")));
        header.extend((1..=self.dims.m).map(|i| format!("y{i}")));
        writeln!(w, "{}", header.join(","))?;
        for j in 0..self.times.len() {
            let mut row = vec![format!("{}", self.times[j])];
            row.extend(self.states[j].iter().map(|v| format!("{v}")));
            row.extend(self.controls[j].iter().map(|v| format!("{v}")));
            row.extend(self.outputs[j].iter().map(|v| format!("{v}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Implicit Grünwald–Letnikov stepping of `D^α x = A_cl x` with Caputo
/// initialization through `z = x − x(0)`:
/// `(I − h·A_cl) z_j = −Σ_{k=1..j} w_k z_{j−k} + h·A_cl x(0)`, `h = dt^α`.
///
/// `x0` holds either the plant state (controller starts at rest) or the full
/// closed-loop state. Outputs use `c_member`; controls follow the controller
/// output equation.
pub fn simulate(
    a_cl: &Matrix,
    dims: PlantDims,
    k: &ControllerRealization,
    c_member: &Matrix,
    x0: &Vector,
    cfg: &SimulationConfig,
) -> Result<SimulationResult, SimulationError> {
    let n_c = k.order();
    let size = dims.n + n_c;
    if a_cl.shape() != (size, size) {
        return Err(SimulationError::Dimension(format!("closed loop is {:?}, expected {size}x{size}", a_cl.shape())));
    }
    if c_member.shape() != (dims.m, dims.n) || k.inputs() != dims.l || k.outputs() != dims.m {
        return Err(SimulationError::Dimension("output matrix or controller does not match the plant".into()));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(SimulationError::Config(format!("dt = {} must be positive", cfg.dt)));
    }
    if !(cfg.t_final >= cfg.dt) {
        return Err(SimulationError::Config(format!("t_final = {} must be at least dt = {}", cfg.t_final, cfg.dt)));
    }
    if !(1.0..2.0).contains(&cfg.alpha) {
        return Err(SimulationError::Config(format!("alpha = {} outside [1, 2)", cfg.alpha)));
    }
    let x_init = if x0.len() == size {
        x0.clone()
    } else if x0.len() == dims.n {
        let mut v = Vector::zeros(size);
        v.rows_mut(0, dims.n).copy_from(x0);
        v
    } else {
        return Err(SimulationError::Dimension(format!("initial state has length {}", x0.len())));
    };

    let steps = (cfg.t_final / cfg.dt + 1e-9).floor() as usize;
    let h = cfg.dt.powf(cfg.alpha);
    let lu = (Matrix::identity(size, size) - a_cl * h).lu();
    let forcing = a_cl * &x_init * h;
    if lu.solve(&forcing).is_none_or(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(SimulationError::Singular { suggested_dt: cfg.dt / 2.0 });
    }
    let w = gl_weights(cfg.alpha, steps);

    // history of z stored flat, step-major
    let mut z = vec![0.0; (steps + 1) * size];
    let mut rhs = Vector::zeros(size);
    for j in 1..=steps {
        rhs.copy_from(&forcing);
        let depth = cfg.window.map_or(j, |win| win.min(j));
        for (kk, wk) in w.iter().enumerate().take(depth + 1).skip(1) {
            let base = (j - kk) * size;
            for i in 0..size {
                rhs[i] -= wk * z[base + i];
            }
        }
        let zj = lu.solve(&rhs).ok_or(SimulationError::Singular { suggested_dt: cfg.dt / 2.0 })?;
        z[j * size..(j + 1) * size].copy_from_slice(zj.as_slice());
    }

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut outputs = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let x = Vector::from_column_slice(&z[j * size..(j + 1) * size]) + &x_init;
        let y = c_member * x.rows(0, dims.n);
        let u = &k.c_c * x.rows(dims.n, n_c) + &k.d_c * &y;
        times.push(j as f64 * cfg.dt);
        states.push(x);
        outputs.push(y);
        controls.push(u);
    }
    Ok(SimulationResult { times, states, outputs, controls, dims, n_c })
}

/// Error-free transformation `a + b = s + e`.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `E_α(z) = Σ z^k / Γ(αk + 1)`, accumulated in double-double.
///
/// Stops once two consecutive terms fall below `tol` past the largest term.
/// For large negative `z` the alternating series cancels heavily; the guard
/// keeps `|z| ≤ 50`, and accuracy degrades toward that bound.
pub fn mittag_leffler(alpha: f64, z: f64, tol: f64) -> Result<f64, SimulationError> {
    if !(alpha > 0.0) {
        return Err(SimulationError::Config(format!("alpha = {alpha} must be positive")));
    }
    if !(z.abs() <= 50.0) {
        return Err(SimulationError::OutOfRange(z.abs()));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let (mut hi, mut lo) = (0.0_f64, 0.0_f64);
    let mut small = 0;
    let mut prev = f64::INFINITY;
    for k in 0..100_000usize {
        let arg = alpha * k as f64 + 1.0;
        let term = if arg < 170.0 {
            z.powi(k as i32) / gamma(arg)
        } else {
            let mag = (k as f64 * z.abs().ln() - ln_gamma(arg)).exp();
            if z < 0.0 && k % 2 == 1 {
                -mag
            } else {
                mag
            }
        };
        let (s, e) = two_sum(hi, term);
        let (s2, e2) = two_sum(s, lo + e);
        hi = s2;
        lo = e2;
        let decreasing = term.abs() <= prev;
        prev = term.abs();
        if decreasing && term.abs() < tol {
            small += 1;
            if small >= 2 {
                break;
            }
        } else {
            small = 0;
        }
    }
    Ok(hi + lo)
}
