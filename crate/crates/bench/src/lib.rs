//! Benchmark fixtures shared by the criterion targets.

use fracsynth::interval::{IntervalMatrix, UncertainPlant};
use fracsynth::Matrix;

fn m(r: usize, c: usize, d: &[f64]) -> Matrix {
    Matrix::from_row_slice(r, c, d)
}

/// Second-order plant, α = 1.2, uncertain in A, B and C; synthesizable with `n_c = 2`.
pub fn demo_plant() -> UncertainPlant {
    let a0 = m(2, 2, &[0.15, -1.5, -0.1, -2.8]);
    let rad = m(2, 2, &[0.2, 0.1, 0.05, 0.1]);
    let a = IntervalMatrix::new(&a0 - &rad, &a0 + &rad).expect("ordered bounds");
    let b = IntervalMatrix::new(m(2, 1, &[1.0, 0.9]), m(2, 1, &[1.1, 1.0])).expect("ordered bounds");
    let c = IntervalMatrix::new(m(1, 2, &[0.95, -0.05]), m(1, 2, &[1.05, 0.05])).expect("ordered bounds");
    UncertainPlant::new(a, b, c, 1.2).expect("consistent plant")
}
