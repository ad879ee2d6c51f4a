//! Constraint assembly for the two synthesis stages.

use super::{AugmentedPlant, NullspaceSelectors, SynthesisError};
use crate::linalg::{kron, Matrix};
use crate::lmi::{schur_embed, AffineMatrixExpr, LmiProblem, Sense, VarId};

/// `[[sin θ, cos θ], [−cos θ, sin θ]]`
pub(crate) fn rotation_t(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[s, c, -c, s])
}

/// `Sym{[[sin θ, cos θ], [−cos θ, sin θ]] ⊗ Z}`, i.e.
/// `[[s(Z+Zᵀ), c(Z−Zᵀ)], [c(Zᵀ−Z), s(Z+Zᵀ)]]`.
pub fn sector_form(z: AffineMatrixExpr, theta: f64) -> AffineMatrixExpr {
    z.kron_left(&rotation_t(theta)).sym()
}

#[derive(Debug, Clone)]
pub struct Stage1 {
    pub problem: LmiProblem,
    pub x: VarId,
    pub y: VarId,
    pub eta1: VarId,
    pub eta2: VarId,
    /// Labels of kernel-reduced inequalities dropped because their kernel is
    /// trivial.
    pub vacuous: Vec<&'static str>,
}

pub const STAGE1_CONTROL: &str = "reduced control inequality";
pub const STAGE1_OBSERVE: &str = "reduced observation inequality";
pub const STAGE1_COUPLING: &str = "coupling";

pub fn assemble_stage1(aug: &AugmentedPlant, sel: &NullspaceSelectors) -> Result<Stage1, SynthesisError> {
    let (s, c) = aug.theta.sin_cos();
    if c.abs() < 1e-6 {
        return Err(SynthesisError::DegenerateTheta(2.0 * (1.0 - aug.theta / std::f64::consts::PI)));
    }
    let n = aug.n;
    let mut p = LmiProblem::new();
    let y = p.symmetric("Y", n)?;
    let x = p.symmetric("X", n)?;
    let eta1 = p.scalar("eta1", Some(0.0))?;
    let eta2 = p.scalar("eta2", Some(0.0))?;
    let i2 = Matrix::identity(2, 2);
    let mut vacuous = Vec::new();

    let nc = &sel.n_c_basis;
    if nc.ncols() > 0 {
        let scaled = Matrix::from_row_slice(2, 2, &[1.0 / s, -1.0 / c, 1.0 / c, 1.0 / s]);
        let z = AffineMatrixExpr::product(&(nc.transpose() * &aug.a0), y, nc);
        let sigma = z.kron_left(&scaled).sym();
        let m1 = kron(&i2, &(nc.transpose() * &aug.m_a));
        let block = sigma.add(&AffineMatrixExpr::scalar_times(eta1, &(&m1 * m1.transpose())));
        let border = AffineMatrixExpr::product(&aug.r_a, y, nc).kron_left(&scaled);
        p.add_constraint(STAGE1_CONTROL, schur_embed(&block, &border, eta1)?, Sense::NegDef)?;
    } else {
        vacuous.push(STAGE1_CONTROL);
    }

    let no = &sel.n_o_basis;
    if no.ncols() > 0 {
        let z = AffineMatrixExpr::product(&no.transpose(), x, &(&aug.a0 * no));
        let sigma = sector_form(z, aug.theta);
        let m2 = kron(&rotation_t(aug.theta), &(&aug.r_a * no)).transpose();
        let block = sigma.add(&AffineMatrixExpr::scalar_times(eta2, &(&m2 * m2.transpose())));
        let border = AffineMatrixExpr::product(&aug.m_a.transpose(), x, no).kron_left(&i2);
        p.add_constraint(STAGE1_OBSERVE, schur_embed(&block, &border, eta2)?, Sense::NegDef)?;
    } else {
        vacuous.push(STAGE1_OBSERVE);
    }

    let eye = AffineMatrixExpr::identity(n);
    let coupling = AffineMatrixExpr::from_blocks(&[
        vec![AffineMatrixExpr::var(x), eye.clone()],
        vec![eye, AffineMatrixExpr::var(y)],
    ]);
    p.add_constraint(STAGE1_COUPLING, coupling, Sense::PosSemiDef)?;
    p.add_constraint("X > 0", AffineMatrixExpr::var(x), Sense::PosDef)?;
    p.add_constraint("Y > 0", AffineMatrixExpr::var(y), Sense::PosDef)?;
    Ok(Stage1 { problem: p, x, y, eta1, eta2, vacuous })
}

#[derive(Debug, Clone)]
pub struct Stage2 {
    pub problem: LmiProblem,
    pub k: VarId,
    /// `η₃ … η₇`.
    pub etas: [VarId; 5],
}

pub const STAGE2_MAIN: &str = "closed-loop inequality";

/// Pads `e` with zero columns on the left up to `cols`.
fn pad_left(e: AffineMatrixExpr, cols: usize) -> AffineMatrixExpr {
    let (r, w) = e.shape();
    e.embed(r, cols, 0, cols - w)
}

/// Closed-loop inequality in `K` and `η₃…η₇` with the Lyapunov matrix fixed.
///
/// Main block: nominal sector form of `X_cl(𝔸₀ + 𝔹₀Kℂ₀)` plus the
/// multiplier-weighted constant factors of the four uncertainty channels.
/// Borders, in order: A channel, B channel, C channel, and the B·K·C cross
/// channel as a two-multiplier pair `[[−η₆I, W], [Wᵀ, −η₇I]]`.
pub fn assemble_stage2(aug: &AugmentedPlant, x_cl: &Matrix) -> Result<Stage2, SynthesisError> {
    let size = aug.n + aug.n_c;
    if x_cl.shape() != (size, size) {
        return Err(SynthesisError::Dimension(format!(
            "Lyapunov matrix is {:?}, expected {size}x{size}",
            x_cl.shape()
        )));
    }
    if !crate::linalg::is_positive_definite(x_cl, 0.0)? {
        return Err(SynthesisError::Dimension("Lyapunov matrix is not positive definite".into()));
    }
    let mut p = LmiProblem::new();
    let k = p.rectangular("K", aug.n_c + aug.l, aug.n_c + aug.m)?;
    let etas = [
        p.scalar("eta3", Some(0.0))?,
        p.scalar("eta4", Some(0.0))?,
        p.scalar("eta5", Some(0.0))?,
        p.scalar("eta6", Some(0.0))?,
        p.scalar("eta7", Some(0.0))?,
    ];
    let [e3, e4, e5, e6, e7] = etas;
    let theta = aug.theta;
    let i2 = Matrix::identity(2, 2);
    let rot = rotation_t(theta);
    let xb = x_cl * &aug.b0_hat;

    let u_a = kron(&i2, &(x_cl * &aug.m_a_hat));
    let v_a = kron(&rot, &aug.r_a_hat);
    let u_b = kron(&i2, &(x_cl * &aug.m_b_hat));
    let v_c = kron(&rot, &aug.r_c_hat);
    let u_b_sq = &u_b * u_b.transpose();
    let v_c_sq = v_c.transpose() * &v_c;

    let main = sector_form(AffineMatrixExpr::constant(x_cl * &aug.a0_hat), theta)
        .add(&sector_form(AffineMatrixExpr::product(&xb, k, &aug.c0_hat), theta))
        .add(&AffineMatrixExpr::scalar_times(e3, &(&u_a * u_a.transpose())))
        .add(&AffineMatrixExpr::scalar_times(e4, &u_b_sq))
        .add(&AffineMatrixExpr::scalar_times(e5, &v_c_sq))
        .add(&AffineMatrixExpr::scalar_times(e6, &u_b_sq))
        .add(&AffineMatrixExpr::scalar_times(e7, &v_c_sq));

    let mut big = schur_embed(&main, &AffineMatrixExpr::constant(v_a), e3)?;
    let v_b = AffineMatrixExpr::product(&aug.r_b_hat, k, &aug.c0_hat).kron_left(&rot);
    big = schur_embed(&big, &pad_right(v_b, big.cols()), e4)?;
    let u_c = AffineMatrixExpr::product(&xb, k, &aug.m_c_hat).kron_left(&i2).transpose();
    big = schur_embed(&big, &pad_right(u_c, big.cols()), e5)?;
    let cross = AffineMatrixExpr::product(&aug.r_b_hat, k, &aug.m_c_hat).kron_left(&i2);
    let d6 = cross.rows();
    big = schur_embed(&big, &AffineMatrixExpr::zeros(d6, big.cols()), e6)?;
    big = schur_embed(&big, &pad_left(cross.transpose(), big.cols()), e7)?;

    p.add_constraint(STAGE2_MAIN, big, Sense::NegDef)?;
    Ok(Stage2 { problem: p, k, etas })
}

/// Pads `e` with zero columns on the right up to `cols`.
fn pad_right(e: AffineMatrixExpr, cols: usize) -> AffineMatrixExpr {
    let r = e.rows();
    e.embed(r, cols, 0, 0)
}

#[cfg(test)]
mod tests {
    use super::super::{augment, build_selectors, tests::example_plant};
    use super::*;
    use crate::interval::{IntervalMatrix, UncertainPlant};
    use crate::linalg::{max_abs, stack, sym};

    fn m(r: usize, c: usize, d: &[f64]) -> Matrix {
        Matrix::from_row_slice(r, c, d)
    }

    fn stage1_values(p: &LmiProblem, y: &Matrix, x: &Matrix, e1: f64, e2: f64) -> Vec<Matrix> {
        assert_eq!(p.vars().len(), 4);
        vec![y.clone(), x.clone(), m(1, 1, &[e1]), m(1, 1, &[e2])]
    }

    #[test]
    fn stage1_shapes_for_example() {
        let aug = augment(&example_plant(), 2).unwrap();
        let sel = build_selectors(&aug, 1e-12).unwrap();
        let s1 = assemble_stage1(&aug, &sel).unwrap();
        assert_eq!(s1.problem.coordinate_count(), 3 + 3 + 1 + 1);
        let cons = s1.problem.constraints();
        assert_eq!(cons[0].expr.shape(), (10, 10));
        assert_eq!(cons[1].expr.shape(), (10, 10));
        assert_eq!(cons[2].expr.shape(), (4, 4));
        assert!(s1.vacuous.is_empty());
    }

    /// Both assembly paths of the control inequality agree: the bordered form
    /// written out directly versus the sequential expression build.
    #[test]
    fn stage1_control_matches_direct_bordered_form() {
        let aug = augment(&example_plant(), 2).unwrap();
        let sel = build_selectors(&aug, 1e-12).unwrap();
        let s1 = assemble_stage1(&aug, &sel).unwrap();
        let y = m(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let x = m(2, 2, &[1.0, -0.2, -0.2, 0.7]);
        let (e1, e2) = (0.8, 1.7);
        let vals = stage1_values(&s1.problem, &y, &x, e1, e2);
        let got = s1.problem.constraints()[0].expr.eval(&vals);

        let (s, c) = aug.theta.sin_cos();
        let scaled = m(2, 2, &[1.0 / s, -1.0 / c, 1.0 / c, 1.0 / s]);
        let nc = &sel.n_c_basis;
        let sigma = sym(&kron(&scaled, &(nc.transpose() * &aug.a0 * &y * nc)));
        let m1 = kron(&Matrix::identity(2, 2), &(nc.transpose() * &aug.m_a));
        let r1 = kron(&scaled, &(&aug.r_a * &y * nc));
        let top = sigma + &m1 * m1.transpose() * e1;
        let r1t = r1.transpose();
        let corner = Matrix::identity(8, 8) * -e1;
        let want = stack(&[&[&top, &r1t], &[&r1, &corner]]);
        assert!(max_abs(&(got - want)) <= 1e-12);
    }

    #[test]
    fn stage1_observe_matches_direct_bordered_form() {
        let aug = augment(&example_plant(), 2).unwrap();
        let sel = build_selectors(&aug, 1e-12).unwrap();
        let s1 = assemble_stage1(&aug, &sel).unwrap();
        let y = m(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let x = m(2, 2, &[1.0, -0.2, -0.2, 0.7]);
        let vals = stage1_values(&s1.problem, &y, &x, 0.8, 1.7);
        let got = s1.problem.constraints()[1].expr.eval(&vals);

        let (s, c) = aug.theta.sin_cos();
        let no = &sel.n_o_basis;
        let z = no.transpose() * &x * &aug.a0 * no;
        let zs = &z + z.transpose();
        let za = &z - z.transpose();
        let sigma = stack(&[&[&(&zs * s), &(&za * c)], &[&(-&za * c), &(&zs * s)]]);
        let rot = m(2, 2, &[s, c, -c, s]);
        let m2 = kron(&rot, &(&aug.r_a * no)).transpose();
        let r2t = kron(&Matrix::identity(2, 2), &(no.transpose() * &x * &aug.m_a));
        let top = sigma + &m2 * m2.transpose() * 1.7;
        let r2 = r2t.transpose();
        let corner = Matrix::identity(8, 8) * -1.7;
        let want = stack(&[&[&top, &r2t], &[&r2, &corner]]);
        assert!(max_abs(&(got - want)) <= 1e-12);
    }

    #[test]
    fn stage1_without_state_uncertainty_reduces_to_nominal() {
        let mut plant = example_plant();
        plant.a = IntervalMatrix::degenerate(plant.a.midpoint_radius().mid);
        let aug = augment(&plant, 2).unwrap();
        let sel = build_selectors(&aug, 1e-12).unwrap();
        let s1 = assemble_stage1(&aug, &sel).unwrap();
        let y = m(2, 2, &[1.3, 0.1, 0.1, 0.9]);
        let x = m(2, 2, &[0.4, 0.0, 0.0, 2.0]);
        let vals = stage1_values(&s1.problem, &y, &x, 0.5, 0.5);
        let got = s1.problem.constraints()[0].expr.eval(&vals);
        let (s, c) = aug.theta.sin_cos();
        let scaled = m(2, 2, &[1.0 / s, -1.0 / c, 1.0 / c, 1.0 / s]);
        let nc = &sel.n_c_basis;
        let nominal = sym(&kron(&scaled, &(nc.transpose() * &aug.a0 * &y * nc)));
        let mut want = Matrix::zeros(10, 10);
        want.view_mut((0, 0), (2, 2)).copy_from(&nominal);
        for i in 2..10 {
            want[(i, i)] = -0.5;
        }
        assert!(max_abs(&(got - want)) <= 1e-12);
    }

    #[test]
    fn degenerate_theta_rejected() {
        let mut plant = example_plant();
        plant.alpha = 1.0 + 1e-8;
        let aug = augment(&plant, 2).unwrap();
        let sel = build_selectors(&aug, 1e-12).unwrap();
        assert!(matches!(assemble_stage1(&aug, &sel), Err(SynthesisError::DegenerateTheta(_))));
    }

    #[test]
    fn square_input_makes_control_inequality_vacuous() {
        let a = IntervalMatrix::degenerate(m(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let b = IntervalMatrix::degenerate(Matrix::identity(2, 2));
        let c = IntervalMatrix::degenerate(m(1, 2, &[1.0, 0.0]));
        let plant = UncertainPlant::new(a, b, c, 1.2).unwrap();
        let aug = augment(&plant, 2).unwrap();
        let s1 = assemble_stage1(&aug, &build_selectors(&aug, 1e-12).unwrap()).unwrap();
        assert_eq!(s1.vacuous, vec![STAGE1_CONTROL]);
    }

    fn stage2_values(p: &LmiProblem, k: &Matrix, etas: [f64; 5]) -> Vec<Matrix> {
        let mut v = vec![k.clone()];
        v.extend(etas.iter().map(|e| m(1, 1, &[*e])));
        assert_eq!(v.len(), p.vars().len());
        v
    }

    #[test]
    fn stage2_shape_and_linearity() {
        let aug = augment(&example_plant(), 2).unwrap();
        let x_cl = Matrix::identity(4, 4) + Matrix::from_fn(4, 4, |i, j| if i != j { 0.1 } else { 0.0 });
        let s2 = assemble_stage2(&aug, &x_cl).unwrap();
        let expr = &s2.problem.constraints()[0].expr;
        assert_eq!(expr.shape(), (32, 32));
        let k = Matrix::from_fn(3, 3, |i, j| (i as f64 - j as f64) * 0.3 + 0.1);
        let etas = [0.5, 0.7, 1.1, 1.3, 0.9];
        let at0 = expr.eval(&stage2_values(&s2.problem, &Matrix::zeros(3, 3), etas));
        let at1 = expr.eval(&stage2_values(&s2.problem, &k, etas));
        let at2 = expr.eval(&stage2_values(&s2.problem, &(&k * 2.0), etas));
        assert!(max_abs(&(&at2 - &at1 - (&at1 - &at0))) <= 1e-12);
    }

    #[test]
    fn stage2_certain_output_has_zero_cross_border() {
        let aug = augment(&example_plant(), 2).unwrap();
        let s2 = assemble_stage2(&aug, &Matrix::identity(4, 4)).unwrap();
        let k = Matrix::from_fn(3, 3, |i, j| 1.0 + i as f64 - 0.5 * j as f64);
        let val = s2.problem.constraints()[0].expr.eval(&stage2_values(&s2.problem, &k, [1.0; 5]));
        // rows of the C channel and the cross pair carry only their diagonal
        let tail = val.view((24, 0), (8, 32)).into_owned();
        let mut want = Matrix::zeros(8, 32);
        for i in 0..8 {
            want[(i, 24 + i)] = -1.0;
        }
        assert!(max_abs(&(tail - want)) <= 1e-15);
        let c_border = val.view((20, 0), (4, 20)).into_owned();
        assert!(max_abs(&c_border) <= 1e-15);
    }

    #[test]
    fn stage2_nominal_limit_is_output_feedback_inequality() {
        let mut plant = example_plant();
        plant.a = IntervalMatrix::degenerate(plant.a.midpoint_radius().mid);
        plant.b = IntervalMatrix::degenerate(plant.b.midpoint_radius().mid);
        let aug = augment(&plant, 2).unwrap();
        let x_cl = m(4, 4, &[2.0, 0.1, 0.0, 0.0, 0.1, 1.0, 0.2, 0.0, 0.0, 0.2, 1.5, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let s2 = assemble_stage2(&aug, &x_cl).unwrap();
        let k = Matrix::from_fn(3, 3, |i, j| 0.2 * i as f64 - 0.4 * j as f64 + 0.3);
        let val = s2.problem.constraints()[0].expr.eval(&stage2_values(&s2.problem, &k, [1.0; 5]));
        let a_cl = &aug.a0_hat + &aug.b0_hat * &k * &aug.c0_hat;
        let z = &x_cl * a_cl;
        let (s, c) = aug.theta.sin_cos();
        let zs = &z + z.transpose();
        let za = &z - z.transpose();
        let want = stack(&[&[&(&zs * s), &(&za * c)], &[&(-&za * c), &(&zs * s)]]);
        assert!(max_abs(&(val.view((0, 0), (8, 8)).into_owned() - want)) <= 1e-12);
        assert!(max_abs(&val.view((8, 0), (24, 8)).into_owned()) <= 1e-15);
    }

    #[test]
    fn stage2_rejects_indefinite_lyapunov_matrix() {
        let aug = augment(&example_plant(), 2).unwrap();
        assert!(assemble_stage2(&aug, &(-Matrix::identity(4, 4))).is_err());
        assert!(assemble_stage2(&aug, &Matrix::identity(3, 3)).is_err());
    }
}
