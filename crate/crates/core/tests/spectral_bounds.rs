mod common;

use lowrank_control::coefficient::{mesh_size, GridSpec, SeparableCoefficient};
use lowrank_control::kronop::AssemblyOptions;
use lowrank_control::oracle::estimate_condition;
use lowrank_control::pcg::{ControlProblem, PrecondKind};
use lowrank_control::spectral::MultiplierConfig;

#[test]
fn pencil_spectra_within_bounds() {
    for n in [15, 31] {
        let c = common::spectral_check(&SeparableCoefficient::test2(), n);
        assert!(c.holds(0.05), "n = {n}: pencil {:?} bounds {:?}, S {} ≤ {}, B {} ≤ {}",
            c.a_pencil, c.a_bounds, c.s_condition, c.s_bound, c.b_condition, c.b_bound);
        // The averaged operator is a real approximation, not the identity map.
        assert!(c.a_pencil.1 - c.a_pencil.0 > 1e-3);
    }
}

#[test]
fn test1_is_preconditioned_exactly() {
    let c = common::spectral_check(&SeparableCoefficient::test1(), 15);
    assert!((c.a_pencil.0 - 1.0).abs() < 1e-10 && (c.a_pencil.1 - 1.0).abs() < 1e-10);
    assert!((c.s_condition - 1.0).abs() < 1e-8);
}

#[test]
fn squared_operator_condition_grows_like_h_minus_4() {
    let ns = [7, 15, 31];
    let inv_h: Vec<f64> = ns.iter().map(|&n| 1.0 / mesh_size(n)).collect();
    let conds: Vec<f64> = ns.iter().map(|&n| common::squared_condition(&SeparableCoefficient::test2(), n)).collect();
    let slope = common::loglog_slope(&inv_h, &conds);
    assert!((slope - 4.0).abs() <= 0.5, "slope {slope}");
}

#[test]
fn lanczos_agrees_with_exact_condition() {
    let coeff = SeparableCoefficient::test2();
    let grid = GridSpec::square(2, 15).unwrap();
    let a = common::dense_by_entries(
        &lowrank_control::kronop::assemble_stiffness(&coeff, &grid, AssemblyOptions::default()).unwrap(),
    );
    let s = &a * &a + nalgebra::DMatrix::identity(225, 225);
    let mut op = |x: &nalgebra::DVector<f64>| &s * x;
    let est = estimate_condition(&mut op, 225, 225).unwrap();
    let exact = common::squared_condition(&coeff, 15);
    assert!(common::rel(est.condition, exact) < 1e-3, "{} vs {exact}", est.condition);
}

#[test]
fn low_rank_preconditioner_tracks_exact_inverse() {
    // The separable multiplier approximates (A₂² + I)⁻¹; the preconditioned
    // condition number stays close to the exact one.
    let coeff = SeparableCoefficient::test2();
    let n = 15;
    let grid = GridSpec::square(2, n).unwrap();
    let problem = ControlProblem::new(coeff.clone(), grid, AssemblyOptions::default()).unwrap();
    let pre = problem.preconditioner(PrecondKind::S2, 1.0, &MultiplierConfig::default()).unwrap();
    let p = pre.to_dense().unwrap();
    let a = common::dense_by_entries(&problem.operator);
    let s = &a * &a + nalgebra::DMatrix::identity(n * n, n * n);
    let pinv = p.clone().cholesky().expect("preconditioner is SPD").inverse();
    let ev = lowrank_control::oracle::generalized_eigenvalues(&s, &pinv).unwrap();
    let cond = ev.last().unwrap() / ev[0];
    let exact = common::spectral_check(&coeff, n).s_condition;
    assert!(cond <= exact * 1.05, "{cond} vs {exact}");
}
