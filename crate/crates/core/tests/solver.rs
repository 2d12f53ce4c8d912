mod common;

use lowrank_control::coefficient::{GridSpec, SeparableCoefficient};
use lowrank_control::kronop::AssemblyOptions;
use lowrank_control::oracle::{dense_assemble, dense_solve_control, dense_solve_state, vectorize};
use lowrank_control::pcg::{
    solve_control_modified, solve_control_primal, solve_state, ControlProblem, Formulation, PrecondKind,
    SolveConfig,
};
use lowrank_control::rhs::GaussianRhs;
use lowrank_control::spectral::MultiplierConfig;
use nalgebra::DMatrix;

fn setup(n: usize) -> (ControlProblem, lowrank_control::lowrank::LowRankMatrix) {
    let grid = GridSpec::square(2, n).unwrap();
    let f = GaussianRhs::default().on(&grid);
    (ControlProblem::new(SeparableCoefficient::test2(), grid, AssemblyOptions::default()).unwrap(), f)
}

#[test]
fn modified_solution_matches_direct_solve() {
    let (problem, f) = setup(31);
    let cfg = SolveConfig::default();
    let mcfg = MultiplierConfig::default();
    for kind in [PrecondKind::S1, PrecondKind::S2] {
        let (u, stats) = solve_control_modified(&problem, &f, &cfg, kind, &mcfg, None).unwrap();
        assert!(stats.converged, "{kind:?}: {:?}", stats.failure);
        let dense = dense_assemble(&problem.coeff, &problem.grid, AssemblyOptions::default()).unwrap();
        let fv = vectorize(&f.to_dense().unwrap());
        let reference = dense_solve_control(&dense, 1.0, Formulation::Modified, &fv).unwrap();
        let err = common::rel_error(&u, &reference);
        assert!(err <= 1e-5, "{kind:?}: {err}");
    }
}

#[test]
fn low_rank_pcg_follows_dense_pcg() {
    let n = 15;
    let (problem, f) = setup(n);
    let cfg = SolveConfig { eps_pcg: 1e-9, eps_trunc: 1e-12, ..SolveConfig::default() };
    let mcfg = MultiplierConfig::default();
    let (u, stats) = solve_control_modified(&problem, &f, &cfg, PrecondKind::S2, &mcfg, None).unwrap();
    assert!(stats.converged);

    let a = common::dense_by_entries(&problem.operator);
    let s = &a * &a + DMatrix::identity(n * n, n * n);
    let p = problem.preconditioner(PrecondKind::S2, 1.0, &mcfg).unwrap().to_dense().unwrap();
    let b = &a * vectorize(&f.to_dense().unwrap());
    let (x, k) = common::dense_pcg(&s, &p, &b, 1e-9, 200);
    assert!(stats.iterations.abs_diff(k) <= 1, "low-rank {} vs dense {k}", stats.iterations);
    assert!(common::rel_error(&u, &x) <= 1e-7);
}

#[test]
fn primal_and_modified_agree() {
    let (problem, f) = setup(31);
    let cfg = SolveConfig::default();
    let mcfg = MultiplierConfig::default();
    let (um, _) = solve_control_modified(&problem, &f, &cfg, PrecondKind::S2, &mcfg, None).unwrap();
    let (up, stats) = solve_control_primal(&problem, &f, &cfg, PrecondKind::B2, &mcfg, None).unwrap();
    assert!(stats.converged, "{:?}", stats.failure);
    let (dm, dp) = (um.to_dense().unwrap(), up.to_dense().unwrap());
    let diff = (&dm - &dp).norm() / dm.norm();
    assert!(diff <= 1e-4, "{diff}");
    assert!(stats.inner_iterations > 0);
}

#[test]
fn state_recovery_matches_direct_solve() {
    let (problem, f) = setup(31);
    let cfg = SolveConfig::default();
    let (y, stats) = solve_state(&problem, &f, &cfg, &MultiplierConfig::default()).unwrap();
    assert!(stats.converged);
    let dense = dense_assemble(&problem.coeff, &problem.grid, AssemblyOptions::default()).unwrap();
    let reference = dense_solve_state(&dense, &vectorize(&f.to_dense().unwrap())).unwrap();
    assert!(common::rel_error(&y, &reference) <= 1e-6);
}

#[test]
fn rejects_mismatched_preconditioner_family() {
    let (problem, f) = setup(7);
    let cfg = SolveConfig::default();
    let mcfg = MultiplierConfig::default();
    assert!(solve_control_modified(&problem, &f, &cfg, PrecondKind::B2, &mcfg, None).is_err());
    assert!(solve_control_primal(&problem, &f, &cfg, PrecondKind::S1, &mcfg, None).is_err());
    let bad = SolveConfig { eps_trunc: 1e-6, ..cfg };
    assert!(solve_control_modified(&problem, &f, &bad, PrecondKind::S2, &mcfg, None).is_err());
}
