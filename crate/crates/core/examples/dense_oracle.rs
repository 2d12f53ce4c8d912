//! Cross-check the low-rank solver against direct solves on a small grid and
//! estimate condition numbers with Lanczos.

use lowrank_control::coefficient::{GridSpec, SeparableCoefficient};
use lowrank_control::kronop::AssemblyOptions;
use lowrank_control::oracle::{dense_assemble, dense_solve_control, estimate_condition, vectorize};
use lowrank_control::pcg::{solve_control_modified, ControlProblem, Formulation, PrecondKind, SolveConfig};
use lowrank_control::rhs::GaussianRhs;
use lowrank_control::spectral::MultiplierConfig;
use nalgebra::DVector;

fn main() -> lowrank_control::Result<()> {
    let grid = GridSpec::square(2, 31)?;
    let coeff = SeparableCoefficient::test2();
    let opts = AssemblyOptions::default();
    let reference = dense_assemble(&coeff, &grid, opts)?;
    let f = GaussianRhs::default().on(&grid);
    let fv = vectorize(&f.to_dense()?);
    let direct = dense_solve_control(&reference, 1.0, Formulation::Modified, &fv)?;

    let problem = ControlProblem::new(coeff, grid, opts)?;
    let (u, stats) =
        solve_control_modified(&problem, &f, &SolveConfig::default(), PrecondKind::S2, &MultiplierConfig::default(), None)?;
    let err = (vectorize(&u.to_dense()?) - &direct).norm() / direct.norm();
    println!("31^2: {} iterations, relative error vs direct solve {err:.2e}", stats.iterations);

    let a = reference.to_dense()?;
    let m = &a * &a + nalgebra::DMatrix::identity(a.nrows(), a.ncols());
    let mut op = |x: &DVector<f64>| &m * x;
    let est = estimate_condition(&mut op, m.nrows(), 300)?;
    println!(
        "cond(A² + I) ≈ {:.3e} after {} Lanczos steps (converged: {})",
        est.condition, est.iterations, est.converged
    );
    Ok(())
}
