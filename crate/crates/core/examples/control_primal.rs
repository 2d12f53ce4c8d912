//! Solve (γA + A⁻¹)u = F with a B-type preconditioner and embedded A⁻¹
//! solves, compare with the modified formulation, then recover the state.

use lowrank_control::coefficient::{GridSpec, SeparableCoefficient};
use lowrank_control::kronop::AssemblyOptions;
use lowrank_control::lowrank::axpy;
use lowrank_control::pcg::{solve_control_modified, solve_control_primal, solve_state, ControlProblem, PrecondKind, SolveConfig};
use lowrank_control::rhs::GaussianRhs;
use lowrank_control::spectral::MultiplierConfig;

fn main() -> lowrank_control::Result<()> {
    let grid = GridSpec::square(2, 63)?;
    let problem = ControlProblem::new(SeparableCoefficient::test2(), grid.clone(), AssemblyOptions::default())?;
    let f = GaussianRhs::default().on(&grid);
    let cfg = SolveConfig::default();
    let m = MultiplierConfig::default();
    let (up, sp) = solve_control_primal(&problem, &f, &cfg, PrecondKind::B2, &m, None)?;
    println!(
        "B2: {} outer iterations, {} inner iterations, rank {}, {:.3} s",
        sp.iterations,
        sp.inner_iterations,
        up.rank(),
        sp.total_time
    );
    let (um, sm) = solve_control_modified(&problem, &f, &cfg, PrecondKind::S2, &m, None)?;
    println!("S2: {} iterations, rank {}", sm.iterations, um.rank());
    let diff = axpy(-1.0, &um, &up)?.truncate(1e-15, None).norm() / um.norm();
    println!("primal vs modified: relative difference {diff:.2e}");

    let (y, st) = solve_state(&problem, &up, &cfg, &m)?;
    println!("state y = A⁻¹u: {} iterations, rank {}", st.iterations, y.rank());
    Ok(())
}
