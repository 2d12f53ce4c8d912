//! Solve (γA² + I)u = AF for the variable-coefficient test case with both
//! S-type preconditioners.

use lowrank_control::coefficient::{GridSpec, SeparableCoefficient};
use lowrank_control::kronop::AssemblyOptions;
use lowrank_control::pcg::{solve_control_modified, ControlProblem, PrecondKind, SolveConfig};
use lowrank_control::rhs::GaussianRhs;
use lowrank_control::spectral::MultiplierConfig;

fn main() -> lowrank_control::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(127);
    let grid = GridSpec::square(2, n)?;
    let problem = ControlProblem::new(SeparableCoefficient::test2(), grid.clone(), AssemblyOptions::default())?;
    let f = GaussianRhs::default().on(&grid);
    let cfg = SolveConfig::default();
    for kind in [PrecondKind::S1, PrecondKind::S2] {
        let (u, stats) = solve_control_modified(&problem, &f, &cfg, kind, &MultiplierConfig::default(), None)?;
        println!(
            "{} on {n}^2: {} iterations, rank {}, {:.3} s, recursive residual {:.1e}, recomputed {:.1e}",
            kind.name(),
            stats.iterations,
            u.rank(),
            stats.total_time,
            stats.residuals.last().copied().unwrap_or(f64::NAN),
            stats.final_residual
        );
    }
    Ok(())
}
