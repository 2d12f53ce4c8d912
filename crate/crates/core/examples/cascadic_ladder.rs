//! Coarse-to-fine solves with spline-prolongated initial guesses.

use lowrank_control::cascadic::{cascadic_solve, CascadicOptions, GridLadder, ProblemSpec};
use lowrank_control::coefficient::SeparableCoefficient;
use lowrank_control::pcg::{PrecondKind, SolveConfig};

fn main() -> lowrank_control::Result<()> {
    let l_max: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let spec = ProblemSpec::new(SeparableCoefficient::test2(), PrecondKind::S2);
    let ladder = GridLadder::new(5, l_max)?;
    let cfg = SolveConfig::default();
    let result = cascadic_solve(&spec, &ladder, &cfg, &CascadicOptions::default())?;
    println!("{:>8} {:>5} {:>10} {:>10} {:>5} {:>8}", "grid", "iter", "time", "accum.", "rank", "x0 rank");
    for l in &result.levels {
        println!(
            "{:>8} {:>5} {:>10.4} {:>10.4} {:>5} {:>8}",
            format!("{}^2", l.grid.n(0)),
            l.stats.iterations,
            l.stats.total_time,
            l.stats.accumulated_time,
            l.solution.rank(),
            l.stats.initial_rank
        );
    }
    Ok(())
}
