//! Estimate the discretization rate from solutions on three nested grids.

use lowrank_control::cascadic::{solve_level, GridLadder, ProblemSpec};
use lowrank_control::coefficient::SeparableCoefficient;
use lowrank_control::oracle::intergrid_ratio;
use lowrank_control::pcg::{PrecondKind, SolveConfig};

fn main() -> lowrank_control::Result<()> {
    let cfg = SolveConfig::default();
    for (name, coeff) in [("test 1", SeparableCoefficient::test1()), ("test 2", SeparableCoefficient::test2())] {
        let spec = ProblemSpec::new(coeff, PrecondKind::S2);
        let ladder = GridLadder::new(5, 8)?;
        let mut sols = Vec::new();
        for g in ladder.grids()? {
            sols.push(solve_level(&spec, &g, &cfg, None)?.0);
        }
        for w in sols.windows(3) {
            let c = intergrid_ratio(&w[0], &w[1], &w[2])?;
            println!("{name}: c_h on {}^2 = {c:.4} (rate {:.3})", w[1].shape().0, c.log2());
        }
    }
    Ok(())
}
