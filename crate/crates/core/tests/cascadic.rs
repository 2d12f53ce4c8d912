mod common;

use lowrank_control::cascadic::{
    cascadic_solve, inject_lowrank, prolongate_lowrank, solve_level, CascadicOptions, GridLadder, ProblemSpec,
};
use lowrank_control::coefficient::SeparableCoefficient;
use lowrank_control::oracle::intergrid_ratio;
use lowrank_control::pcg::{PrecondKind, SolveConfig};

#[test]
fn prolongation_then_injection_is_identity() {
    let mut rng = common::rng(11);
    let x = common::random_lowrank(&mut rng, 15, 31, 3);
    let back = inject_lowrank(&prolongate_lowrank(&x));
    assert_eq!(back.shape(), (15, 31));
    let (a, b) = (x.to_dense().unwrap(), back.to_dense().unwrap());
    assert!((&a - &b).norm() <= 1e-13 * a.norm());
    assert_eq!(prolongate_lowrank(&x).shape(), (31, 63));
}

#[test]
fn cascadic_start_saves_iterations() {
    let spec = ProblemSpec::new(SeparableCoefficient::test2(), PrecondKind::S2);
    let cfg = SolveConfig::default();
    let ladder = GridLadder::new(4, 7).unwrap();
    let result = cascadic_solve(&spec, &ladder, &cfg, &CascadicOptions::default()).unwrap();
    assert_eq!(result.levels.len(), 4);
    let top = result.levels.last().unwrap();
    assert!(top.stats.converged);
    let (_, unigrid) = solve_level(&spec, &top.grid, &cfg, None).unwrap();
    assert!(top.stats.iterations < unigrid.iterations, "{} vs {}", top.stats.iterations, unigrid.iterations);
    let acc: f64 = result.levels.iter().map(|l| l.stats.total_time).sum();
    assert!((result.accumulated_time - acc).abs() <= 1e-12 * acc.max(1.0));

    let capped = cascadic_solve(&spec, &ladder, &cfg, &CascadicOptions { initial_rank: Some(2) }).unwrap();
    assert_eq!(capped.levels[1].stats.initial_rank.min(2), capped.levels[1].stats.initial_rank);
}

#[test]
fn second_order_convergence_of_the_discretization() {
    let spec = ProblemSpec::new(SeparableCoefficient::test2(), PrecondKind::S2);
    let cfg = SolveConfig::default();
    let u: Vec<_> = (5..=7)
        .map(|l| solve_level(&spec, &GridLadder::new(5, 7).unwrap().grid(l).unwrap(), &cfg, None).unwrap().0)
        .collect();
    let c = intergrid_ratio(&u[0], &u[1], &u[2]).unwrap();
    assert!((3.8..=4.2).contains(&c), "{c}");
}
