//! Averaged coefficient data, spectral bounds and the separable
//! preconditioners built from them.

use lowrank_control::coefficient::{GridSpec, SeparableCoefficient};
use lowrank_control::kronop::AssemblyOptions;
use lowrank_control::pcg::{ControlProblem, PrecondKind};
use lowrank_control::spectral::{MultiplierConfig, MultiplierMethod};

fn main() -> lowrank_control::Result<()> {
    let grid = GridSpec::square(2, 127)?;
    let problem = ControlProblem::new(SeparableCoefficient::test2(), grid, AssemblyOptions::default())?;
    let avg = &problem.averaged;
    println!("q_A = {:.4}, q_D = {:.4}", avg.q_a, avg.q_d);
    println!("anisotropy a0 = {:?}", avg.anisotropy);
    println!("A ~ A2 within {:?}", avg.a2_equivalence_bounds());
    println!("A ~ A1 within {:?}", avg.a1_equivalence_bounds());
    println!(
        "condition bounds: S1 {:.3}, S2 {:.3}, B1 {:.3}, B2 {:.3}",
        avg.s1_condition_bound(),
        avg.s2_condition_bound(),
        avg.b1_condition_bound(),
        avg.b2_condition_bound()
    );
    // Cross approximation and SVD stop on a Frobenius tolerance, which the
    // large low-frequency entries dominate; the sampled error is entrywise.
    for method in [MultiplierMethod::ExponentialSum, MultiplierMethod::CrossApproximation, MultiplierMethod::Svd] {
        let cfg = MultiplierConfig { method, ..MultiplierConfig::default() };
        for kind in [PrecondKind::S1, PrecondKind::S2] {
            let p = problem.preconditioner(kind, 1.0, &cfg)?;
            println!(
                "{:?} {}: {} separable terms, sampled relative error {:.2e}, sine basis {}",
                method,
                kind.name(),
                p.multiplier().rank(),
                p.multiplier().sampled_error,
                p.basis().dims.iter().all(|b| b.is_sine())
            );
        }
    }
    Ok(())
}
