mod common;

use lowrank_control::coefficient::{GridSpec, SeparableCoefficient};
use lowrank_control::kronop::{assemble_stiffness, AssemblyOptions, MassLumping, Scaling};
use lowrank_control::oracle::dense_assemble;

#[test]
fn factored_apply_matches_dense_kronecker_2d() {
    let worst = common::matvec_worst(2024, 2, 200);
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn factored_apply_matches_dense_kronecker_3d() {
    let worst = common::matvec_worst(77, 3, 200);
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn flat_and_factored_3d_paths_agree() {
    let mut rng = common::rng(3);
    let op = common::random_operator(&mut rng, &[4, 6, 5], 3);
    let x = common::random_tensor3(&mut rng, [4, 6, 5], 2);
    let flat = op.apply_vec(&x.to_dense().unwrap()).unwrap();
    let factored = op.apply_3d(&x).unwrap().to_dense().unwrap();
    assert!((flat - &factored).norm() <= 1e-13 * factored.norm());
    assert_eq!(op.apply_3d(&x).unwrap().rank(), 6);
}

#[test]
fn assembled_operator_matches_element_oracle() {
    for (coeff, n) in [(SeparableCoefficient::test1(), 9), (SeparableCoefficient::test2(), 13)] {
        for lumping in [MassLumping::IncludeBoundary, MassLumping::InteriorOnly] {
            for scaling in [Scaling::FiniteDifference, Scaling::FiniteElement] {
                let opts = AssemblyOptions { lumping, scaling };
                let grid = GridSpec::new(&[n, n + 2]).unwrap();
                let a = assemble_stiffness(&coeff, &grid, opts).unwrap();
                let reference = dense_assemble(&coeff, &grid, opts).unwrap().to_dense().unwrap();
                let dense = common::dense_by_entries(&a);
                assert!((&dense - &reference).abs().max() <= 1e-12 * reference.abs().max());
            }
        }
    }
}

#[test]
fn truncated_apply_stays_within_tolerance() {
    let mut rng = common::rng(5);
    let grid = GridSpec::square(2, 31).unwrap();
    let a = assemble_stiffness(&SeparableCoefficient::test2(), &grid, AssemblyOptions::default()).unwrap();
    let x = common::random_lowrank(&mut rng, 31, 31, 4);
    let exact = a.apply(&x).unwrap().to_dense().unwrap();
    let t = a.apply_truncated(&x, 1e-10).unwrap();
    assert!((t.to_dense().unwrap() - &exact).norm() <= 1e-10 * exact.norm() * (1.0 + 1e-6));
    assert!(t.rank() <= 24);
}
