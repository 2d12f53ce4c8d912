//! Assemble the stiffness operator of a separable coefficient and apply it
//! in factored form, in 2D and 3D.

use lowrank_control::coefficient::{GridSpec, Preset, SeparableCoefficient, Univariate};
use lowrank_control::kronop::{assemble_stiffness, AssemblyOptions};
use lowrank_control::lowrank::{CanonicalTensor3, LowRankMatrix};
use lowrank_control::oracle::vectorize;
use nalgebra::DMatrix;

fn main() -> lowrank_control::Result<()> {
    let grid = GridSpec::square(2, 31)?;
    let coeff = SeparableCoefficient::test2();
    let a = assemble_stiffness(&coeff, &grid, AssemblyOptions::default())?;
    println!("2D operator: {} Kronecker terms on {:?}", a.num_terms(), a.sizes());

    let n = grid.n(0);
    let x = LowRankMatrix::new(
        DMatrix::from_fn(n, 3, |i, j| ((i + 1) as f64 * (j + 1) as f64 * 0.1).sin()),
        DMatrix::from_fn(n, 3, |i, j| ((i + 2 * j) as f64 * 0.05).cos()),
    )?;
    let y = a.apply(&x)?;
    println!("rank {} in, {} out, {} after truncation", x.rank(), y.rank(), y.truncate(1e-10, None).rank());
    let dense = a.to_dense()?;
    let reference = &dense * vectorize(&x.to_dense()?);
    let err = (vectorize(&y.to_dense()?) - &reference).norm() / reference.norm();
    println!("factored vs dense matvec: relative error {err:.2e}");

    let c3 = SeparableCoefficient::new(
        3,
        vec![vec![
            Univariate::Preset(Preset::XPlus2),
            Univariate::Constant(1.0),
            Univariate::Preset(Preset::FiveXSquaredPlus2),
        ]],
    )?;
    let grid3 = GridSpec::square(3, 9)?;
    let a3 = assemble_stiffness(&c3, &grid3, AssemblyOptions::default())?;
    let t = CanonicalTensor3::new(
        DMatrix::from_fn(9, 2, |i, j| (i + j) as f64),
        DMatrix::from_fn(9, 2, |i, j| 1.0 / (1 + i + j) as f64),
        DMatrix::from_fn(9, 2, |i, _| (i as f64).sqrt()),
    )?;
    let y3 = a3.apply_3d(&t)?;
    let reference = a3.to_dense()? * t.to_dense()?;
    let err = (y3.to_dense()? - &reference).norm() / reference.norm();
    println!("3D: rank {} -> {}, relative error {err:.2e}", t.rank(), y3.rank());
    Ok(())
}
