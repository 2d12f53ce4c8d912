//! Build a grid function as a sum of separable terms and recompress it.

use lowrank_control::lowrank::{axpy, inner, LowRankMatrix};
use nalgebra::DVector;

fn main() -> lowrank_control::Result<()> {
    let n = 200;
    let x: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
    // exp(-(x-y)^2) expanded in 12 separable terms.
    let mut terms = Vec::new();
    let mut fact = 1.0;
    for k in 0..12 {
        if k > 0 {
            fact *= k as f64;
        }
        let c = 2f64.powi(k) / fact;
        let u = DVector::from_fn(n, |i, _| (-x[i] * x[i]).exp() * x[i].powi(k));
        let v = DVector::from_fn(n, |i, _| (-x[i] * x[i]).exp() * x[i].powi(k) * c);
        terms.push(LowRankMatrix::from_outer(&u, &v));
    }
    let mut sum = LowRankMatrix::zeros(n, n);
    for t in &terms {
        sum = axpy(1.0, t, &sum)?;
    }
    println!("raw rank {}", sum.rank());
    let sv = sum.singular_values();
    println!("leading singular values {:?}", &sv[..6.min(sv.len())]);
    for eps in [1e-4, 1e-8, 1e-12] {
        let t = sum.truncate(eps, None);
        // Norms of differences go through a recompression; the Gram-matrix
        // norm alone loses half the digits to cancellation.
        let err = axpy(-1.0, &t, &sum)?.truncate(1e-15, None).norm() / sum.norm();
        println!("eps {eps:.0e}: rank {:>2}, relative error {err:.2e}", t.rank());
    }
    let t = sum.truncate(0.0, Some(3));
    println!("rank-3 cap: <X, X3> / |X|^2 = {:.6}", inner(&sum, &t)? / sum.norm().powi(2));
    Ok(())
}
