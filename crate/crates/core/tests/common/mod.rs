#![allow(dead_code)]

use lowrank_control::kronop::{Factor, KroneckerOperator};
use lowrank_control::lowrank::{CanonicalTensor3, LowRankMatrix};
use lowrank_control::oracle::multi_index;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_panel(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_lowrank(rng: &mut ChaCha8Rng, n1: usize, n2: usize, r: usize) -> LowRankMatrix {
    LowRankMatrix::new(random_panel(rng, n1, r), random_panel(rng, n2, r)).unwrap()
}

pub fn random_tensor3(rng: &mut ChaCha8Rng, n: [usize; 3], r: usize) -> CanonicalTensor3 {
    CanonicalTensor3::new(random_panel(rng, n[0], r), random_panel(rng, n[1], r), random_panel(rng, n[2], r)).unwrap()
}

pub fn random_factor(rng: &mut ChaCha8Rng, n: usize) -> Factor {
    match rng.random_range(0..3) {
        0 => Factor::Identity(n),
        1 => Factor::Diagonal(DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))),
        _ => Factor::Tridiagonal {
            diag: DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)),
            off: DVector::from_fn(n.saturating_sub(1), |_, _| rng.random_range(-2.0..2.0)),
        },
    }
}

pub fn random_operator(rng: &mut ChaCha8Rng, sizes: &[usize], terms: usize) -> KroneckerOperator {
    let t = (0..terms).map(|_| sizes.iter().map(|&n| random_factor(rng, n)).collect()).collect();
    KroneckerOperator::new(t).unwrap()
}

/// Dense matrix of a Kronecker operator built entry by entry from the
/// long-index map, without any Kronecker-product routine.
pub fn dense_by_entries(op: &KroneckerOperator) -> DMatrix<f64> {
    let sizes = op.sizes().to_vec();
    let total: usize = sizes.iter().product();
    let dense: Vec<Vec<DMatrix<f64>>> =
        op.terms().iter().map(|t| t.iter().map(|f| f.to_dense()).collect()).collect();
    DMatrix::from_fn(total, total, |p, q| {
        let ip = multi_index(p, &sizes);
        let iq = multi_index(q, &sizes);
        dense
            .iter()
            .map(|term| term.iter().enumerate().map(|(m, f)| f[(ip[m], iq[m])]).product::<f64>())
            .sum()
    })
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub struct SpectralCheck {
    pub n: usize,
    pub a_pencil: (f64, f64),
    pub a_bounds: (f64, f64),
    pub s_condition: f64,
    pub s_bound: f64,
    pub b_condition: f64,
    pub b_bound: f64,
}

fn spd_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().cholesky().expect("SPD").inverse()
}

/// Exact pencil spectra of `(A, A₂)`, `(A² + I, A₂² + I)` and
/// `(A + A⁻¹, A₂ + A₂⁻¹)` on an `n × n` grid.
pub fn spectral_check(coeff: &lowrank_control::coefficient::SeparableCoefficient, n: usize) -> SpectralCheck {
    use lowrank_control::coefficient::GridSpec;
    use lowrank_control::kronop::{assemble_stiffness, AssemblyOptions};
    use lowrank_control::oracle::generalized_eigenvalues;
    use lowrank_control::spectral::{build_a2, compute_averaged_data};

    let grid = GridSpec::square(2, n).unwrap();
    let opts = AssemblyOptions::default();
    let avg = compute_averaged_data(coeff, &grid, opts).unwrap();
    let a = dense_by_entries(&assemble_stiffness(coeff, &grid, opts).unwrap());
    let a2 = dense_by_entries(&build_a2(&grid, coeff, &avg).unwrap());
    let id = DMatrix::<f64>::identity(n * n, n * n);

    let extremes = |ev: Vec<f64>| (ev[0], *ev.last().unwrap());
    let a_pencil = extremes(generalized_eigenvalues(&a, &a2).unwrap());
    let s = extremes(generalized_eigenvalues(&(&a * &a + &id), &(&a2 * &a2 + &id)).unwrap());
    let b = extremes(generalized_eigenvalues(&(&a + spd_inverse(&a)), &(&a2 + spd_inverse(&a2))).unwrap());
    SpectralCheck {
        n,
        a_pencil,
        a_bounds: avg.a2_equivalence_bounds(),
        s_condition: s.1 / s.0,
        s_bound: avg.s2_condition_bound(),
        b_condition: b.1 / b.0,
        b_bound: avg.b2_condition_bound(),
    }
}

impl SpectralCheck {
    /// All measured quantities inside their bounds, with relative `slack` on
    /// the estimates.
    pub fn holds(&self, slack: f64) -> bool {
        self.a_pencil.0 >= self.a_bounds.0 * (1.0 - slack)
            && self.a_pencil.1 <= self.a_bounds.1 * (1.0 + slack)
            && self.s_condition <= self.s_bound * (1.0 + slack)
            && self.b_condition <= self.b_bound * (1.0 + slack)
    }
}

/// `cond(A² + I)` for the FD-scaled stiffness on `n × n`, from the exact
/// spectrum of `A`.
pub fn squared_condition(coeff: &lowrank_control::coefficient::SeparableCoefficient, n: usize) -> f64 {
    use lowrank_control::coefficient::GridSpec;
    use lowrank_control::kronop::{assemble_stiffness, AssemblyOptions, Scaling};
    let grid = GridSpec::square(2, n).unwrap();
    let opts = AssemblyOptions { scaling: Scaling::FiniteDifference, ..Default::default() };
    let a = dense_by_entries(&assemble_stiffness(coeff, &grid, opts).unwrap());
    let ev = a.symmetric_eigenvalues();
    let f = |l: f64| l * l + 1.0;
    f(ev.max()) / f(ev.min())
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Textbook preconditioned CG on dense matrices; returns the iterate and the
/// number of iterations to reach `‖r‖ ≤ tol ‖b‖`.
pub fn dense_pcg(
    s: &DMatrix<f64>,
    p: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
    k_max: usize,
) -> (DVector<f64>, usize) {
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut z = p * &r;
    let mut d = z.clone();
    let mut rz = r.dot(&z);
    for k in 1..=k_max {
        let sd = s * &d;
        let alpha = rz / d.dot(&sd);
        x.axpy(alpha, &d, 1.0);
        r.axpy(-alpha, &sd, 1.0);
        if r.norm() <= tol * b.norm() {
            return (x, k);
        }
        z = p * &r;
        let rz_new = r.dot(&z);
        d = &z + &d * (rz_new / rz);
        rz = rz_new;
    }
    (x, k_max)
}

/// Relative ℓ₂ distance between a low-rank solution and a dense vector in the
/// row-major vectorization.
pub fn rel_error(u: &LowRankMatrix, reference: &DVector<f64>) -> f64 {
    let v = lowrank_control::oracle::vectorize(&u.to_dense().unwrap());
    (v - reference).norm() / reference.norm()
}

/// Graded random low-rank matrices, so truncation has something to remove.
pub fn lowrank_strategy() -> impl proptest::strategy::Strategy<Value = LowRankMatrix> {
    use proptest::strategy::Strategy;
    (2usize..20, 2usize..20, 1usize..8, proptest::num::u64::ANY, -6i32..3).prop_map(|(n1, n2, r, seed, decay)| {
        let mut g = rng(seed);
        let (mut l, right) = random_lowrank(&mut g, n1, n2, r).into_panels();
        for j in 0..r {
            l.column_mut(j).scale_mut(10f64.powi(decay * j as i32 / 2));
        }
        LowRankMatrix::new(l, right).unwrap()
    })
}

fn dense_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Projection, error bound, optimality and orthogonality of one truncation,
/// checked against a dense SVD.
pub fn check_truncation(x: &LowRankMatrix, eps: f64) -> Result<(), String> {
    use lowrank_control::lowrank::{axpy, inner};
    let dense = x.to_dense().unwrap();
    let norm = dense.norm();
    let t = x.truncate(eps, None);
    let td = t.to_dense().unwrap();
    let err = (&dense - &td).norm();
    if err > eps * norm * (1.0 + 1e-8) + 1e-13 * norm {
        return Err(format!("error {err} above bound {}", eps * norm));
    }
    let s = dense_singular_values(&dense);
    let tail = s[t.rank().min(s.len())..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if (err - tail).abs() > 1e-10 * norm + 1e-12 * tail {
        return Err(format!("error {err} differs from the discarded tail {tail}"));
    }
    let tt = t.truncate(eps, None);
    if tt.rank() > t.rank() || (tt.to_dense().unwrap() - &td).norm() > 1e-12 * norm {
        return Err("truncation is not a projection".into());
    }
    let (n1, n2) = x.shape();
    if t.rank() > x.rank().min(n1).min(n2) {
        return Err(format!("rank {} exceeds the input rank", t.rank()));
    }
    let cross = inner(&axpy(-1.0, &t, x).unwrap(), &t).unwrap();
    if cross.abs() > 1e-10 * norm * norm {
        return Err(format!("discarded part not orthogonal: {cross}"));
    }
    Ok(())
}

/// `⟨x, y⟩` and `‖x‖` from the factored forms against dense evaluation.
pub fn check_inner(x: &LowRankMatrix, y: &LowRankMatrix) -> Result<(), String> {
    let lhs = lowrank_control::lowrank::inner(x, y).unwrap();
    let rhs = x.to_dense().unwrap().dot(&y.to_dense().unwrap());
    if (lhs - rhs).abs() > 1e-12 * x.norm() * y.norm() {
        return Err(format!("inner product {lhs} vs dense {rhs}"));
    }
    if (x.norm() - x.to_dense().unwrap().norm()).abs() > 1e-12 * x.norm() {
        return Err("norm differs from the dense norm".into());
    }
    Ok(())
}

/// Worst relative error of the factored apply against the entrywise dense
/// Kronecker matrix over random 2D (`d = 2`) or 3D operators.
pub fn matvec_worst(seed: u64, d: usize, trials: usize) -> f64 {
    use lowrank_control::oracle::vectorize;
    let mut g = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let terms = g.random_range(1..=4);
        let r = g.random_range(1..=5);
        let (y, reference) = if d == 2 {
            let (n1, n2) = (g.random_range(1..=31), g.random_range(1..=31));
            let op = random_operator(&mut g, &[n1, n2], terms);
            let x = random_lowrank(&mut g, n1, n2, r);
            let y = vectorize(&op.apply(&x).unwrap().to_dense().unwrap());
            (y, dense_by_entries(&op) * vectorize(&x.to_dense().unwrap()))
        } else {
            let n = [g.random_range(1..=9), g.random_range(1..=9), g.random_range(1..=9)];
            let op = random_operator(&mut g, &n, terms);
            let x = random_tensor3(&mut g, n, r);
            let y = op.apply_3d(&x).unwrap().to_dense().unwrap();
            (y, dense_by_entries(&op) * x.to_dense().unwrap())
        };
        if reference.norm() > 0.0 {
            worst = worst.max((y - &reference).norm() / reference.norm());
        } else {
            worst = worst.max(y.norm());
        }
    }
    worst
}
