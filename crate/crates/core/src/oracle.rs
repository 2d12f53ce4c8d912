//! Reference implementations for verification on small grids.
//!
//! Assembly here goes through the consistent FE mass matrix and an element
//! loop, independently of the Kronecker path in [`crate::kronop`]. Solves use
//! banded or dense Cholesky factorizations.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cascadic::{inject_lowrank, prolongate_lowrank};
use crate::coefficient::{mesh_size, GridSpec, SeparableCoefficient, Univariate};
use crate::error::{Error, Result};
use crate::kronop::{AssemblyOptions, MassLumping, Scaling};
use crate::lowrank::{axpy, LowRankMatrix};
use crate::pcg::Formulation;

/// Largest system materialized as a full `N × N` matrix.
pub const DENSE_CAP: usize = 4096;
/// Largest system handled in banded storage.
pub const BANDED_CAP: usize = 1_000_000;

/// Long index `i_d + n_d (i_{d−1} + n_{d−1}(…))` of a 0-based multi-index.
pub fn long_index(multi: &[usize], sizes: &[usize]) -> usize {
    multi.iter().zip(sizes).fold(0, |acc, (i, n)| acc * n + i)
}

pub fn multi_index(mut index: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (slot, n) in out.iter_mut().zip(sizes).rev() {
        *slot = index % n;
        index /= n;
    }
    out
}

/// Big-endian vectorization of a 2D grid function (`X[i1,i2]` at `i2 + i1·n2`).
pub fn vectorize(x: &DMatrix<f64>) -> DVector<f64> {
    let (n1, n2) = x.shape();
    DVector::from_fn(n1 * n2, |p, _| x[(p / n2, p % n2)])
}

pub fn unvectorize(v: &DVector<f64>, n1: usize, n2: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n1, n2, |i, j| v[j + i * n2])
}

/// Symmetric banded matrix, lower band stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        (i - j <= self.bw).then(|| i * (self.bw + 1) + self.bw - (i - j))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry inside the band");
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let a = self.get(i, j);
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.get(i, i) * x[i];
        }
        y
    }

    /// `self²` (bandwidth doubles).
    pub fn square(&self) -> BandedMatrix {
        let bw = (2 * self.bw).min(self.n.saturating_sub(1));
        let mut out = BandedMatrix::zeros(self.n, bw);
        for i in 0..self.n {
            for j in i.saturating_sub(bw)..=i {
                let lo = i.saturating_sub(self.bw);
                let hi = (j + self.bw).min(self.n - 1);
                let mut s = 0.0;
                for k in lo..=hi {
                    s += self.get(i, k) * self.get(k, j);
                }
                let slot = out.slot(i, j).expect("inside band");
                out.data[slot] = s;
            }
        }
        out
    }

    pub fn scaled_plus_identity(&self, alpha: f64, shift: f64) -> BandedMatrix {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= alpha);
        for i in 0..self.n {
            out.add(i, i, shift);
        }
        out
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.n > DENSE_CAP {
            return Err(Error::TooLarge { entries: self.n * self.n, cap: DENSE_CAP * DENSE_CAP });
        }
        Ok(DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j)))
    }

    /// Banded Cholesky `L Lᵀ`.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = self.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l.get(i, j);
                for k in i.saturating_sub(bw).max(j.saturating_sub(bw))..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                let slot = l.slot(i, j).expect("inside band");
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite(format!("pivot {s:e} at row {i}")));
                    }
                    l.data[slot] = s.sqrt();
                } else {
                    l.data[slot] = s / l.get(j, j);
                }
            }
        }
        Ok(BandedCholesky { l })
    }
}

/// Lower Cholesky factor in banded storage.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    l: BandedMatrix,
}

impl BandedCholesky {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let (n, bw) = (self.l.n, self.l.bw);
        let mut y = b.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l.get(k, i) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        y
    }
}

/// Assembled reference system.
#[derive(Clone, Debug)]
pub struct DenseProblem {
    pub sizes: Vec<usize>,
    pub matrix: BandedMatrix,
}

impl DenseProblem {
    pub fn unknowns(&self) -> usize {
        self.matrix.size()
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.matrix.to_dense()
    }
}

/// 1D matrices of one factor: element-loop stiffness (midpoint rule) and the
/// consistent Gauss-quadrature mass matrix lumped by row sums.
fn reference_1d(f: &Univariate, n: usize, lumping: MassLumping) -> (DMatrix<f64>, DVector<f64>) {
    let h = mesh_size(n);
    // Nodes 0..=n+1 including the boundary; eliminated afterwards.
    let mut k = DMatrix::<f64>::zeros(n + 2, n + 2);
    let mut m = DMatrix::<f64>::zeros(n + 2, n + 2);
    let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    for e in 0..=n {
        let a_mid = f.eval((e as f64 + 0.5) * h);
        let local_k = [[1.0, -1.0], [-1.0, 1.0]];
        for (p, q) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            k[(e + p, e + q)] += a_mid / h * local_k[p][q];
        }
        for t in gauss {
            let a = f.eval((e as f64 + t) * h);
            let phi = [1.0 - t, t];
            for p in 0..2 {
                for q in 0..2 {
                    m[(e + p, e + q)] += 0.5 * h * a * phi[p] * phi[q];
                }
            }
        }
    }
    let stiff = k.view((1, 1), (n, n)).into_owned();
    let mass = DVector::from_fn(n, |i, _| {
        let row = i + 1;
        let cols = match lumping {
            MassLumping::IncludeBoundary => 0..n + 2,
            MassLumping::InteriorOnly => 1..n + 1,
        };
        cols.map(|c| m[(row, c)]).sum()
    });
    (stiff, mass)
}

/// Assembles the stiffness operator entry by entry from reference 1D
/// matrices. The result uses the same scaling conventions as
/// [`crate::kronop::assemble_stiffness`].
pub fn dense_assemble(
    coeff: &SeparableCoefficient,
    grid: &GridSpec,
    opts: AssemblyOptions,
) -> Result<DenseProblem> {
    let d = coeff.dim();
    if grid.dim() != d {
        return Err(Error::ShapeMismatch(format!("{d}D coefficient on a {}D grid", grid.dim())));
    }
    let total = grid.unknowns();
    if total > BANDED_CAP {
        return Err(Error::TooLarge { entries: total, cap: BANDED_CAP });
    }
    let sizes = grid.sizes().to_vec();
    // Per term and dimension: (stiffness, mass diagonal), already scaled.
    let mut parts: Vec<Vec<(DMatrix<f64>, DVector<f64>)>> = Vec::new();
    for k in 0..coeff.rank() {
        let mut row = Vec::new();
        for l in 0..d {
            let h = grid.h(l);
            let (s, m) = reference_1d(coeff.factor(k, l), grid.n(l), opts.lumping);
            row.push(match opts.scaling {
                Scaling::FiniteDifference => (s / h, m / h),
                Scaling::FiniteElement => (s, m),
            });
        }
        parts.push(row);
    }
    let bw: usize = sizes[1..].iter().product();
    let mut a = BandedMatrix::zeros(total, bw);
    let offsets: Vec<Vec<isize>> = match d {
        2 => iproduct2(),
        _ => iproduct3(),
    };
    for p in 0..total {
        let ip = multi_index(p, &sizes);
        for off in &offsets {
            let jq: Option<Vec<usize>> = ip
                .iter()
                .zip(off)
                .zip(&sizes)
                .map(|((&i, &o), &n)| {
                    let j = i as isize + o;
                    (j >= 0 && (j as usize) < n).then_some(j as usize)
                })
                .collect();
            let Some(jq) = jq else { continue };
            let q = long_index(&jq, &sizes);
            if q > p {
                continue;
            }
            let mut v = 0.0;
            for term in &parts {
                for l in 0..d {
                    let mut prod = 1.0;
                    for m in 0..d {
                        let (s, mass) = &term[m];
                        prod *= if m == l {
                            s[(ip[m], jq[m])]
                        } else if ip[m] == jq[m] {
                            mass[ip[m]]
                        } else {
                            0.0
                        };
                    }
                    v += prod;
                }
            }
            if v != 0.0 {
                a.add(p, q, v);
            }
        }
    }
    Ok(DenseProblem { sizes, matrix: a })
}

fn iproduct2() -> Vec<Vec<isize>> {
    let mut v = Vec::new();
    for a in -1..=1 {
        for b in -1..=1 {
            v.push(vec![a, b]);
        }
    }
    v
}

fn iproduct3() -> Vec<Vec<isize>> {
    let mut v = Vec::new();
    for a in -1..=1 {
        for b in -1..=1 {
            for c in -1..=1 {
                v.push(vec![a, b, c]);
            }
        }
    }
    v
}

/// Direct solve of the control equation for the design `f` (vectorized).
///
/// `Modified` factors `γA² + I` (banded) and solves with `A f`; `Primal`
/// forms `γA + A⁻¹` densely from an explicit inverse and factors that.
pub fn dense_solve_control(
    problem: &DenseProblem,
    gamma: f64,
    formulation: Formulation,
    f: &DVector<f64>,
) -> Result<DVector<f64>> {
    if f.len() != problem.unknowns() {
        return Err(Error::ShapeMismatch(format!(
            "rhs of length {} for {} unknowns",
            f.len(),
            problem.unknowns()
        )));
    }
    match formulation {
        Formulation::Modified => {
            let s = problem.matrix.square().scaled_plus_identity(gamma, 1.0);
            Ok(s.cholesky()?.solve(&problem.matrix.matvec(f)))
        }
        Formulation::Primal => {
            let a = problem.to_dense()?;
            let chol = a.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite("stiffness".into()))?;
            let m = a * gamma + chol.inverse();
            let chol_m = m.cholesky().ok_or_else(|| Error::NotPositiveDefinite("γA + A⁻¹".into()))?;
            Ok(chol_m.solve(f))
        }
    }
}

/// Direct solve of `A y = u`.
pub fn dense_solve_state(problem: &DenseProblem, u: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(problem.matrix.cholesky()?.solve(u))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEstimate {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub condition: f64,
    pub iterations: usize,
    /// Extreme Ritz values changed by less than the tolerance in the last step
    /// or an invariant subspace was found.
    pub converged: bool,
}

/// Lanczos estimate of the extreme eigenvalues of a symmetric positive
/// definite operator, with full reorthogonalization.
pub fn estimate_condition(
    op: &mut dyn FnMut(&DVector<f64>) -> DVector<f64>,
    dim: usize,
    iters: usize,
) -> Result<ConditionEstimate> {
    if dim == 0 || iters == 0 {
        return Err(Error::InvalidArgument("empty operator or zero iterations".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut q = DVector::from_fn(dim, |_, _| 1.0 + 0.1 * rng.random_range(-1.0..1.0));
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev = (f64::NAN, f64::NAN);
    let mut converged = false;
    let steps = iters.min(dim);
    for k in 0..steps {
        let mut w = op(&basis[k]);
        let alpha = basis[k].dot(&w);
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let beta = w.norm();
        let (lo, hi) = ritz_extremes(&alphas, &betas);
        let scale = hi.abs().max(f64::MIN_POSITIVE);
        if beta <= 1e-12 * scale {
            converged = true;
            prev = (lo, hi);
            break;
        }
        if k > 2 && ((lo - prev.0) / lo).abs() < 1e-6 && ((hi - prev.1) / hi).abs() < 1e-6 {
            converged = true;
            prev = (lo, hi);
            break;
        }
        prev = (lo, hi);
        if k + 1 == steps {
            converged = steps == dim;
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    let (lambda_min, lambda_max) = prev;
    if !(lambda_min > 0.0) {
        return Err(Error::NotPositiveDefinite(format!("Ritz value {lambda_min:e}")));
    }
    Ok(ConditionEstimate {
        lambda_min,
        lambda_max,
        condition: lambda_max / lambda_min,
        iterations: alphas.len(),
        converged,
    })
}

fn ritz_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let mut t = DMatrix::from_diagonal(&DVector::from_column_slice(alphas));
    for (i, b) in betas.iter().take(k - 1).enumerate() {
        t[(i, i + 1)] = *b;
        t[(i + 1, i)] = *b;
    }
    let ev = t.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Eigenvalues of the pencil `(a, b)` with `b` SPD, ascending.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("pencil right-hand matrix".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular Cholesky factor".into()))?;
    let c = &linv * a * linv.transpose();
    let sym = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Intergrid ratio `‖P u_{2h} − u_h‖ / ‖u_h − I u_{h/2}‖` on the middle grid,
/// where `P` is the spline prolongation and `I` the injection.
pub fn intergrid_ratio(
    u_2h: &LowRankMatrix,
    u_h: &LowRankMatrix,
    u_h2: &LowRankMatrix,
) -> Result<f64> {
    let coarse = prolongate_lowrank(u_2h);
    let fine = inject_lowrank(u_h2);
    if coarse.shape() != u_h.shape() || fine.shape() != u_h.shape() {
        return Err(Error::ShapeMismatch(format!(
            "solutions on {:?}, {:?}, {:?} are not consecutive ladder levels",
            u_2h.shape(),
            u_h.shape(),
            u_h2.shape()
        )));
    }
    let num = axpy(-1.0, u_h, &coarse)?.truncate(1e-14, None).norm();
    let den = axpy(-1.0, &fine, u_h)?.truncate(1e-14, None).norm();
    if den == 0.0 {
        return Err(Error::Degenerate("fine and middle solutions coincide".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::Preset;
    use crate::kronop::assemble_stiffness;

    #[test]
    fn index_round_trip() {
        let sizes = [3, 5, 4];
        for p in 0..60 {
            assert_eq!(long_index(&multi_index(p, &sizes), &sizes), p);
        }
        assert_eq!(long_index(&[1, 2], &[3, 7]), 2 + 7);
    }

    #[test]
    fn assembly_matches_kronecker_path() {
        let grid = GridSpec::square(2, 15).unwrap();
        let c = SeparableCoefficient::test2();
        for lumping in [MassLumping::IncludeBoundary, MassLumping::InteriorOnly] {
            let opts = AssemblyOptions { lumping, ..Default::default() };
            let dense = dense_assemble(&c, &grid, opts).unwrap().to_dense().unwrap();
            let kron = assemble_stiffness(&c, &grid, opts).unwrap().to_dense().unwrap();
            assert!((&dense - &kron).abs().max() <= 1e-13 * kron.abs().max());
            assert_eq!(&dense - dense.transpose(), DMatrix::zeros(225, 225));
        }
    }

    #[test]
    fn mass_oracle_for_quadratic_coefficient() {
        let n = 7;
        let f = Univariate::Preset(Preset::FiveXSquaredPlus2);
        let (_, m) = reference_1d(&f, n, MassLumping::InteriorOnly);
        let crate::kronop::Factor::Diagonal(d) =
            crate::kronop::assemble_1d_lumped_mass(&f, n, mesh_size(n), MassLumping::InteriorOnly).unwrap()
        else {
            panic!()
        };
        assert!((m - d).abs().max() < 1e-12);
    }

    #[test]
    fn banded_cholesky_solves() {
        let grid = GridSpec::square(2, 9).unwrap();
        let p = dense_assemble(&SeparableCoefficient::test2(), &grid, AssemblyOptions::default()).unwrap();
        let x = DVector::from_fn(81, |i, _| (i as f64 * 0.1).sin());
        let b = p.matrix.matvec(&x);
        let y = dense_solve_state(&p, &b).unwrap();
        assert!((y - &x).norm() < 1e-10 * x.norm());
        let sq = p.matrix.square().to_dense().unwrap();
        let d = p.to_dense().unwrap();
        assert!((sq - &d * &d).abs().max() < 1e-8 * (&d * &d).abs().max());
    }

    #[test]
    fn laplacian_condition_number() {
        let n = 15;
        let a = crate::kronop::laplacian_1d(n).to_dense();
        let mut op = |x: &DVector<f64>| &a * x;
        let est = estimate_condition(&mut op, n, 50).unwrap();
        let c = (PI_OVER(n)).cos();
        let expected = (2.0 + 2.0 * c) / (2.0 - 2.0 * c);
        assert!((est.condition - expected).abs() < 1e-6 * expected);
        assert!((expected - 103.1).abs() < 0.1);

        let mut id = |x: &DVector<f64>| x.clone();
        assert!((estimate_condition(&mut id, 20, 50).unwrap().condition - 1.0).abs() < 1e-12);
    }

    #[allow(non_snake_case)]
    fn PI_OVER(n: usize) -> f64 {
        std::f64::consts::PI / (n as f64 + 1.0)
    }

    #[test]
    fn control_formulations_agree() {
        let grid = GridSpec::square(2, 15).unwrap();
        let p = dense_assemble(&SeparableCoefficient::test2(), &grid, AssemblyOptions::default()).unwrap();
        let f = DVector::from_fn(225, |i, _| (-(i as f64 - 112.0).powi(2) / 500.0).exp());
        let um = dense_solve_control(&p, 1.0, Formulation::Modified, &f).unwrap();
        let up = dense_solve_control(&p, 1.0, Formulation::Primal, &f).unwrap();
        assert!((&um - &up).norm() <= 1e-10 * um.norm());
        // γ → 0: u → A F.
        let u0 = dense_solve_control(&p, 1e-18, Formulation::Modified, &f).unwrap();
        let af = p.matrix.matvec(&f);
        assert!((u0 - &af).norm() < 1e-6 * af.norm());
    }

    #[test]
    fn synthetic_second_order_sequence() {
        // u_h = u* + C h² sampled exactly on each grid, u* and C separable.
        let sample = |n: usize| {
            let h = mesh_size(n);
            let x = DVector::from_fn(n, |i, _| ((i + 1) as f64 * h * std::f64::consts::PI).sin());
            let w = DVector::from_fn(n, |i, _| (i + 1) as f64 * h * (1.0 - (i + 1) as f64 * h));
            let exact = LowRankMatrix::from_outer(&x, &x);
            let pert = LowRankMatrix::from_outer(&w, &w).scaled(h * h);
            axpy(1.0, &pert, &exact).unwrap()
        };
        // Injection is exact, so only the coarse prolongation contributes
        // spline error; use a fine enough middle grid that it is negligible.
        let c = intergrid_ratio(&sample(63), &sample(127), &sample(255)).unwrap();
        assert!((c - 4.0).abs() < 0.05, "{c}");
        let u = sample(15);
        assert!(intergrid_ratio(&sample(7), &u, &sample(31)).is_ok());
        assert!(intergrid_ratio(&sample(7), &sample(31), &sample(63)).is_err());
    }
}
