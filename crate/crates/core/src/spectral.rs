//! Spectrally equivalent low-Kronecker-rank preconditioners.
//!
//! The stiffness operator is approximated by a separable sum `A₁` (weighted
//! Laplacians, diagonalized by the sine transform) or `A₂` (averaged 1D
//! stiffness matrices, diagonalized by dense eigendecomposition). A spectral
//! function `f` of the generator is then applied in the eigenbasis, where it is
//! the Hadamard product with `G[i,j] = f(λ_i + μ_j)`. `G` is replaced by a short
//! separable sum `Σ_k u_k v_kᵀ`, so one application costs `K` Hadamard scalings
//! of the transformed panels.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::coefficient::{mesh_size, GridSpec, SeparableCoefficient};
use crate::error::{Error, Result};
use crate::kronop::{
    assemble_1d_lumped_mass, assemble_stiffness, AssemblyOptions, Factor, KroneckerOperator,
    Scaling,
};
use crate::lowrank::{axpy, select_rank, sorted_svd, symmetric_eigen, LowRankMatrix};

/// Averaged coefficient data of a separable operator.
///
/// Indexing is `[k][ℓ]` (term, dimension).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragedData {
    pub scaling: Scaling,
    /// Mean of the (scaled) lumped mass diagonal.
    pub d0: Vec<Vec<f64>>,
    pub d_minus: Vec<Vec<f64>>,
    pub d_plus: Vec<Vec<f64>>,
    pub a_minus: Vec<Vec<f64>>,
    pub a_plus: Vec<Vec<f64>>,
    pub a0: Vec<Vec<f64>>,
    /// Agglomerated anisotropy factors `a⁰_ℓ = Σ_k a⁰_{ℓ,k} Π_{m≠ℓ} d⁰_{m,k}`.
    pub anisotropy: Vec<f64>,
    pub q_a: f64,
    pub q_d: f64,
}

impl AveragedData {
    pub fn dim(&self) -> usize {
        self.anisotropy.len()
    }

    pub fn rank(&self) -> usize {
        self.d0.len()
    }

    /// `Π_{m≠ℓ} d⁰_{m,k}`.
    pub fn mass_weight(&self, k: usize, l: usize) -> f64 {
        (0..self.dim()).filter(|&m| m != l).map(|m| self.d0[k][m]).product()
    }

    /// Bounds for the generalized eigenvalues of `(A, A₂)`.
    pub fn a2_equivalence_bounds(&self) -> (f64, f64) {
        let e = (self.dim() - 1) as i32;
        ((1.0 - self.q_d).powi(e), (1.0 + self.q_d).powi(e))
    }

    /// Bounds for the generalized eigenvalues of `(A, A₁)`.
    pub fn a1_equivalence_bounds(&self) -> (f64, f64) {
        let e = (self.dim() - 1) as i32;
        (
            (1.0 - self.q_a) * (1.0 - self.q_d).powi(e),
            (1.0 + self.q_a) * (1.0 + self.q_d).powi(e),
        )
    }

    /// Upper bound on `cond(B₂⁻¹B)` for `B = A + A⁻¹`.
    pub fn b2_condition_bound(&self) -> f64 {
        let e = (self.dim() - 1) as i32;
        let qd = self.q_d;
        let num = (1.0 + qd).powi(e).max((1.0 - qd).powi(-e));
        let den = (1.0 + qd).powi(-e).min((1.0 - qd).powi(e));
        num / den
    }

    /// Upper bound on `cond(B₁⁻¹B)`.
    pub fn b1_condition_bound(&self) -> f64 {
        let e = (self.dim() - 1) as i32;
        let (qa, qd) = (self.q_a, self.q_d);
        let num = ((1.0 + qa) * (1.0 + qd).powi(e)).max(1.0 / ((1.0 - qa) * (1.0 - qd).powi(e)));
        let den = (1.0 / ((1.0 + qa) * (1.0 + qd).powi(e))).min((1.0 - qa) * (1.0 - qd).powi(e));
        num / den
    }

    /// Upper bound on `cond(S₂⁻¹S)` for `S = A² + I`.
    pub fn s2_condition_bound(&self) -> f64 {
        let e = 2 * (self.dim() - 1) as i32;
        ((1.0 + self.q_d) / (1.0 - self.q_d)).powi(e)
    }

    /// Upper bound on `cond(S₁⁻¹S)`.
    pub fn s1_condition_bound(&self) -> f64 {
        let e = 2 * (self.dim() - 1) as i32;
        ((1.0 + self.q_a) / (1.0 - self.q_a)).powi(2) * ((1.0 + self.q_d) / (1.0 - self.q_d)).powi(e)
    }
}

fn spread(lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (hi - lo) / (hi + lo)
    } else {
        0.0
    }
}

/// Mean mass weights, coefficient bounds from `4n` samples, anisotropy
/// factors and the spread constants `q_A`, `q_D`.
pub fn compute_averaged_data(
    coeff: &SeparableCoefficient,
    grid: &GridSpec,
    opts: AssemblyOptions,
) -> Result<AveragedData> {
    let d = coeff.dim();
    if grid.dim() != d {
        return Err(Error::ShapeMismatch(format!("{d}D coefficient on a {}D grid", grid.dim())));
    }
    let r = coeff.rank();
    let mut out = AveragedData {
        scaling: opts.scaling,
        d0: vec![vec![0.0; d]; r],
        d_minus: vec![vec![0.0; d]; r],
        d_plus: vec![vec![0.0; d]; r],
        a_minus: vec![vec![0.0; d]; r],
        a_plus: vec![vec![0.0; d]; r],
        a0: vec![vec![0.0; d]; r],
        anisotropy: vec![0.0; d],
        q_a: 0.0,
        q_d: 0.0,
    };
    for k in 0..r {
        for l in 0..d {
            let n = grid.n(l);
            let h = grid.h(l);
            let f = coeff.factor(k, l);
            let Factor::Diagonal(mut diag) = assemble_1d_lumped_mass(f, n, h, opts.lumping)? else {
                unreachable!("lumped mass is diagonal")
            };
            if opts.scaling == Scaling::FiniteDifference {
                diag /= h;
            }
            out.d0[k][l] = diag.mean();
            out.d_minus[k][l] = diag.min();
            out.d_plus[k][l] = diag.max();

            let m = 4 * n;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..m {
                let x = if m == 1 { 0.5 } else { i as f64 / (m - 1) as f64 };
                let v = f.eval(x);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            out.a_minus[k][l] = lo;
            out.a_plus[k][l] = hi;
            out.a0[k][l] = 0.5 * (lo + hi);
            out.q_a = out.q_a.max(spread(lo, hi));
            out.q_d = out.q_d.max(spread(out.d_minus[k][l], out.d_plus[k][l]));
        }
    }
    for l in 0..d {
        out.anisotropy[l] = (0..r).map(|k| out.a0[k][l] * out.mass_weight(k, l)).sum();
    }
    Ok(out)
}

/// Unit-coefficient 1D Dirichlet Laplacian in the given scaling.
fn unit_laplacian(n: usize, scaling: Scaling) -> Factor {
    let h = mesh_size(n);
    let c = match scaling {
        Scaling::FiniteDifference => 1.0 / (h * h),
        Scaling::FiniteElement => 1.0 / h,
    };
    Factor::Tridiagonal {
        diag: DVector::from_element(n, 2.0 * c),
        off: DVector::from_element(n.saturating_sub(1), -c),
    }
}

fn slot_terms(sizes: &[usize], slots: Vec<Factor>) -> Result<KroneckerOperator> {
    let terms = slots
        .into_iter()
        .enumerate()
        .map(|(l, f)| {
            (0..sizes.len())
                .map(|m| if m == l { f.clone() } else { Factor::Identity(sizes[m]) })
                .collect()
        })
        .collect();
    KroneckerOperator::new(terms)
}

/// Anisotropic Laplacian `A₁ = Σ_ℓ a⁰_ℓ Δ_ℓ`.
pub fn build_a1(grid: &GridSpec, avg: &AveragedData) -> Result<KroneckerOperator> {
    if avg.dim() != grid.dim() {
        return Err(Error::ShapeMismatch("averaged data and grid dimension differ".into()));
    }
    let slots = (0..grid.dim())
        .map(|l| unit_laplacian(grid.n(l), avg.scaling).scaled(avg.anisotropy[l]))
        .collect();
    slot_terms(grid.sizes(), slots)
}

/// Averaged operator `A₂ = Σ_ℓ A⁰_ℓ` with
/// `A⁰_ℓ = Σ_k (Π_{m≠ℓ} d⁰_{m,k}) A_{ℓ,k}` in slot `ℓ`.
pub fn build_a2(
    grid: &GridSpec,
    coeff: &SeparableCoefficient,
    avg: &AveragedData,
) -> Result<KroneckerOperator> {
    let d = grid.dim();
    if avg.dim() != d || coeff.dim() != d || avg.rank() != coeff.rank() {
        return Err(Error::ShapeMismatch("averaged data does not match the coefficient".into()));
    }
    let opts = AssemblyOptions { scaling: avg.scaling, ..Default::default() };
    let full = assemble_stiffness(coeff, grid, opts)?;
    let mut slots: Vec<(DVector<f64>, DVector<f64>)> = (0..d)
        .map(|l| (DVector::zeros(grid.n(l)), DVector::zeros(grid.n(l).saturating_sub(1))))
        .collect();
    for (t, term) in full.terms().iter().enumerate() {
        let (k, l) = (t / d, t % d);
        let Factor::Tridiagonal { diag, off } = &term[l] else {
            unreachable!("stiffness slot is tridiagonal")
        };
        let w = avg.mass_weight(k, l);
        slots[l].0 += diag * w;
        slots[l].1 += off * w;
    }
    let slots = slots
        .into_iter()
        .map(|(diag, off)| Factor::Tridiagonal { diag, off })
        .collect();
    slot_terms(grid.sizes(), slots)
}

/// Orthonormal DST-I of length `n` through a complex FFT of length `2(n+1)`.
#[derive(Clone)]
pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SineTransform(n = {})", self.n)
    }
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `S · panel` with `S[k,j] = sqrt(2/(n+1)) sin((k+1)(j+1)π/(n+1))`.
    /// `S` is symmetric and orthogonal, so this is its own inverse.
    pub fn apply_panel(&self, panel: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        assert_eq!(panel.nrows(), n, "panel rows must match transform length");
        let len = 2 * (n + 1);
        let cols = panel.ncols();
        let mut buf = vec![Complex::new(0.0, 0.0); len * cols];
        for (c, col) in panel.column_iter().enumerate() {
            let chunk = &mut buf[c * len..(c + 1) * len];
            for (j, &x) in col.iter().enumerate() {
                chunk[j + 1] = Complex::new(x, 0.0);
                chunk[len - j - 1] = Complex::new(-x, 0.0);
            }
        }
        if cols > 0 {
            self.fft.process(&mut buf);
        }
        let scale = -0.5 * (2.0 / (n as f64 + 1.0)).sqrt();
        DMatrix::from_fn(n, cols, |k, c| scale * buf[c * len + k + 1].im)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let s = (2.0 / (n as f64 + 1.0)).sqrt();
        DMatrix::from_fn(n, n, |k, j| {
            s * (((k + 1) * (j + 1)) as f64 * PI / (n as f64 + 1.0)).sin()
        })
    }
}

/// Eigenbasis of one nontrivial generator slot.
#[derive(Clone, Debug)]
pub enum Basis1d {
    /// Constant-coefficient tridiagonal: sine eigenvectors.
    Sine { transform: SineTransform, lambda: Vec<f64> },
    /// General symmetric tridiagonal: `V` orthogonal, ascending `lambda`.
    Dense { v: DMatrix<f64>, lambda: Vec<f64> },
}

impl Basis1d {
    pub fn size(&self) -> usize {
        self.eigenvalues().len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        match self {
            Basis1d::Sine { lambda, .. } | Basis1d::Dense { lambda, .. } => lambda,
        }
    }

    pub fn is_sine(&self) -> bool {
        matches!(self, Basis1d::Sine { .. })
    }

    /// Coordinates in the eigenbasis: `Vᵀ · panel`.
    pub fn forward(&self, panel: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Basis1d::Sine { transform, .. } => transform.apply_panel(panel),
            Basis1d::Dense { v, .. } => v.tr_mul(panel),
        }
    }

    /// Back from eigen-coordinates: `V · panel`.
    pub fn backward(&self, panel: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Basis1d::Sine { transform, .. } => transform.apply_panel(panel),
            Basis1d::Dense { v, .. } => v * panel,
        }
    }

    /// Eigenvector matrix (columns ordered like the eigenvalues).
    pub fn vectors(&self) -> DMatrix<f64> {
        match self {
            Basis1d::Sine { transform, .. } => transform.to_dense(),
            Basis1d::Dense { v, .. } => v.clone(),
        }
    }
}

/// Per-dimension eigenbases of a separable generator `Σ_ℓ I ⊗ … ⊗ G_ℓ ⊗ … ⊗ I`.
#[derive(Clone, Debug)]
pub struct DiagonalizedBasis {
    pub dims: Vec<Basis1d>,
}

fn toeplitz_constants(diag: &DVector<f64>, off: &DVector<f64>) -> Option<(f64, f64)> {
    let b = diag[0];
    let c = if off.is_empty() { -1.0 } else { off[0] };
    let tol = 1e-13 * b.abs().max(c.abs());
    let const_diag = diag.iter().all(|x| (x - b).abs() <= tol);
    let const_off = off.iter().all(|x| (x - c).abs() <= tol);
    (const_diag && const_off && c < 0.0).then_some((b, c))
}

fn diagonalize_factor(f: &Factor) -> Result<Basis1d> {
    let n = f.size();
    if let Factor::Tridiagonal { diag, off } = f {
        if let Some((b, c)) = toeplitz_constants(diag, off) {
            let lambda: Vec<f64> = (1..=n)
                .map(|k| b + 2.0 * c * (k as f64 * PI / (n as f64 + 1.0)).cos())
                .collect();
            if lambda[0] <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!(
                    "generator slot has eigenvalue {}",
                    lambda[0]
                )));
            }
            return Ok(Basis1d::Sine { transform: SineTransform::new(n), lambda });
        }
    }
    let (lambda, v) = symmetric_eigen(&f.to_dense());
    if lambda[0] <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!(
            "generator slot has eigenvalue {}",
            lambda[0]
        )));
    }
    Ok(Basis1d::Dense { v, lambda })
}

/// Diagonalizes each dimension of a generator whose terms each carry exactly
/// one non-identity factor. Terms acting on the same slot are summed.
pub fn diagonalize(generator: &KroneckerOperator) -> Result<DiagonalizedBasis> {
    let d = generator.dim();
    let mut slots: Vec<Option<Factor>> = vec![None; d];
    for (t, term) in generator.terms().iter().enumerate() {
        let nontrivial: Vec<usize> = (0..d).filter(|&l| !term[l].is_identity()).collect();
        if nontrivial.len() != 1 {
            return Err(Error::NotSeparable(format!(
                "term {t} has {} non-identity factors",
                nontrivial.len()
            )));
        }
        let l = nontrivial[0];
        slots[l] = Some(match slots[l].take() {
            None => term[l].clone(),
            Some(prev) => add_factors(&prev, &term[l]),
        });
    }
    let dims = slots
        .into_iter()
        .enumerate()
        .map(|(l, f)| {
            let f = f.ok_or_else(|| Error::NotSeparable(format!("no term acts on dimension {l}")))?;
            diagonalize_factor(&f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiagonalizedBasis { dims })
}

fn add_factors(a: &Factor, b: &Factor) -> Factor {
    let parts = |f: &Factor| match f {
        Factor::Identity(n) => (DVector::from_element(*n, 1.0), DVector::zeros(n.saturating_sub(1))),
        Factor::Diagonal(d) => (d.clone(), DVector::zeros(d.len().saturating_sub(1))),
        Factor::Tridiagonal { diag, off } => (diag.clone(), off.clone()),
    };
    let (da, oa) = parts(a);
    let (db, ob) = parts(b);
    Factor::Tridiagonal { diag: da + db, off: oa + ob }
}

/// Scalar function applied to the generator spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralFunction {
    /// `1/s`
    Inverse,
    /// `1/(γs + 1/s)`
    BType,
    /// `1/(γs² + 1)`
    SType,
    /// `1`
    Identity,
}

impl SpectralFunction {
    pub fn eval(self, s: f64, gamma: f64) -> f64 {
        match self {
            SpectralFunction::Inverse => 1.0 / s,
            SpectralFunction::BType => s / (gamma * s * s + 1.0),
            SpectralFunction::SType => 1.0 / (gamma * s * s + 1.0),
            SpectralFunction::Identity => 1.0,
        }
    }
}

/// How the spectral-value table `G` is compressed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierMethod {
    /// `f(s) ≈ Σ w_k exp(−t_k s)` on the spectral interval, fitted for
    /// relative accuracy; each exponential separates exactly.
    #[default]
    ExponentialSum,
    /// Adaptive cross approximation with partial pivoting.
    CrossApproximation,
    /// Truncated SVD of the dense table.
    Svd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierConfig {
    pub method: MultiplierMethod,
    /// Maximal number of separable terms.
    pub rank_max: usize,
    /// Target accuracy (entrywise relative for exponential sums, relative
    /// Frobenius for cross approximation and SVD).
    pub tol: f64,
    /// Seed for the entries checked after compression.
    #[serde(default)]
    pub seed: u64,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self { method: MultiplierMethod::ExponentialSum, rank_max: 30, tol: 1e-5, seed: 0x5eed }
    }
}

/// `G ≈ U Vᵀ` with `U: n₁×K`, `V: n₂×K`.
#[derive(Clone, Debug)]
pub struct SeparableMultiplier {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    /// Largest relative error over the verification entries.
    pub sampled_error: f64,
    pub method: MultiplierMethod,
}

impl SeparableMultiplier {
    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.u.row(i).dot(&self.v.row(j))
    }
}

/// Exponential-sum fit of `f` on `[a, b]`: returns `(t, w, max relative error)`.
/// Minimum-norm least-squares solution, singular values below `rtol·σ₁` cut.
fn least_squares(a: DMatrix<f64>, b: &DVector<f64>, rtol: f64) -> DVector<f64> {
    let (u, s, v) = sorted_svd(a);
    let cut = s.first().copied().unwrap_or(0.0) * rtol;
    let mut x = DVector::zeros(v.nrows());
    for (j, sj) in s.iter().enumerate().take_while(|(_, sj)| **sj > cut) {
        x.axpy(u.column(j).dot(b) / sj, &v.column(j), 1.0);
    }
    x
}

pub fn fit_exponential_sum<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, k: usize) -> (Vec<f64>, Vec<f64>, f64) {
    if b <= a * (1.0 + 1e-12) {
        return (vec![0.0], vec![f(a)], 0.0);
    }
    let m = (20 * k).max(400);
    let xs: Vec<f64> = (0..m)
        .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (m - 1) as f64).exp())
        .collect();
    let fx: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut best = (Vec::new(), Vec::new(), f64::INFINITY);
    for c1 in [0.01, 0.05, 0.2] {
        for c2 in [3.0, 10.0, 30.0] {
            let (lo, hi) = ((c1 / b).ln(), (c2 / a).ln());
            let t: Vec<f64> = (0..k)
                .map(|j| if k == 1 { (lo + hi) / 2.0 } else { lo + (hi - lo) * j as f64 / (k - 1) as f64 })
                .map(f64::exp)
                .collect();
            let e = DMatrix::from_fn(m, k, |i, j| (-t[j] * xs[i]).exp() / fx[i]);
            let mut weights = vec![1.0 / m as f64; m];
            for _ in 0..20 {
                let lhs = DMatrix::from_fn(m, k, |i, j| e[(i, j)] * weights[i].sqrt());
                let rhs = DVector::from_fn(m, |i, _| weights[i].sqrt());
                let w = least_squares(lhs, &rhs, 1e-14);
                let resid: Vec<f64> = (0..m).map(|i| ((e.row(i) * &w)[0] - 1.0).abs()).collect();
                let err = resid.iter().copied().fold(0.0, f64::max);
                if !err.is_finite() {
                    break;
                }
                if err < best.2 {
                    best = (t.clone(), w.iter().copied().collect(), err);
                }
                let total: f64 = weights.iter().zip(&resid).map(|(w, r)| w * r).sum();
                if total <= 0.0 {
                    break;
                }
                for (w, r) in weights.iter_mut().zip(&resid) {
                    *w *= r / total;
                }
            }
        }
    }
    best
}

/// Term counts tried by the adaptive exponential-sum fit.
const EXP_SUM_LADDER: [usize; 10] = [4, 6, 8, 10, 12, 15, 18, 21, 25, 30];

fn exponential_sum_multiplier<F: Fn(f64) -> f64 + Copy>(
    f: F,
    lam: &[f64],
    mu: &[f64],
    cfg: &MultiplierConfig,
) -> SeparableMultiplier {
    let a = lam[0] + mu[0];
    let b = lam[lam.len() - 1] + mu[mu.len() - 1];
    let mut ladder: Vec<usize> = EXP_SUM_LADDER.iter().copied().filter(|&k| k < cfg.rank_max).collect();
    ladder.push(cfg.rank_max);
    let mut fit = (Vec::new(), Vec::new(), f64::INFINITY);
    for k in ladder {
        let candidate = fit_exponential_sum(f, a, b, k);
        let done = candidate.2 <= cfg.tol;
        if candidate.2 < fit.2 {
            fit = candidate;
        }
        if done {
            break;
        }
    }
    let (t, w, _) = fit;
    let k = t.len();
    let u = DMatrix::from_fn(lam.len(), k, |i, j| w[j] * (-t[j] * lam[i]).exp());
    let v = DMatrix::from_fn(mu.len(), k, |i, j| (-t[j] * mu[i]).exp());
    SeparableMultiplier { u, v, sampled_error: f64::NAN, method: MultiplierMethod::ExponentialSum }
}

fn svd_multiplier<F: Fn(f64) -> f64>(f: F, lam: &[f64], mu: &[f64], cfg: &MultiplierConfig) -> SeparableMultiplier {
    let g = DMatrix::from_fn(lam.len(), mu.len(), |i, j| f(lam[i] + mu[j]));
    let (u, s, v) = sorted_svd(g.clone());
    let keep = select_rank(&s, lam.len().min(mu.len()), cfg.tol, 0.0, Some(cfg.rank_max)).max(1);
    let mut uk = u.columns(0, keep).into_owned();
    for j in 0..keep {
        uk.column_mut(j).scale_mut(s[j]);
    }
    SeparableMultiplier {
        u: uk,
        v: v.columns(0, keep).into_owned(),
        sampled_error: f64::NAN,
        method: MultiplierMethod::Svd,
    }
}

/// ACA with partial pivoting; stops when the newest cross is below `tol`
/// relative to the running Frobenius estimate or after `rank_max` crosses.
fn aca_multiplier<F: Fn(f64) -> f64>(f: F, lam: &[f64], mu: &[f64], cfg: &MultiplierConfig) -> SeparableMultiplier {
    let (n1, n2) = (lam.len(), mu.len());
    let entry = |i: usize, j: usize| f(lam[i] + mu[j]);
    let mut us: Vec<DVector<f64>> = Vec::new();
    let mut vs: Vec<DVector<f64>> = Vec::new();
    let mut used_rows = vec![false; n1];
    let mut norm2 = 0.0;
    let mut row = 0usize;
    while us.len() < cfg.rank_max.min(n1).min(n2) {
        used_rows[row] = true;
        let mut r = DVector::from_fn(n2, |j, _| entry(row, j));
        for (u, v) in us.iter().zip(&vs) {
            r.axpy(-u[row], v, 1.0);
        }
        let (col, pivot) = r.iter().enumerate().fold((0, 0.0f64), |acc, (j, &x)| {
            if x.abs() > acc.1.abs() { (j, x) } else { acc }
        });
        if pivot == 0.0 {
            match used_rows.iter().position(|&u| !u) {
                Some(next) => {
                    row = next;
                    continue;
                }
                None => break,
            }
        }
        let v = r / pivot;
        let mut c = DVector::from_fn(n1, |i, _| entry(i, col));
        for (u, vv) in us.iter().zip(&vs) {
            c.axpy(-vv[col], u, 1.0);
        }
        let cross = c.norm_squared() * v.norm_squared();
        let mut mixed = 0.0;
        for (u, vv) in us.iter().zip(&vs) {
            mixed += u.dot(&c) * vv.dot(&v);
        }
        norm2 += cross + 2.0 * mixed;
        let next = c
            .iter()
            .enumerate()
            .filter(|(i, _)| !used_rows[*i])
            .fold((None, 0.0f64), |acc, (i, &x)| if x.abs() > acc.1 { (Some(i), x.abs()) } else { acc })
            .0;
        us.push(c);
        vs.push(v);
        if cross.sqrt() <= cfg.tol * norm2.max(0.0).sqrt() {
            break;
        }
        match next {
            Some(i) => row = i,
            None => break,
        }
    }
    let k = us.len().max(1);
    let mut u = DMatrix::zeros(n1, k);
    let mut v = DMatrix::zeros(n2, k);
    for (j, (uu, vv)) in us.iter().zip(&vs).enumerate() {
        u.set_column(j, uu);
        v.set_column(j, vv);
    }
    SeparableMultiplier { u, v, sampled_error: f64::NAN, method: MultiplierMethod::CrossApproximation }
}

/// Number of random table entries used to verify a multiplier.
pub const VERIFICATION_ENTRIES: usize = 100;

/// Column budget per recompression when applying a preconditioner.
const BATCH_COLUMNS: usize = 96;

/// Builds a separable approximation of `G[i,j] = f(λ_i + μ_j; γ)` and records
/// its largest relative error over 100 random entries plus the corners.
pub fn build_multiplier(
    f: SpectralFunction,
    gamma: f64,
    lam: &[f64],
    mu: &[f64],
    cfg: &MultiplierConfig,
) -> Result<SeparableMultiplier> {
    if lam.is_empty() || mu.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    if cfg.rank_max == 0 {
        return Err(Error::InvalidArgument("rank_max must be positive".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must be positive")));
    }
    let g = move |s: f64| f.eval(s, gamma);
    let (n1, n2) = (lam.len(), mu.len());
    let mut m = if f == SpectralFunction::Identity {
        SeparableMultiplier {
            u: DMatrix::from_element(n1, 1, 1.0),
            v: DMatrix::from_element(n2, 1, 1.0),
            sampled_error: 0.0,
            method: cfg.method,
        }
    } else if n2 <= cfg.rank_max || n1 <= cfg.rank_max {
        // Exact representation through the short side.
        let table = DMatrix::from_fn(n1, n2, |i, j| g(lam[i] + mu[j]));
        let (u, v) = if n2 <= n1 {
            (table, DMatrix::identity(n2, n2))
        } else {
            (DMatrix::identity(n1, n1), table.transpose())
        };
        SeparableMultiplier { u, v, sampled_error: 0.0, method: cfg.method }
    } else {
        match cfg.method {
            MultiplierMethod::ExponentialSum => exponential_sum_multiplier(g, lam, mu, cfg),
            MultiplierMethod::CrossApproximation => aca_multiplier(g, lam, mu, cfg),
            MultiplierMethod::Svd => svd_multiplier(g, lam, mu, cfg),
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries: Vec<(usize, usize)> = (0..VERIFICATION_ENTRIES)
        .map(|_| (rng.random_range(0..n1), rng.random_range(0..n2)))
        .collect();
    entries.extend([(0, 0), (n1 - 1, n2 - 1), (0, n2 - 1), (n1 - 1, 0)]);
    m.sampled_error = entries
        .into_iter()
        .map(|(i, j)| {
            let exact = g(lam[i] + mu[j]);
            ((m.entry(i, j) - exact) / exact).abs()
        })
        .fold(0.0, f64::max);
    Ok(m)
}

/// `f(generator)` applied in the generator eigenbasis through a separable
/// multiplier. Two-dimensional grids only.
#[derive(Clone, Debug)]
pub struct SpectralPreconditioner {
    basis: DiagonalizedBasis,
    multiplier: SeparableMultiplier,
    function: SpectralFunction,
    gamma: f64,
}

impl SpectralPreconditioner {
    pub fn function(&self) -> SpectralFunction {
        self.function
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn multiplier(&self) -> &SeparableMultiplier {
        &self.multiplier
    }

    pub fn basis(&self) -> &DiagonalizedBasis {
        &self.basis
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.basis.dims[0].size(), self.basis.dims[1].size())
    }

    /// Applies the preconditioner without truncation.
    pub fn apply_exact(&self, x: &LowRankMatrix) -> Result<LowRankMatrix> {
        self.apply_inner(x, None)
    }

    /// Applies the preconditioner and truncates to `eps` (relative).
    pub fn apply(&self, x: &LowRankMatrix, eps: f64) -> Result<LowRankMatrix> {
        self.apply_inner(x, Some(eps))
    }

    fn apply_inner(&self, x: &LowRankMatrix, eps: Option<f64>) -> Result<LowRankMatrix> {
        if x.shape() != self.shape() {
            return Err(Error::ShapeMismatch(format!(
                "preconditioner on {:?}, input of shape {:?}",
                self.shape(),
                x.shape()
            )));
        }
        let (n1, n2) = x.shape();
        if x.rank() == 0 {
            return Ok(LowRankMatrix::zeros(n1, n2));
        }
        let [b1, b2] = [&self.basis.dims[0], &self.basis.dims[1]];
        let lt = b1.forward(x.left());
        let rt = b2.forward(x.right());
        let r = x.rank();
        let k = self.multiplier.rank();
        let block = |t: usize, terms: usize| -> Result<LowRankMatrix> {
            let mut left = DMatrix::zeros(n1, r * terms);
            let mut right = DMatrix::zeros(n2, r * terms);
            for s in 0..terms {
                let u = self.multiplier.u.column(t + s);
                let v = self.multiplier.v.column(t + s);
                for c in 0..r {
                    let mut lc = left.column_mut(s * r + c);
                    for i in 0..n1 {
                        lc[i] = u[i] * lt[(i, c)];
                    }
                    let mut rc = right.column_mut(s * r + c);
                    for j in 0..n2 {
                        rc[j] = v[j] * rt[(j, c)];
                    }
                }
            }
            LowRankMatrix::new(left, right)
        };
        let z = match eps {
            None => block(0, k)?,
            Some(eps) if r * k <= BATCH_COLUMNS => block(0, k)?.truncate(eps, None),
            Some(eps) => {
                // Sum the Hadamard terms in batches, recompressing as we go so
                // that no QR ever sees all r·K columns.
                let per = (BATCH_COLUMNS / r).max(1);
                let batches = k.div_ceil(per);
                let step = eps / batches as f64;
                let mut acc = LowRankMatrix::zeros(n1, n2);
                for t in (0..k).step_by(per) {
                    let part = block(t, per.min(k - t))?;
                    acc = axpy(1.0, &part, &acc)?.truncate(step, None);
                }
                acc.truncate(eps, None)
            }
        };
        Ok(z.map_panels(|l| b1.backward(l), |r| b2.backward(r)))
    }

    /// Dense matrix `(V₁ ⊗ V₂) diag(vec Ĝ) (V₁ ⊗ V₂)ᵀ` of the compressed
    /// preconditioner (big-endian ordering). Small grids only.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let (n1, n2) = self.shape();
        let total = n1 * n2;
        if total > crate::kronop::DENSE_UNKNOWNS_CAP {
            return Err(Error::TooLarge { entries: total * total, cap: crate::kronop::DENSE_UNKNOWNS_CAP.pow(2) });
        }
        let v = self.basis.dims[0].vectors().kronecker(&self.basis.dims[1].vectors());
        let g = self.multiplier.to_dense();
        let diag = DVector::from_fn(total, |p, _| g[(p / n2, p % n2)]);
        Ok(&v * DMatrix::from_diagonal(&diag) * v.transpose())
    }
}

/// Builds `f(generator)` for a diagonalized 2D generator.
pub fn build_preconditioner(
    basis: &DiagonalizedBasis,
    f: SpectralFunction,
    gamma: f64,
    cfg: &MultiplierConfig,
) -> Result<SpectralPreconditioner> {
    if basis.dims.len() != 2 {
        return Err(Error::Unsupported(format!(
            "spectral preconditioner application in {}D",
            basis.dims.len()
        )));
    }
    let multiplier = build_multiplier(
        f,
        gamma,
        basis.dims[0].eigenvalues(),
        basis.dims[1].eigenvalues(),
        cfg,
    )?;
    Ok(SpectralPreconditioner { basis: basis.clone(), multiplier, function: f, gamma })
}
