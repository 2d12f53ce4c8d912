//! Kronecker-structured elliptic operators.
//!
//! The stiffness operator of a rank-`R` separable coefficient is a sum of
//! `d·R` Kronecker products: term `(k, ℓ)` carries the 1D stiffness matrix of
//! `a_ℓ^{(k)}` in slot `ℓ` and lumped mass diagonals of the other factors in
//! the remaining slots.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficient::{mesh_size, GridSpec, SeparableCoefficient, Univariate};
use crate::error::{Error, Result};
use crate::lowrank::{CanonicalTensor3, LowRankMatrix};

/// Largest number of unknowns for which [`KroneckerOperator::to_dense`] will
/// allocate an `N × N` matrix.
pub const DENSE_UNKNOWNS_CAP: usize = 10_000;

/// A small per-dimension matrix.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    Identity(usize),
    Diagonal(DVector<f64>),
    /// Symmetric tridiagonal; `off` has length `n − 1` (sub = super).
    Tridiagonal { diag: DVector<f64>, off: DVector<f64> },
}

impl Factor {
    pub fn size(&self) -> usize {
        match self {
            Factor::Identity(n) => *n,
            Factor::Diagonal(d) => d.len(),
            Factor::Tridiagonal { diag, .. } => diag.len(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Factor::Identity(_))
    }

    pub fn scaled(&self, alpha: f64) -> Factor {
        match self {
            Factor::Identity(n) => Factor::Diagonal(DVector::from_element(*n, alpha)),
            Factor::Diagonal(d) => Factor::Diagonal(d * alpha),
            Factor::Tridiagonal { diag, off } => Factor::Tridiagonal {
                diag: diag * alpha,
                off: off * alpha,
            },
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Factor::Identity(n) => DMatrix::identity(*n, *n),
            Factor::Diagonal(d) => DMatrix::from_diagonal(d),
            Factor::Tridiagonal { diag, off } => {
                let n = diag.len();
                let mut m = DMatrix::from_diagonal(diag);
                for i in 0..n.saturating_sub(1) {
                    m[(i, i + 1)] = off[i];
                    m[(i + 1, i)] = off[i];
                }
                m
            }
        }
    }

    /// `F · panel` column by column.
    pub fn apply_panel(&self, panel: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factor::Identity(_) => panel.clone(),
            Factor::Diagonal(d) => crate::lowrank::scale_rows(panel, d.as_slice()),
            Factor::Tridiagonal { diag, off } => {
                let mut out = DMatrix::zeros(panel.nrows(), panel.ncols());
                for (src, mut dst) in panel.column_iter().zip(out.column_iter_mut()) {
                    tridiag_mul(diag.as_slice(), off.as_slice(), src.as_slice(), dst.as_mut_slice());
                }
                out
            }
        }
    }

    /// Applies the factor along one mode of a flat tensor with the given
    /// `outer × n × stride` layout.
    fn apply_mode(&self, x: &[f64], y: &mut [f64], outer: usize, stride: usize) {
        let n = self.size();
        for o in 0..outer {
            let base = o * n * stride;
            for s in 0..stride {
                let at = |i: usize| base + i * stride + s;
                match self {
                    Factor::Identity(_) => {
                        for i in 0..n {
                            y[at(i)] = x[at(i)];
                        }
                    }
                    Factor::Diagonal(d) => {
                        for i in 0..n {
                            y[at(i)] = d[i] * x[at(i)];
                        }
                    }
                    Factor::Tridiagonal { diag, off } => {
                        for i in 0..n {
                            let mut v = diag[i] * x[at(i)];
                            if i > 0 {
                                v += off[i - 1] * x[at(i - 1)];
                            }
                            if i + 1 < n {
                                v += off[i] * x[at(i + 1)];
                            }
                            y[at(i)] = v;
                        }
                    }
                }
            }
        }
    }
}

fn tridiag_mul(diag: &[f64], off: &[f64], x: &[f64], y: &mut [f64]) {
    let n = diag.len();
    for i in 0..n {
        let mut v = diag[i] * x[i];
        if i > 0 {
            v += off[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            v += off[i] * x[i + 1];
        }
        y[i] = v;
    }
}

/// `Σ_terms ⊗_ℓ factor_ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct KroneckerOperator {
    sizes: Vec<usize>,
    terms: Vec<Vec<Factor>>,
}

impl KroneckerOperator {
    pub fn new(terms: Vec<Vec<Factor>>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("operator with no terms".into()))?;
        let sizes: Vec<usize> = first.iter().map(Factor::size).collect();
        if !(2..=3).contains(&sizes.len()) {
            return Err(Error::InvalidArgument(format!(
                "operator dimension {} is not 2 or 3",
                sizes.len()
            )));
        }
        for (t, term) in terms.iter().enumerate() {
            let s: Vec<usize> = term.iter().map(Factor::size).collect();
            if s != sizes {
                return Err(Error::ShapeMismatch(format!(
                    "term {t} has factor sizes {s:?}, expected {sizes:?}"
                )));
            }
        }
        Ok(Self { sizes, terms })
    }

    pub fn identity(sizes: &[usize]) -> Result<Self> {
        Self::new(vec![sizes.iter().map(|&n| Factor::Identity(n)).collect()])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn terms(&self) -> &[Vec<Factor>] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn unknowns(&self) -> usize {
        self.sizes.iter().product()
    }

    fn check_2d(&self, x: &LowRankMatrix) -> Result<()> {
        if self.dim() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "{}D operator applied to a 2D grid function",
                self.dim()
            )));
        }
        if x.shape() != (self.sizes[0], self.sizes[1]) {
            return Err(Error::ShapeMismatch(format!(
                "operator on {:?}, input of shape {:?}",
                self.sizes,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Factorized product; output rank is `num_terms · rank(x)`, term-major.
    pub fn apply(&self, x: &LowRankMatrix) -> Result<LowRankMatrix> {
        self.check_2d(x)?;
        let (n1, n2) = x.shape();
        let r = x.rank();
        let blocks: Vec<(DMatrix<f64>, DMatrix<f64>)> = self
            .terms
            .par_iter()
            .map(|term| (term[0].apply_panel(x.left()), term[1].apply_panel(x.right())))
            .collect();
        let mut left = DMatrix::zeros(n1, r * blocks.len());
        let mut right = DMatrix::zeros(n2, r * blocks.len());
        for (t, (l, rr)) in blocks.iter().enumerate() {
            left.columns_mut(t * r, r).copy_from(l);
            right.columns_mut(t * r, r).copy_from(rr);
        }
        LowRankMatrix::new(left, right)
    }

    /// `apply` followed by truncation to `eps`.
    pub fn apply_truncated(&self, x: &LowRankMatrix, eps: f64) -> Result<LowRankMatrix> {
        Ok(self.apply(x)?.truncate(eps, None))
    }

    /// `A(A x)` with truncation after each product.
    pub fn apply_squared(&self, x: &LowRankMatrix, eps: f64) -> Result<LowRankMatrix> {
        let ax = self.apply_truncated(x, eps)?;
        self.apply_truncated(&ax, eps)
    }

    /// Factorized product on a canonical 3D tensor (no truncation).
    pub fn apply_3d(&self, x: &CanonicalTensor3) -> Result<CanonicalTensor3> {
        if self.dim() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "{}D operator applied to a 3D tensor",
                self.dim()
            )));
        }
        let (n1, n2, n3) = x.shape();
        if [n1, n2, n3] != self.sizes[..] {
            return Err(Error::ShapeMismatch(format!(
                "operator on {:?}, tensor of shape {:?}",
                self.sizes,
                (n1, n2, n3)
            )));
        }
        let r = x.rank();
        let t = self.terms.len();
        let mut panels: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, r * t)).collect();
        for (ti, term) in self.terms.iter().enumerate() {
            for (dim, panel) in panels.iter_mut().enumerate() {
                panel
                    .columns_mut(ti * r, r)
                    .copy_from(&term[dim].apply_panel(x.factor(dim)));
            }
        }
        let [a, b, c]: [DMatrix<f64>; 3] = panels.try_into().expect("three panels");
        CanonicalTensor3::new(a, b, c)
    }

    /// Matrix-free product on a big-endian flattened vector.
    pub fn apply_vec(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let total = self.unknowns();
        if x.len() != total {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} for {} unknowns",
                x.len(),
                total
            )));
        }
        let mut y = DVector::zeros(total);
        let mut cur = vec![0.0; total];
        let mut next = vec![0.0; total];
        for term in &self.terms {
            cur.copy_from_slice(x.as_slice());
            for (dim, factor) in term.iter().enumerate() {
                if factor.is_identity() {
                    continue;
                }
                let outer: usize = self.sizes[..dim].iter().product();
                let stride: usize = self.sizes[dim + 1..].iter().product();
                factor.apply_mode(&cur, &mut next, outer, stride);
                std::mem::swap(&mut cur, &mut next);
            }
            for (yi, ci) in y.iter_mut().zip(&cur) {
                *yi += ci;
            }
        }
        Ok(y)
    }

    /// Dense `N × N` matrix (big-endian ordering). Small grids only.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let total = self.unknowns();
        if total > DENSE_UNKNOWNS_CAP {
            return Err(Error::TooLarge {
                entries: total.saturating_mul(total),
                cap: DENSE_UNKNOWNS_CAP * DENSE_UNKNOWNS_CAP,
            });
        }
        let mut out = DMatrix::zeros(total, total);
        for term in &self.terms {
            let mut k = term[0].to_dense();
            for f in &term[1..] {
                k = k.kronecker(&f.to_dense());
            }
            out += k;
        }
        Ok(out)
    }
}

/// How the lumped mass treats the rows next to the Dirichlet boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassLumping {
    /// `d_i = ∫ a ψ_i`, i.e. the row sum including the eliminated boundary
    /// hat functions. Gives `d_i = h` for `a ≡ 1` on every row.
    #[default]
    IncludeBoundary,
    /// Row sums over interior columns only (`s_{1,0} = s_{n,n+1} = 0`).
    InteriorOnly,
}

/// Normalization of the assembled operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scaling {
    /// `A_FD = h^{-d} A_FE`: stiffness `/h²`, mass diagonals `/h`.
    #[default]
    FiniteDifference,
    /// Galerkin scaling: stiffness `/h`, raw lumped masses.
    FiniteElement,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyOptions {
    pub scaling: Scaling,
    pub lumping: MassLumping,
}

fn check_h(n: usize, h: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if (h - mesh_size(n)).abs() > 1e-12 * mesh_size(n) {
        return Err(Error::InvalidArgument(format!(
            "h = {h} does not match 1/(n+1) for n = {n}"
        )));
    }
    Ok(())
}

fn sample_positive(f: &Univariate, x: f64, term: usize, dim: usize) -> Result<f64> {
    let value = f.eval(x);
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::NonPositiveCoefficient { term, dim, x, value });
    }
    Ok(value)
}

/// Midpoint values `a_{i+1/2}`, `i = 0..n`.
fn midpoint_values(f: &Univariate, n: usize, term: usize, dim: usize) -> Result<Vec<f64>> {
    let h = mesh_size(n);
    (0..=n)
        .map(|i| sample_positive(f, (i as f64 + 0.5) * h, term, dim))
        .collect()
}

fn stiffness_labeled(f: &Univariate, n: usize, term: usize, dim: usize) -> Result<Factor> {
    let h = mesh_size(n);
    let a = midpoint_values(f, n, term, dim)?;
    let h2 = h * h;
    let diag = DVector::from_fn(n, |i, _| (a[i] + a[i + 1]) / h2);
    let off = DVector::from_fn(n - 1, |i, _| -a[i + 1] / h2);
    Ok(Factor::Tridiagonal { diag, off })
}

fn lumped_mass_labeled(
    f: &Univariate,
    n: usize,
    lumping: MassLumping,
    term: usize,
    dim: usize,
) -> Result<Factor> {
    let h = mesh_size(n);
    let g = h / (2.0 * 3f64.sqrt());
    // Element e spans [e·h, (e+1)·h], e = 0..=n; per element the two Gauss
    // points and the values of the rising hat (left node e) at them.
    let mut diag = vec![0.0; n];
    for e in 0..=n {
        let mid = (e as f64 + 0.5) * h;
        let mut rising_sq = 0.0;
        let mut falling_sq = 0.0;
        let mut cross = 0.0;
        for x in [mid - g, mid + g] {
            let a = sample_positive(f, x, term, dim)?;
            let up = (x - e as f64 * h) / h;
            let down = 1.0 - up;
            rising_sq += 0.5 * h * a * up * up;
            falling_sq += 0.5 * h * a * down * down;
            cross += 0.5 * h * a * up * down;
        }
        // Node e (interior index e-1) sees the falling hat; node e+1 (index e) the rising one.
        if e >= 1 {
            let i = e - 1;
            diag[i] += falling_sq;
            if e < n || lumping == MassLumping::IncludeBoundary {
                diag[i] += cross;
            }
        }
        if e < n {
            let i = e;
            diag[i] += rising_sq;
            if e >= 1 || lumping == MassLumping::IncludeBoundary {
                diag[i] += cross;
            }
        }
    }
    Ok(Factor::Diagonal(DVector::from_vec(diag)))
}

/// 1D Dirichlet stiffness with midpoint sampling:
/// `diag_i = (a_{i−1/2} + a_{i+1/2})/h²`, `off_i = −a_{i+1/2}/h²`.
pub fn assemble_1d_stiffness(f: &Univariate, n: usize, h: f64) -> Result<Factor> {
    check_h(n, h)?;
    stiffness_labeled(f, n, 0, 0)
}

/// Row-summed weighted mass matrix (two-point Gauss per element), unscaled.
pub fn assemble_1d_lumped_mass(
    f: &Univariate,
    n: usize,
    h: f64,
    lumping: MassLumping,
) -> Result<Factor> {
    check_h(n, h)?;
    lumped_mass_labeled(f, n, lumping, 0, 0)
}

/// Assembles the `d·R`-term stiffness operator, ordered term-major
/// (`k = 0..R`, then `ℓ = 0..d`).
pub fn assemble_stiffness(
    coeff: &SeparableCoefficient,
    grid: &GridSpec,
    opts: AssemblyOptions,
) -> Result<KroneckerOperator> {
    let d = coeff.dim();
    if grid.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "{d}D coefficient on a {}D grid",
            grid.dim()
        )));
    }
    let mut terms = Vec::with_capacity(d * coeff.rank());
    for k in 0..coeff.rank() {
        let mut stiff = Vec::with_capacity(d);
        let mut mass = Vec::with_capacity(d);
        for l in 0..d {
            let n = grid.n(l);
            let h = grid.h(l);
            let f = coeff.factor(k, l);
            let s = stiffness_labeled(f, n, k, l)?;
            let m = lumped_mass_labeled(f, n, opts.lumping, k, l)?;
            match opts.scaling {
                Scaling::FiniteDifference => {
                    stiff.push(s);
                    mass.push(m.scaled(1.0 / h));
                }
                Scaling::FiniteElement => {
                    stiff.push(s.scaled(h));
                    mass.push(m);
                }
            }
        }
        for l in 0..d {
            let term = (0..d)
                .map(|m| if m == l { stiff[m].clone() } else { mass[m].clone() })
                .collect();
            terms.push(term);
        }
    }
    KroneckerOperator::new(terms)
}

/// Unit-coefficient FD Laplacian `h^{-2}·tridiag(−1, 2, −1)`.
pub fn laplacian_1d(n: usize) -> Factor {
    let h2 = mesh_size(n).powi(2);
    Factor::Tridiagonal {
        diag: DVector::from_element(n, 2.0 / h2),
        off: DVector::from_element(n.saturating_sub(1), -1.0 / h2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::Preset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn five_point(n: usize) -> DMatrix<f64> {
        let h2 = mesh_size(n).powi(2);
        let big = n * n;
        let mut m = DMatrix::zeros(big, big);
        for i1 in 0..n {
            for i2 in 0..n {
                let p = i2 + n * i1;
                m[(p, p)] = 4.0 / h2;
                if i1 > 0 {
                    m[(p, p - n)] = -1.0 / h2;
                }
                if i1 + 1 < n {
                    m[(p, p + n)] = -1.0 / h2;
                }
                if i2 > 0 {
                    m[(p, p - 1)] = -1.0 / h2;
                }
                if i2 + 1 < n {
                    m[(p, p + 1)] = -1.0 / h2;
                }
            }
        }
        m
    }

    #[test]
    fn unit_stiffness_is_laplacian() {
        let s = assemble_1d_stiffness(&Univariate::Constant(1.0), 3, 0.25).unwrap();
        assert_eq!(s, laplacian_1d(3));
        let eig = s.to_dense().symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 16.0 * (2.0 - 2f64.sqrt())).abs() < 1e-12);
        assert!((ev[0] - 9.3726).abs() < 1e-4);
        assert!(assemble_1d_stiffness(&Univariate::Constant(1.0), 3, 0.3).is_err());
    }

    #[test]
    fn linear_coefficient_midpoints() {
        let f = Univariate::Preset(Preset::XPlus2);
        let s = assemble_1d_stiffness(&f, 3, 0.25).unwrap();
        let Factor::Tridiagonal { diag, off } = s else { panic!() };
        let mids = [2.125, 2.375, 2.625, 2.875];
        for i in 0..3 {
            assert!((diag[i] - 16.0 * (mids[i] + mids[i + 1])).abs() < 1e-12);
        }
        for i in 0..2 {
            assert!((off[i] + 16.0 * mids[i + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn lumped_mass_constants() {
        let n = 9;
        let h = mesh_size(n);
        let m = assemble_1d_lumped_mass(&Univariate::Constant(2.5), n, h, MassLumping::IncludeBoundary).unwrap();
        let Factor::Diagonal(d) = m else { panic!() };
        assert!(d.iter().all(|v| (v - 2.5 * h).abs() < 1e-15));
        let m = assemble_1d_lumped_mass(&Univariate::Constant(1.0), n, h, MassLumping::InteriorOnly).unwrap();
        let Factor::Diagonal(d) = m else { panic!() };
        assert!((d[0] - 5.0 * h / 6.0).abs() < 1e-15);
        assert!((d[4] - h).abs() < 1e-15);
    }

    #[test]
    fn five_point_reduction() {
        let op = assemble_stiffness(&SeparableCoefficient::unit(2).unwrap(), &GridSpec::square(2, 7).unwrap(), AssemblyOptions::default()).unwrap();
        assert_eq!(op.num_terms(), 2);
        let diff = op.to_dense().unwrap() - five_point(7);
        assert!(diff.abs().max() < 1e-10);
    }

    #[test]
    fn test1_is_three_laplacians() {
        let grid = GridSpec::square(2, 15).unwrap();
        let op = assemble_stiffness(&SeparableCoefficient::test1(), &grid, AssemblyOptions::default()).unwrap();
        assert_eq!(op.num_terms(), 6);
        let diff = op.to_dense().unwrap() - five_point(15) * 3.0;
        assert!(diff.abs().max() < 1e-9);
    }

    #[test]
    fn finite_element_scaling_is_h_squared() {
        let grid = GridSpec::square(2, 7).unwrap();
        let c = SeparableCoefficient::test2();
        let fd = assemble_stiffness(&c, &grid, AssemblyOptions::default()).unwrap();
        let fe = assemble_stiffness(&c, &grid, AssemblyOptions { scaling: Scaling::FiniteElement, ..Default::default() }).unwrap();
        let h2 = grid.h(0).powi(2);
        let diff = fd.to_dense().unwrap() * h2 - fe.to_dense().unwrap();
        assert!(diff.abs().max() < 1e-12);
    }

    #[test]
    fn apply_rank_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = DMatrix::from_fn(15, 4, |_, _| rng.random_range(-1.0..1.0));
        let r = DMatrix::from_fn(15, 4, |_, _| rng.random_range(-1.0..1.0));
        let x = LowRankMatrix::new(l, r).unwrap();
        let id = KroneckerOperator::identity(&[15, 15]).unwrap();
        assert_eq!(id.apply(&x).unwrap(), x);
        let op = assemble_stiffness(&SeparableCoefficient::test2(), &GridSpec::square(2, 15).unwrap(), AssemblyOptions::default()).unwrap();
        assert_eq!(op.apply(&x).unwrap().rank(), 24);
        assert!(op.apply(&LowRankMatrix::zeros(15, 14)).is_err());
    }

    #[test]
    fn apply_vec_matches_dense() {
        let grid = GridSpec::new(&[5, 4, 3]).unwrap();
        let c = SeparableCoefficient::new(
            3,
            vec![vec![
                Univariate::Preset(Preset::XPlus2),
                Univariate::Preset(Preset::Sin4PiXPlus2),
                Univariate::Constant(1.5),
            ]],
        )
        .unwrap();
        let op = assemble_stiffness(&c, &grid, AssemblyOptions::default()).unwrap();
        let x = DVector::from_fn(60, |i, _| (i as f64 * 0.37).sin());
        let diff = op.apply_vec(&x).unwrap() - op.to_dense().unwrap() * &x;
        assert!(diff.norm() < 1e-12 * (op.to_dense().unwrap() * &x).norm());
    }

    #[test]
    fn dense_operator_is_symmetric_positive_definite() {
        let op = assemble_stiffness(&SeparableCoefficient::test2(), &GridSpec::square(2, 15).unwrap(), AssemblyOptions::default()).unwrap();
        let a = op.to_dense().unwrap();
        assert!((&a - a.transpose()).abs().max() < 1e-13 * a.abs().max());
        assert!(a.symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn apply_squared_matches_dense() {
        let grid = GridSpec::square(2, 15).unwrap();
        let op = assemble_stiffness(&SeparableCoefficient::test2(), &grid, AssemblyOptions::default()).unwrap();
        let u = DVector::from_fn(15, |i, _| ((i + 1) as f64 * 0.3).sin());
        let v = DVector::from_fn(15, |i, _| 1.0 + 0.1 * i as f64);
        let x = LowRankMatrix::from_outer(&u, &v);
        let eps = 1e-8;
        let got = op.apply_squared(&x, eps).unwrap().to_dense().unwrap();
        let a = op.to_dense().unwrap();
        let xv = DVector::from_row_slice(x.to_dense().unwrap().transpose().as_slice());
        let expected = &a * (&a * xv);
        let gv = DVector::from_row_slice(got.transpose().as_slice());
        assert!((gv - &expected).norm() <= 10.0 * eps * expected.norm());
    }
}
