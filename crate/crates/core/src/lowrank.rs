//! Factored low-rank grid functions.
//!
//! A two-dimensional grid function `X ∈ R^{n1×n2}` is stored as `left · rightᵀ`
//! with `left: n1×r` and `right: n2×r`. Every operation here works on the
//! factor panels; the dense grid is only formed by [`LowRankMatrix::to_dense`]
//! for verification on small grids.
//!
//! Vectorization follows the big-endian convention: entry `X[i1, i2]` is the
//! long index `i2 + i1·n2`, so `(F1 ⊗ F2)·vec(X) = vec(F1 · X · F2ᵀ)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default cap on the number of entries materialized by `to_dense`.
pub const DEFAULT_DENSE_CAP: usize = 10_000_000;

/// Singular values below `ZERO_FLOOR · ‖left‖_F · ‖right‖_F` are treated as
/// exact zeros (cancellation noise).
const ZERO_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Grid function in factored form `left · rightᵀ`. Rank 0 is the zero function.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankMatrix {
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl LowRankMatrix {
    pub fn new(left: DMatrix<f64>, right: DMatrix<f64>) -> Result<Self> {
        if left.ncols() != right.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "left panel has {} columns, right panel has {}",
                left.ncols(),
                right.ncols()
            )));
        }
        Ok(Self { left, right })
    }

    pub fn zeros(n1: usize, n2: usize) -> Self {
        Self {
            left: DMatrix::zeros(n1, 0),
            right: DMatrix::zeros(n2, 0),
        }
    }

    /// Rank-one function `u · vᵀ`.
    pub fn from_outer(u: &DVector<f64>, v: &DVector<f64>) -> Self {
        Self {
            left: DMatrix::from_column_slice(u.len(), 1, u.as_slice()),
            right: DMatrix::from_column_slice(v.len(), 1, v.as_slice()),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.left.nrows(), self.right.nrows())
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.rank() == 0
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    pub fn into_panels(self) -> (DMatrix<f64>, DMatrix<f64>) {
        (self.left, self.right)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            left: &self.left * alpha,
            right: self.right.clone(),
        }
    }

    /// Applies independent maps to the two panels. The maps must preserve the
    /// column count.
    pub fn map_panels<F, G>(&self, on_left: F, on_right: G) -> Self
    where
        F: FnOnce(&DMatrix<f64>) -> DMatrix<f64>,
        G: FnOnce(&DMatrix<f64>) -> DMatrix<f64>,
    {
        let left = on_left(&self.left);
        let right = on_right(&self.right);
        debug_assert_eq!(left.ncols(), right.ncols());
        Self { left, right }
    }

    /// Frobenius norm from the factor Gram matrices. For a difference of
    /// nearly equal matrices, truncate first: the Gram form is accurate only
    /// to about `√ε · ‖left‖‖right‖`.
    pub fn norm(&self) -> f64 {
        gram_inner(self, self).max(0.0).sqrt()
    }

    /// Recompresses so that the discarded singular values satisfy
    /// `(Σ_{i>k} σ_i²)^{1/2} ≤ eps_rel · (Σ σ_i²)^{1/2}`, optionally capped at
    /// `rank_max`. The rank rule is a per-value threshold (see
    /// `select_rank`), so truncation is idempotent. The result has orthogonal left columns (scaled by
    /// the singular values) and orthonormal right columns.
    pub fn truncate(&self, eps_rel: f64, rank_max: Option<usize>) -> Self {
        let (n1, n2) = self.shape();
        if self.rank() == 0 {
            return Self::zeros(n1, n2);
        }
        let scale = self.left.norm() * self.right.norm();
        if scale == 0.0 || !scale.is_finite() {
            return Self::zeros(n1, n2);
        }
        let h_left = Householder::new(&self.left);
        let h_right = Householder::new(&self.right);
        let core = h_left.r() * h_right.r().transpose();
        let (u, sigma, v) = sorted_svd(core);

        let keep = select_rank(&sigma, n1.min(n2), eps_rel, ZERO_FLOOR * scale, rank_max);
        if keep == 0 {
            return Self::zeros(n1, n2);
        }
        let mut u_k = u.columns(0, keep).into_owned();
        for (j, s) in sigma.iter().take(keep).enumerate() {
            u_k.column_mut(j).scale_mut(*s);
        }
        Self {
            left: h_left.q_times(&u_k),
            right: h_right.q_times(&v.columns(0, keep).into_owned()),
        }
    }

    /// Singular values of the represented matrix, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        if self.rank() == 0 {
            return Vec::new();
        }
        let core = Householder::new(&self.left).r() * Householder::new(&self.right).r().transpose();
        sorted_svd(core).1
    }

    /// `diag(u) · X · diag(v)`; rank is unchanged.
    pub fn hadamard_scale(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<Self> {
        let (n1, n2) = self.shape();
        if u.len() != n1 || v.len() != n2 {
            return Err(Error::ShapeMismatch(format!(
                "scaling vectors of length ({}, {}) for a {}x{} grid",
                u.len(),
                v.len(),
                n1,
                n2
            )));
        }
        Ok(Self {
            left: scale_rows(&self.left, u.as_slice()),
            right: scale_rows(&self.right, v.as_slice()),
        })
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        self.to_dense_with_cap(DEFAULT_DENSE_CAP)
    }

    pub fn to_dense_with_cap(&self, cap: usize) -> Result<DMatrix<f64>> {
        let (n1, n2) = self.shape();
        let entries = n1.saturating_mul(n2);
        if entries > cap {
            return Err(Error::TooLarge { entries, cap });
        }
        Ok(&self.left * self.right.transpose())
    }

    /// SVD compression of a dense matrix with the relative Frobenius criterion.
    pub fn from_dense(m: &DMatrix<f64>, eps_rel: f64) -> Result<Self> {
        let entries = m.nrows().saturating_mul(m.ncols());
        if entries > DEFAULT_DENSE_CAP {
            return Err(Error::TooLarge {
                entries,
                cap: DEFAULT_DENSE_CAP,
            });
        }
        let (n1, n2) = m.shape();
        if n1 == 0 || n2 == 0 {
            return Ok(Self::zeros(n1, n2));
        }
        let (u, sigma, v) = sorted_svd(m.clone());
        let keep = select_rank(&sigma, m.nrows().min(m.ncols()), eps_rel, ZERO_FLOOR * m.norm(), None);
        let mut left = u.columns(0, keep).into_owned();
        for (j, s) in sigma.iter().take(keep).enumerate() {
            left.column_mut(j).scale_mut(*s);
        }
        Ok(Self {
            left,
            right: v.columns(0, keep).into_owned(),
        })
    }
}

/// `alpha·X + Y` by panel concatenation. Exact; the rank is `r_X + r_Y`.
pub fn axpy(alpha: f64, x: &LowRankMatrix, y: &LowRankMatrix) -> Result<LowRankMatrix> {
    check_same_shape(x, y)?;
    let (n1, n2) = x.shape();
    let r = x.rank() + y.rank();
    let mut left = DMatrix::zeros(n1, r);
    let mut right = DMatrix::zeros(n2, r);
    left.columns_mut(0, x.rank()).copy_from(&(&x.left * alpha));
    left.columns_mut(x.rank(), y.rank()).copy_from(&y.left);
    right.columns_mut(0, x.rank()).copy_from(&x.right);
    right.columns_mut(x.rank(), y.rank()).copy_from(&y.right);
    Ok(LowRankMatrix { left, right })
}

/// Concatenates several low-rank terms into one (exact sum).
pub fn sum_all<'a, I>(n1: usize, n2: usize, terms: I) -> Result<LowRankMatrix>
where
    I: IntoIterator<Item = &'a LowRankMatrix>,
{
    let terms: Vec<&LowRankMatrix> = terms.into_iter().collect();
    for t in &terms {
        if t.shape() != (n1, n2) {
            return Err(Error::ShapeMismatch(format!(
                "term of shape {:?} in a sum over {}x{}",
                t.shape(),
                n1,
                n2
            )));
        }
    }
    let r: usize = terms.iter().map(|t| t.rank()).sum();
    let mut left = DMatrix::zeros(n1, r);
    let mut right = DMatrix::zeros(n2, r);
    let mut offset = 0;
    for t in terms {
        left.columns_mut(offset, t.rank()).copy_from(&t.left);
        right.columns_mut(offset, t.rank()).copy_from(&t.right);
        offset += t.rank();
    }
    Ok(LowRankMatrix { left, right })
}

/// Frobenius inner product `trace((L_Xᵀ L_Y)(R_Yᵀ R_X))`; never forms the grid.
pub fn inner(x: &LowRankMatrix, y: &LowRankMatrix) -> Result<f64> {
    check_same_shape(x, y)?;
    Ok(gram_inner(x, y))
}

fn gram_inner(x: &LowRankMatrix, y: &LowRankMatrix) -> f64 {
    if x.rank() == 0 || y.rank() == 0 {
        return 0.0;
    }
    let gl = x.left.transpose() * &y.left;
    let gr = x.right.transpose() * &y.right;
    gl.iter().zip(gr.iter()).map(|(a, b)| a * b).sum()
}

fn check_same_shape(x: &LowRankMatrix, y: &LowRankMatrix) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok(())
}

pub(crate) fn scale_rows(panel: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut out = panel.clone();
    for mut col in out.column_iter_mut() {
        for (x, w) in col.iter_mut().zip(weights) {
            *x *= w;
        }
    }
    out
}

/// Thin QR: `q` is `n × min(n, r)`, `r` is `min(n, r) × r`.
/// Householder QR of a panel, kept in factored form.
///
/// Written out rather than taken from nalgebra: `nalgebra::QR` loses the
/// factorization (‖QR − A‖/‖A‖ ≈ 0.4 observed) on numerically rank-deficient
/// panels whose columns differ in scale by many orders of magnitude, which is
/// exactly what preconditioner sums produce.
pub(crate) struct Householder {
    w: DMatrix<f64>,
    tau: Vec<f64>,
}

const QR_BLOCK: usize = 32;

impl Householder {
    pub(crate) fn new(panel: &DMatrix<f64>) -> Self {
        let (m, k) = panel.shape();
        let p = m.min(k);
        let mut w = panel.clone();
        let mut tau = vec![0.0; p];
        let mut j0 = 0;
        while j0 < p {
            let nb = QR_BLOCK.min(p - j0);
            let a = w.as_mut_slice();
            for j in j0..j0 + nb {
                let (head, tail) = a.split_at_mut((j + 1) * m);
                let col = &mut head[j * m..];
                let alpha = col[j];
                let xnorm = col[j + 1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                if xnorm == 0.0 {
                    continue;
                }
                let beta = if alpha >= 0.0 { -alpha.hypot(xnorm) } else { alpha.hypot(xnorm) };
                tau[j] = (beta - alpha) / beta;
                let scale = 1.0 / (alpha - beta);
                col[j + 1..].iter_mut().for_each(|v| *v *= scale);
                col[j] = beta;
                let v = &col[j + 1..];
                for c in 0..j0 + nb - j - 1 {
                    reflect(&mut tail[c * m + j..(c + 1) * m], v, tau[j]);
                }
            }
            if j0 + nb < k {
                let (v, t) = block_reflector(&w, j0, nb, &tau[j0..j0 + nb]);
                let rows = m - j0;
                let mut trail = w.view_mut((j0, j0 + nb), (rows, k - j0 - nb));
                let tmp = t.transpose() * (v.transpose() * &trail);
                trail.gemm(-1.0, &v, &tmp, 1.0);
            }
            j0 += nb;
        }
        Self { w, tau }
    }

    pub(crate) fn r(&self) -> DMatrix<f64> {
        let p = self.tau.len();
        DMatrix::from_fn(p, self.w.ncols(), |i, j| if i <= j { self.w[(i, j)] } else { 0.0 })
    }

    /// `Q c` for `c` with `min(m, k)` rows.
    pub(crate) fn q_times(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.w.nrows();
        let p = self.tau.len();
        let mut out = DMatrix::zeros(m, c.ncols());
        out.rows_mut(0, p).copy_from(c);
        let blocks: Vec<usize> = (0..p).step_by(QR_BLOCK).collect();
        for &j0 in blocks.iter().rev() {
            let nb = QR_BLOCK.min(p - j0);
            let (v, t) = block_reflector(&self.w, j0, nb, &self.tau[j0..j0 + nb]);
            let mut rows = out.rows_mut(j0, m - j0);
            let tmp = t * (v.transpose() * &rows);
            rows.gemm(-1.0, &v, &tmp, 1.0);
        }
        out
    }
}

/// Compact form `H_1 ⋯ H_nb = I − V T Vᵀ` of the reflectors stored in
/// columns `j0..j0+nb`.
fn block_reflector(w: &DMatrix<f64>, j0: usize, nb: usize, tau: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let rows = w.nrows() - j0;
    let v = DMatrix::from_fn(rows, nb, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => w[(j0 + i, j0 + j)],
    });
    let mut t = DMatrix::zeros(nb, nb);
    for j in 0..nb {
        t[(j, j)] = tau[j];
        if j > 0 && tau[j] != 0.0 {
            let z = v.columns(0, j).tr_mul(&v.column(j));
            let col = t.view((0, 0), (j, j)) * z * (-tau[j]);
            t.view_mut((0, j), (j, 1)).copy_from(&col);
        }
    }
    (v, t)
}

/// Applies `I − τ [1; v][1; v]ᵀ` to `x`.
#[inline]
fn reflect(x: &mut [f64], v: &[f64], tau: f64) {
    let s = tau * (x[0] + v.iter().zip(&x[1..]).map(|(a, b)| a * b).sum::<f64>());
    x[0] -= s;
    x[1..].iter_mut().zip(v).for_each(|(t, vi)| *t -= s * vi);
}

#[cfg(test)]
fn thin_qr(panel: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = Householder::new(panel);
    let p = h.tau.len();
    (h.q_times(&DMatrix::identity(p, p)), h.r())
}

/// SVD with singular values sorted descending; returns `(U, σ, V)`.
pub(crate) fn sorted_svd(m: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return (DMatrix::zeros(r, 0), Vec::new(), DMatrix::zeros(c, 0));
    }
    let fm = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = fm.thin_svd().expect("SVD of a finite matrix");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    (
        DMatrix::from_fn(r, k, |i, j| u[(i, j)]),
        (0..k).map(|j| s[j]).collect(),
        DMatrix::from_fn(c, k, |i, j| v[(i, j)]),
    )
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending.
pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let eig = fm.self_adjoint_eigen(faer::Side::Lower).expect("eigendecomposition of a finite matrix");
    let (s, u) = (eig.S().column_vector(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    (
        order.iter().map(|&i| s[i]).collect(),
        DMatrix::from_fn(n, n, |i, j| u[(i, order[j])]),
    )
}

/// Number of leading singular values to keep: the longest prefix with
/// `σ_i > eps_rel · (Σ_{j≤i} σ_j²)^{1/2} / √m`, where `m ≥ sigma.len()` is
/// the smaller matrix dimension.
///
/// Each decision depends only on the values already kept, so truncating a
/// truncated matrix again keeps everything. The discarded tail is at most
/// `√m` values below the threshold, which gives
/// `(Σ_{i>k} σ_i²)^{1/2} ≤ eps_rel · ‖σ‖₂`.
pub(crate) fn select_rank(
    sigma: &[f64],
    m: usize,
    eps_rel: f64,
    floor: f64,
    rank_max: Option<usize>,
) -> usize {
    let scale = eps_rel.max(0.0) / (m.max(sigma.len()).max(1) as f64).sqrt();
    let mut head = 0.0;
    let mut keep = 0;
    for &s in sigma {
        head += s * s;
        if s <= floor || s <= scale * head.sqrt() {
            break;
        }
        keep += 1;
    }
    match rank_max {
        Some(m) => keep.min(m),
        None => keep,
    }
}

/// Canonical three-way tensor `Σ_j a_j ⊗ b_j ⊗ c_j`. Used for 3D operator
/// application; there is no 3D truncation.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalTensor3 {
    factors: [DMatrix<f64>; 3],
}

impl CanonicalTensor3 {
    pub fn new(f1: DMatrix<f64>, f2: DMatrix<f64>, f3: DMatrix<f64>) -> Result<Self> {
        if f1.ncols() != f2.ncols() || f1.ncols() != f3.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "canonical factors with {}, {}, {} columns",
                f1.ncols(),
                f2.ncols(),
                f3.ncols()
            )));
        }
        Ok(Self {
            factors: [f1, f2, f3],
        })
    }

    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            factors: [
                DMatrix::zeros(n1, 0),
                DMatrix::zeros(n2, 0),
                DMatrix::zeros(n3, 0),
            ],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        )
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn factor(&self, dim: usize) -> &DMatrix<f64> {
        &self.factors[dim]
    }

    /// Big-endian vectorization: index `i3 + n3·(i2 + n2·i1)`.
    pub fn to_dense(&self) -> Result<DVector<f64>> {
        let (n1, n2, n3) = self.shape();
        let entries = n1 * n2 * n3;
        if entries > DEFAULT_DENSE_CAP {
            return Err(Error::TooLarge {
                entries,
                cap: DEFAULT_DENSE_CAP,
            });
        }
        let mut out = DVector::zeros(entries);
        let [a, b, c] = &self.factors;
        for j in 0..self.rank() {
            for i1 in 0..n1 {
                let x1 = a[(i1, j)];
                for i2 in 0..n2 {
                    let x12 = x1 * b[(i2, j)];
                    let base = n3 * (i2 + n2 * i1);
                    for i3 in 0..n3 {
                        out[base + i3] += x12 * c[(i3, j)];
                    }
                }
            }
        }
        Ok(out)
    }
}
