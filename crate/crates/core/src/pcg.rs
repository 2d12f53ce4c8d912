//! Preconditioned conjugate gradients in low-rank format, and the control
//! equation solvers built on it.
//!
//! Every iterate, residual, search direction and preconditioned residual is
//! recompressed after it is formed. The modified control equation
//! `(γA² + I)u = AF` is solved with the S-type preconditioners; the primal
//! equation `(γA + A⁻¹)u = F` with the B-type ones and an embedded solve for
//! `A⁻¹`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coefficient::{GridSpec, SeparableCoefficient};
use crate::error::{Error, Result};
use crate::kronop::{assemble_stiffness, AssemblyOptions, KroneckerOperator};
use crate::lowrank::{axpy, inner, LowRankMatrix};
use crate::spectral::{
    build_a1, build_a2, build_preconditioner, compute_averaged_data, diagonalize, AveragedData,
    MultiplierConfig, SpectralFunction, SpectralPreconditioner,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Stop when `‖R‖_F / ‖B‖_F ≤ eps_pcg`.
    pub eps_pcg: f64,
    /// Relative truncation tolerance at every recompression.
    pub eps_trunc: f64,
    /// Coupling constant: `eps_trunc ≤ c0 · eps_pcg`.
    pub c0: f64,
    pub k_max: usize,
    pub gamma: f64,
    /// Tolerance of embedded `A⁻¹` solves.
    pub inner_eps: f64,
    /// Replace the recursive residual by `B − matvec(X)` every this many
    /// iterations; `0` disables replacement.
    pub recompute_every: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            eps_pcg: 1e-7,
            eps_trunc: 1e-8,
            c0: 0.1,
            k_max: 200,
            gamma: 1.0,
            inner_eps: 1e-8,
            recompute_every: 0,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.eps_pcg > 0.0 && self.eps_trunc > 0.0 && self.inner_eps > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(0.01..=0.1).contains(&self.c0) {
            return bad(format!("c0 = {} outside [0.01, 0.1]", self.c0));
        }
        if self.eps_trunc > self.c0 * self.eps_pcg * (1.0 + 1e-12) {
            return bad(format!(
                "eps_trunc = {} exceeds c0·eps_pcg = {}",
                self.eps_trunc,
                self.c0 * self.eps_pcg
            ));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma = {} must be positive", self.gamma));
        }
        if self.k_max == 0 {
            return bad("k_max must be positive".into());
        }
        Ok(())
    }

    /// Configuration for an embedded solve at `inner_eps`.
    pub fn inner(&self) -> Self {
        Self {
            eps_pcg: self.inner_eps,
            eps_trunc: self.eps_trunc.min(self.c0 * self.inner_eps),
            ..*self
        }
    }
}

/// Recompression sites of the iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruncSite {
    S,
    X,
    R,
    Z,
    P,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub iteration: usize,
    pub site: TruncSite,
    pub rank_before: usize,
    pub rank_after: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative residuals; entry 0 belongs to the initial guess.
    pub residuals: Vec<f64>,
    pub ranks: Vec<RankRecord>,
    /// Wall time of each iteration in seconds.
    pub iteration_times: Vec<f64>,
    /// Iteration time, excluding preconditioner setup.
    pub total_time: f64,
    /// Preconditioner construction time.
    pub setup_time: f64,
    /// Sum of total times over the levels solved so far (cascadic runs).
    pub accumulated_time: f64,
    pub converged: bool,
    pub restarts: usize,
    pub inner_iterations: usize,
    pub initial_rank: usize,
    pub solution_rank: usize,
    /// Residual of the returned iterate recomputed as `‖B − M(X)‖/‖B‖` with
    /// the same (truncating) operator; not used for stopping.
    pub final_residual: f64,
    pub failure: Option<String>,
}

impl SolveStats {
    pub fn ranks_at(&self, site: TruncSite) -> Vec<usize> {
        self.ranks.iter().filter(|r| r.site == site).map(|r| r.rank_after).collect()
    }

    pub fn time_per_iteration(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.total_time / self.iterations as f64
        }
    }
}

enum Outcome {
    Done,
    Breakdown(String),
}

/// Low-rank PCG. `matvec` and `precond` may return untruncated results; the
/// solver recompresses at the S, X, R, Z and P sites. On loss of positive
/// definiteness (`⟨P,S⟩ ≤ 0` or `⟨R,Z⟩ ≤ 0`) it restarts once from the current
/// iterate with `eps_trunc / 10`.
pub fn pcg_solve(
    matvec: &mut dyn FnMut(&LowRankMatrix) -> Result<LowRankMatrix>,
    precond: &mut dyn FnMut(&LowRankMatrix) -> Result<LowRankMatrix>,
    b: &LowRankMatrix,
    x0: &LowRankMatrix,
    cfg: &SolveConfig,
) -> Result<(LowRankMatrix, SolveStats)> {
    cfg.validate()?;
    if b.shape() != x0.shape() {
        return Err(Error::ShapeMismatch(format!(
            "rhs {:?} and initial guess {:?}",
            b.shape(),
            x0.shape()
        )));
    }
    let start = Instant::now();
    let mut stats = SolveStats { initial_rank: x0.rank(), ..Default::default() };
    let b_norm = b.norm();
    if b_norm == 0.0 {
        let (n1, n2) = b.shape();
        stats.converged = true;
        stats.residuals.push(0.0);
        return Ok((LowRankMatrix::zeros(n1, n2), stats));
    }
    let mut x = x0.clone();
    let mut best = (f64::INFINITY, x.clone());
    let mut eps = cfg.eps_trunc;
    loop {
        match run_attempt(matvec, precond, b, b_norm, &mut x, &mut best, eps, cfg, &mut stats)? {
            Outcome::Done => break,
            Outcome::Breakdown(msg) => {
                if stats.restarts == 0 {
                    stats.restarts = 1;
                    eps /= 10.0;
                    if best.0.is_finite() {
                        x = best.1.clone();
                    }
                    continue;
                }
                stats.failure = Some(msg);
                break;
            }
        }
    }
    if !stats.converged {
        x = best.1;
        if stats.failure.is_none() {
            stats.failure = Some(format!("k_max = {} reached", cfg.k_max));
        }
    }
    stats.solution_rank = x.rank();
    stats.total_time = start.elapsed().as_secs_f64();
    stats.accumulated_time = stats.total_time;
    Ok((x, stats))
}

fn record(stats: &mut SolveStats, iteration: usize, site: TruncSite, before: usize, t: &LowRankMatrix) {
    stats.ranks.push(RankRecord { iteration, site, rank_before: before, rank_after: t.rank() });
}

fn trunc_at(
    stats: &mut SolveStats,
    iteration: usize,
    site: TruncSite,
    m: LowRankMatrix,
    eps: f64,
) -> LowRankMatrix {
    let before = m.rank();
    let t = m.truncate(eps, None);
    record(stats, iteration, site, before, &t);
    t
}

#[allow(clippy::too_many_arguments)]
fn run_attempt(
    matvec: &mut dyn FnMut(&LowRankMatrix) -> Result<LowRankMatrix>,
    precond: &mut dyn FnMut(&LowRankMatrix) -> Result<LowRankMatrix>,
    b: &LowRankMatrix,
    b_norm: f64,
    x: &mut LowRankMatrix,
    best: &mut (f64, LowRankMatrix),
    eps: f64,
    cfg: &SolveConfig,
    stats: &mut SolveStats,
) -> Result<Outcome> {
    let true_residual = |matvec: &mut dyn FnMut(&LowRankMatrix) -> Result<LowRankMatrix>,
                         x: &LowRankMatrix|
     -> Result<LowRankMatrix> {
        if x.rank() == 0 {
            Ok(b.clone())
        } else {
            axpy(-1.0, &matvec(x)?, b)
        }
    };
    let k0 = stats.iterations;
    let mut r = trunc_at(stats, k0, TruncSite::R, true_residual(matvec, x)?, eps);
    let mut res = r.norm() / b_norm;
    if stats.residuals.is_empty() {
        stats.residuals.push(res);
    }
    if res < best.0 {
        *best = (res, x.clone());
    }
    if res <= cfg.eps_pcg {
        stats.converged = true;
        stats.final_residual = res;
        return Ok(Outcome::Done);
    }
    let mut z = trunc_at(stats, k0, TruncSite::Z, precond(&r)?, eps);
    let mut p = z.clone();
    let mut rz = inner(&r, &z)?;
    if !(rz > 0.0) {
        return Ok(Outcome::Breakdown(format!("⟨R,Z⟩ = {rz:e} at iteration {k0}")));
    }
    while stats.iterations < cfg.k_max {
        let tic = Instant::now();
        stats.iterations += 1;
        let k = stats.iterations;
        let s = trunc_at(stats, k, TruncSite::S, matvec(&p)?, eps);
        let ps = inner(&p, &s)?;
        if !(ps > 0.0) {
            stats.iteration_times.push(tic.elapsed().as_secs_f64());
            return Ok(Outcome::Breakdown(format!("⟨P,S⟩ = {ps:e} at iteration {k}")));
        }
        let alpha = rz / ps;
        *x = trunc_at(stats, k, TruncSite::X, axpy(alpha, &p, x)?, eps);
        let updated = if cfg.recompute_every > 0 && k.is_multiple_of(cfg.recompute_every) {
            true_residual(matvec, x)?
        } else {
            axpy(-alpha, &s, &r)?
        };
        r = trunc_at(stats, k, TruncSite::R, updated, eps);
        res = r.norm() / b_norm;
        stats.residuals.push(res);
        if res < best.0 {
            *best = (res, x.clone());
        }
        if res <= cfg.eps_pcg {
            stats.iteration_times.push(tic.elapsed().as_secs_f64());
            stats.converged = true;
            stats.final_residual = true_residual(matvec, x)?.truncate(1e-15, None).norm() / b_norm;
            return Ok(Outcome::Done);
        }
        z = trunc_at(stats, k, TruncSite::Z, precond(&r)?, eps);
        let rz_new = inner(&r, &z)?;
        if !(rz_new > 0.0) {
            stats.iteration_times.push(tic.elapsed().as_secs_f64());
            return Ok(Outcome::Breakdown(format!("⟨R,Z⟩ = {rz_new:e} at iteration {k}")));
        }
        let beta = rz_new / rz;
        rz = rz_new;
        p = trunc_at(stats, k, TruncSite::P, axpy(beta, &p, &z)?, eps);
        stats.iteration_times.push(tic.elapsed().as_secs_f64());
    }
    stats.final_residual = best.0;
    Ok(Outcome::Done)
}

/// Preconditioner families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecondKind {
    /// `(γA₁² + I)⁻¹` for the modified equation.
    S1,
    /// `(γA₂² + I)⁻¹` for the modified equation.
    S2,
    /// `(γA₁ + A₁⁻¹)⁻¹` for the primal equation.
    B1,
    /// `(γA₂ + A₂⁻¹)⁻¹` for the primal equation.
    B2,
}

impl PrecondKind {
    pub fn generator(self) -> Generator {
        match self {
            PrecondKind::S1 | PrecondKind::B1 => Generator::A1,
            PrecondKind::S2 | PrecondKind::B2 => Generator::A2,
        }
    }

    pub fn function(self) -> SpectralFunction {
        match self {
            PrecondKind::S1 | PrecondKind::S2 => SpectralFunction::SType,
            PrecondKind::B1 | PrecondKind::B2 => SpectralFunction::BType,
        }
    }

    pub fn formulation(self) -> Formulation {
        match self {
            PrecondKind::S1 | PrecondKind::S2 => Formulation::Modified,
            PrecondKind::B1 | PrecondKind::B2 => Formulation::Primal,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrecondKind::S1 => "S1",
            PrecondKind::S2 => "S2",
            PrecondKind::B1 => "B1",
            PrecondKind::B2 => "B2",
        }
    }
}

/// Separable approximations of the stiffness operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    /// Anisotropic Laplacian.
    A1,
    /// Averaged 1D stiffness matrices.
    A2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// `(γA² + I)u = AF`
    Modified,
    /// `(γA + A⁻¹)u = F`
    Primal,
}

/// Assembled operator with its averaged data, ready for preconditioning.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub coeff: SeparableCoefficient,
    pub grid: GridSpec,
    pub operator: KroneckerOperator,
    pub averaged: AveragedData,
}

impl ControlProblem {
    pub fn new(coeff: SeparableCoefficient, grid: GridSpec, assembly: AssemblyOptions) -> Result<Self> {
        if grid.dim() != 2 {
            return Err(Error::Unsupported("control solves are two-dimensional".into()));
        }
        let operator = assemble_stiffness(&coeff, &grid, assembly)?;
        let averaged = compute_averaged_data(&coeff, &grid, assembly)?;
        Ok(Self { coeff, grid, operator, averaged })
    }

    pub fn generator(&self, g: Generator) -> Result<KroneckerOperator> {
        match g {
            Generator::A1 => build_a1(&self.grid, &self.averaged),
            Generator::A2 => build_a2(&self.grid, &self.coeff, &self.averaged),
        }
    }

    pub fn spectral(
        &self,
        g: Generator,
        f: SpectralFunction,
        gamma: f64,
        mcfg: &MultiplierConfig,
    ) -> Result<SpectralPreconditioner> {
        let basis = diagonalize(&self.generator(g)?)?;
        build_preconditioner(&basis, f, gamma, mcfg)
    }

    pub fn preconditioner(
        &self,
        kind: PrecondKind,
        gamma: f64,
        mcfg: &MultiplierConfig,
    ) -> Result<SpectralPreconditioner> {
        self.spectral(kind.generator(), kind.function(), gamma, mcfg)
    }
}

fn zero_like(f: &LowRankMatrix) -> LowRankMatrix {
    let (n1, n2) = f.shape();
    LowRankMatrix::zeros(n1, n2)
}

/// Solves `(γA² + I)u = AF` with a prebuilt S-type preconditioner.
pub fn solve_modified_with(
    a: &KroneckerOperator,
    f: &LowRankMatrix,
    cfg: &SolveConfig,
    precond: &SpectralPreconditioner,
    x0: Option<&LowRankMatrix>,
) -> Result<(LowRankMatrix, SolveStats)> {
    cfg.validate()?;
    let eps = cfg.eps_trunc;
    let rhs = a.apply_truncated(f, eps)?;
    let gamma = cfg.gamma;
    let mut matvec = |x: &LowRankMatrix| axpy(gamma, &a.apply_squared(x, eps)?, x);
    let mut pre = |r: &LowRankMatrix| precond.apply(r, eps);
    let zero = zero_like(f);
    pcg_solve(&mut matvec, &mut pre, &rhs, x0.unwrap_or(&zero), cfg)
}

/// Modified control equation with an S-type preconditioner.
pub fn solve_control_modified(
    problem: &ControlProblem,
    f: &LowRankMatrix,
    cfg: &SolveConfig,
    kind: PrecondKind,
    mcfg: &MultiplierConfig,
    x0: Option<&LowRankMatrix>,
) -> Result<(LowRankMatrix, SolveStats)> {
    if kind.formulation() != Formulation::Modified {
        return Err(Error::InvalidArgument(format!("{} is not an S-type preconditioner", kind.name())));
    }
    let tic = Instant::now();
    let precond = problem.preconditioner(kind, cfg.gamma, mcfg)?;
    let setup = tic.elapsed().as_secs_f64();
    let (u, mut stats) = solve_modified_with(&problem.operator, f, cfg, &precond, x0)?;
    stats.setup_time = setup;
    Ok((u, stats))
}

/// Solves `(γA + A⁻¹)u = F` with prebuilt outer (B-type) and inner
/// (inverse-type) preconditioners.
pub fn solve_primal_with(
    a: &KroneckerOperator,
    f: &LowRankMatrix,
    cfg: &SolveConfig,
    outer: &SpectralPreconditioner,
    inner_precond: &SpectralPreconditioner,
    x0: Option<&LowRankMatrix>,
) -> Result<(LowRankMatrix, SolveStats)> {
    cfg.validate()?;
    let eps = cfg.eps_trunc;
    let inner_cfg = cfg.inner();
    let gamma = cfg.gamma;
    let mut inner_iterations = 0usize;
    let mut inner_failures: Vec<String> = Vec::new();
    let (u, mut stats) = {
        let mut matvec = |x: &LowRankMatrix| -> Result<LowRankMatrix> {
            let (y, s) = solve_spd(a, inner_precond, x, &inner_cfg)?;
            inner_iterations += s.iterations;
            if let Some(msg) = s.failure {
                inner_failures.push(msg);
            }
            axpy(gamma, &a.apply_truncated(x, eps)?, &y)
        };
        let mut pre = |r: &LowRankMatrix| outer.apply(r, eps);
        let zero = zero_like(f);
        pcg_solve(&mut matvec, &mut pre, f, x0.unwrap_or(&zero), cfg)?
    };
    stats.inner_iterations = inner_iterations;
    if let Some(first) = inner_failures.first() {
        let msg = format!("{} inner solve(s) did not converge, first: {first}", inner_failures.len());
        stats.failure = Some(match stats.failure.take() {
            Some(outer_msg) => format!("{outer_msg}; {msg}"),
            None => msg,
        });
    }
    Ok((u, stats))
}

/// Primal control equation with a B-type preconditioner; the embedded `A⁻¹`
/// solves use the inverse of the same generator.
pub fn solve_control_primal(
    problem: &ControlProblem,
    f: &LowRankMatrix,
    cfg: &SolveConfig,
    kind: PrecondKind,
    mcfg: &MultiplierConfig,
    x0: Option<&LowRankMatrix>,
) -> Result<(LowRankMatrix, SolveStats)> {
    if kind.formulation() != Formulation::Primal {
        return Err(Error::InvalidArgument(format!("{} is not a B-type preconditioner", kind.name())));
    }
    let tic = Instant::now();
    let outer = problem.preconditioner(kind, cfg.gamma, mcfg)?;
    let inner_precond = problem.spectral(kind.generator(), SpectralFunction::Inverse, cfg.gamma, mcfg)?;
    let setup = tic.elapsed().as_secs_f64();
    let (u, mut stats) = solve_primal_with(&problem.operator, f, cfg, &outer, &inner_precond, x0)?;
    stats.setup_time = setup;
    Ok((u, stats))
}

/// `A y = rhs` with an inverse-type preconditioner.
pub fn solve_spd(
    a: &KroneckerOperator,
    precond: &SpectralPreconditioner,
    rhs: &LowRankMatrix,
    cfg: &SolveConfig,
) -> Result<(LowRankMatrix, SolveStats)> {
    let eps = cfg.eps_trunc;
    let mut matvec = |x: &LowRankMatrix| a.apply(x);
    let mut pre = |r: &LowRankMatrix| precond.apply(r, eps);
    pcg_solve(&mut matvec, &mut pre, rhs, &zero_like(rhs), cfg)
}

/// Recovers the state `y = A⁻¹u` from a control.
pub fn solve_state(
    problem: &ControlProblem,
    u: &LowRankMatrix,
    cfg: &SolveConfig,
    mcfg: &MultiplierConfig,
) -> Result<(LowRankMatrix, SolveStats)> {
    let precond = problem.spectral(Generator::A2, SpectralFunction::Inverse, cfg.gamma, mcfg)?;
    solve_spd(&problem.operator, &precond, u, cfg)
}
