//! Coarse-to-fine cascadic solves on nested grids `n_L = 2^L − 1`.
//!
//! Each level is solved once; the solution is prolongated with 1D cubic
//! splines applied to the factor panels and used as the initial guess on the
//! next level. There is no coarse-grid correction.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coefficient::{GridSpec, SeparableCoefficient};
use crate::error::{Error, Result};
use crate::kronop::AssemblyOptions;
use crate::lowrank::LowRankMatrix;
use crate::pcg::{
    solve_modified_with, solve_primal_with, ControlProblem, Formulation, PrecondKind, SolveConfig,
    SolveStats,
};
use crate::rhs::GaussianRhs;
use crate::spectral::{MultiplierConfig, SpectralFunction};

/// Natural cubic spline through `(x_i, v_i)` with zero values at `x = 0, 1`,
/// evaluated on the grid of `2n + 1` interior nodes.
pub fn prolongate_1d(v: &[f64]) -> Vec<f64> {
    let panel = DMatrix::from_column_slice(v.len(), 1, v);
    prolongate_panel(&panel).as_slice().to_vec()
}

/// Column-wise [`prolongate_1d`].
pub fn prolongate_panel(panel: &DMatrix<f64>) -> DMatrix<f64> {
    let n = panel.nrows();
    let cols = panel.ncols();
    let mut out = DMatrix::zeros(2 * n + 1, cols);
    if n == 0 {
        return out;
    }
    let h = 1.0 / (n as f64 + 1.0);
    // Thomas elimination for tridiag(1, 4, 1), shared by all columns.
    let mut c_prime = vec![0.0; n];
    let mut denom = vec![0.0; n];
    for i in 0..n {
        denom[i] = 4.0 - if i > 0 { c_prime[i - 1] } else { 0.0 };
        c_prime[i] = 1.0 / denom[i];
    }
    let mut m = vec![0.0; n + 2];
    let mut y = vec![0.0; n + 2];
    for (c, col) in panel.column_iter().enumerate() {
        y[1..=n].copy_from_slice(col.as_slice());
        // Second derivatives at interior knots; natural ends m[0] = m[n+1] = 0.
        let mut d = vec![0.0; n];
        for i in 0..n {
            let rhs = 6.0 / (h * h) * (y[i] - 2.0 * y[i + 1] + y[i + 2]);
            d[i] = (rhs - if i > 0 { d[i - 1] } else { 0.0 }) / denom[i];
        }
        for i in (0..n).rev() {
            m[i + 1] = d[i] - if i + 1 < n { c_prime[i] * m[i + 2] } else { 0.0 };
        }
        let mut dst = out.column_mut(c);
        for i in 0..=n {
            // Fine node 2i+1 (1-based) is the midpoint of knots i and i+1.
            dst[2 * i] = 0.5 * (y[i] + y[i + 1]) - h * h * (m[i] + m[i + 1]) / 16.0;
            if i < n {
                dst[2 * i + 1] = y[i + 1];
            }
        }
    }
    out
}

/// Prolongates both factor panels; the rank is unchanged.
pub fn prolongate_lowrank(x: &LowRankMatrix) -> LowRankMatrix {
    x.map_panels(prolongate_panel, prolongate_panel)
}

/// Restriction by injection: keeps the fine nodes that coincide with coarse
/// ones (odd 0-based indices).
pub fn inject_panel(panel: &DMatrix<f64>) -> DMatrix<f64> {
    let nc = (panel.nrows().saturating_sub(1)) / 2;
    DMatrix::from_fn(nc, panel.ncols(), |i, c| panel[(2 * i + 1, c)])
}

pub fn inject_lowrank(x: &LowRankMatrix) -> LowRankMatrix {
    x.map_panels(inject_panel, inject_panel)
}

/// Levels `l_min..=l_max` with `n_L = 2^L − 1` in two dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLadder {
    pub l_min: u32,
    pub l_max: u32,
}

impl GridLadder {
    pub fn new(l_min: u32, l_max: u32) -> Result<Self> {
        if l_min == 0 || l_min > l_max || l_max > 24 {
            return Err(Error::InvalidArgument(format!(
                "ladder levels {l_min}..={l_max} are not a valid range within 1..=24"
            )));
        }
        Ok(Self { l_min, l_max })
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.l_min..=self.l_max
    }

    pub fn grid(&self, level: u32) -> Result<GridSpec> {
        GridSpec::level(2, level)
    }

    pub fn grids(&self) -> Result<Vec<GridSpec>> {
        self.levels().map(|l| self.grid(l)).collect()
    }
}

/// Everything needed to pose and precondition the control problem on any
/// grid of a ladder.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub coeff: SeparableCoefficient,
    pub assembly: AssemblyOptions,
    pub kind: PrecondKind,
    pub multiplier: MultiplierConfig,
    pub rhs: GaussianRhs,
}

impl ProblemSpec {
    pub fn new(coeff: SeparableCoefficient, kind: PrecondKind) -> Self {
        Self {
            coeff,
            assembly: AssemblyOptions::default(),
            kind,
            multiplier: MultiplierConfig::default(),
            rhs: GaussianRhs::default(),
        }
    }
}

/// Assembles, builds the preconditioner and solves on one grid.
pub fn solve_level(
    spec: &ProblemSpec,
    grid: &GridSpec,
    cfg: &SolveConfig,
    x0: Option<&LowRankMatrix>,
) -> Result<(LowRankMatrix, SolveStats)> {
    let tic = Instant::now();
    let problem = ControlProblem::new(spec.coeff.clone(), grid.clone(), spec.assembly)?;
    let f = spec.rhs.on(grid);
    let outer = problem.preconditioner(spec.kind, cfg.gamma, &spec.multiplier)?;
    let (u, mut stats) = match spec.kind.formulation() {
        Formulation::Modified => {
            let setup = tic.elapsed().as_secs_f64();
            let (u, mut s) = solve_modified_with(&problem.operator, &f, cfg, &outer, x0)?;
            s.setup_time = setup;
            (u, s)
        }
        Formulation::Primal => {
            let inner = problem.spectral(
                spec.kind.generator(),
                SpectralFunction::Inverse,
                cfg.gamma,
                &spec.multiplier,
            )?;
            let setup = tic.elapsed().as_secs_f64();
            let (u, mut s) = solve_primal_with(&problem.operator, &f, cfg, &outer, &inner, x0)?;
            s.setup_time = setup;
            (u, s)
        }
    };
    stats.accumulated_time = stats.total_time;
    Ok((u, stats))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadicOptions {
    /// Truncate the prolongated initial guess to at most this rank.
    pub initial_rank: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct LevelResult {
    pub level: u32,
    pub grid: GridSpec,
    pub solution: LowRankMatrix,
    pub stats: SolveStats,
}

#[derive(Clone, Debug)]
pub struct CascadicResult {
    pub levels: Vec<LevelResult>,
    /// Sum of PCG times over all levels.
    pub accumulated_time: f64,
}

/// Solves the coarsest level from zero and every finer level from the
/// prolongated previous solution.
pub fn cascadic_solve(
    spec: &ProblemSpec,
    ladder: &GridLadder,
    cfg: &SolveConfig,
    opts: &CascadicOptions,
) -> Result<CascadicResult> {
    let mut levels: Vec<LevelResult> = Vec::new();
    let mut accumulated = 0.0;
    for level in ladder.levels() {
        let grid = ladder.grid(level)?;
        let x0 = levels.last().map(|prev| {
            let p = prolongate_lowrank(&prev.solution);
            match opts.initial_rank {
                Some(k) => p.truncate(0.0, Some(k)),
                None => p,
            }
        });
        let (u, mut stats) = solve_level(spec, &grid, cfg, x0.as_ref())?;
        accumulated += stats.total_time;
        stats.accumulated_time = accumulated;
        levels.push(LevelResult { level, grid, solution: u, stats });
    }
    Ok(CascadicResult { levels, accumulated_time: accumulated })
}
