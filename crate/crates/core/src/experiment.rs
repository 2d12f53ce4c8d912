//! Experiment driver: configuration, coefficient files and report emission.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cascadic::{prolongate_lowrank, solve_level, GridLadder, ProblemSpec};
use crate::coefficient::{Preset, SeparableCoefficient, Univariate};
use crate::error::{Error, Result};
use crate::kronop::AssemblyOptions;
use crate::lowrank::{axpy, LowRankMatrix};
use crate::oracle::{dense_assemble, dense_solve_control, unvectorize, vectorize, BANDED_CAP, DENSE_CAP};
use crate::pcg::{Formulation, PrecondKind, SolveConfig, SolveStats};
use crate::rhs::GaussianRhs;
use crate::spectral::{MultiplierConfig, MultiplierMethod};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetChoice {
    Test1,
    Test2,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub preset: PresetChoice,
    /// Coefficient document, required for `custom`.
    pub coefficient_file: Option<PathBuf>,
    pub formulation: Formulation,
    pub preconditioner: PrecondKind,
    pub gamma: f64,
    pub l_min: u32,
    pub l_max: u32,
    pub cascadic: bool,
    pub eps_pcg: f64,
    pub eps_trunc: f64,
    pub k_max: usize,
    /// Cap on the number of separable terms of the preconditioner.
    pub rank_precond: usize,
    pub multiplier_method: MultiplierMethod,
    pub rhs: GaussianRhs,
    pub assembly: AssemblyOptions,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Compare each level with a direct solve when the grid is small enough.
    pub dense_oracle: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solve = SolveConfig::default();
        let mult = MultiplierConfig::default();
        Self {
            preset: PresetChoice::Test2,
            coefficient_file: None,
            formulation: Formulation::Modified,
            preconditioner: PrecondKind::S2,
            gamma: solve.gamma,
            l_min: 5,
            l_max: 10,
            cascadic: false,
            eps_pcg: solve.eps_pcg,
            eps_trunc: solve.eps_trunc,
            k_max: solve.k_max,
            rank_precond: mult.rank_max,
            multiplier_method: mult.method,
            rhs: GaussianRhs::default(),
            assembly: AssemblyOptions::default(),
            out_dir: PathBuf::from("out"),
            seed: 0,
            dense_oracle: false,
        }
    }
}

impl ExperimentConfig {
    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            eps_pcg: self.eps_pcg,
            eps_trunc: self.eps_trunc,
            k_max: self.k_max,
            gamma: self.gamma,
            ..SolveConfig::default()
        }
    }

    pub fn multiplier_config(&self) -> MultiplierConfig {
        MultiplierConfig {
            method: self.multiplier_method,
            rank_max: self.rank_precond,
            seed: self.seed,
            ..MultiplierConfig::default()
        }
    }

    pub fn ladder(&self) -> Result<GridLadder> {
        GridLadder::new(self.l_min, self.l_max)
    }

    pub fn validate(&self) -> Result<()> {
        self.solve_config().validate()?;
        self.ladder()?;
        if self.preconditioner.formulation() != self.formulation {
            return Err(Error::InvalidArgument(format!(
                "preconditioner {} belongs to the {:?} formulation",
                self.preconditioner.name(),
                self.preconditioner.formulation()
            )));
        }
        if self.rank_precond == 0 {
            return Err(Error::InvalidArgument("rank_precond must be positive".into()));
        }
        if !(self.rhs.width > 0.0) {
            return Err(Error::InvalidArgument(format!("Gaussian width {}", self.rhs.width)));
        }
        if self.preset == PresetChoice::Custom && self.coefficient_file.is_none() {
            return Err(Error::InvalidArgument("custom preset needs a coefficient file".into()));
        }
        Ok(())
    }

    pub fn coefficient(&self) -> Result<SeparableCoefficient> {
        match self.preset {
            PresetChoice::Test1 => Ok(SeparableCoefficient::test1()),
            PresetChoice::Test2 => Ok(SeparableCoefficient::test2()),
            PresetChoice::Custom => {
                let path = self
                    .coefficient_file
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("custom preset needs a coefficient file".into()))?;
                load_coefficient(path)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientDoc {
    d: usize,
    #[serde(rename = "R")]
    r: usize,
    factors: Vec<Vec<FactorDoc>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FactorDoc {
    Samples { samples: Vec<f64> },
    Preset { preset: String },
}

/// Parses a coefficient document
/// `{"d": 2, "R": 1, "factors": [[{"samples": [...]}, {"preset": "x+2"}]]}`.
pub fn parse_coefficient(text: &str) -> Result<SeparableCoefficient> {
    let doc: CoefficientDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.factors.is_empty() {
        return Err(Error::InvalidCoefficient("empty factor list".into()));
    }
    if doc.factors.len() != doc.r {
        return Err(Error::InvalidCoefficient(format!(
            "R = {} but {} terms given",
            doc.r,
            doc.factors.len()
        )));
    }
    let mut factors = Vec::with_capacity(doc.r);
    for (k, term) in doc.factors.into_iter().enumerate() {
        if term.len() != doc.d {
            return Err(Error::InvalidCoefficient(format!(
                "term {k} has {} factors, expected d = {}",
                term.len(),
                doc.d
            )));
        }
        let mut row = Vec::with_capacity(doc.d);
        for (l, f) in term.into_iter().enumerate() {
            row.push(match f {
                FactorDoc::Samples { samples } => {
                    if samples.len() < 2 {
                        return Err(Error::InvalidCoefficient(format!(
                            "term {k}, dimension {l}: at least two samples required"
                        )));
                    }
                    if let Some((j, v)) = samples.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                        return Err(Error::InvalidCoefficient(format!(
                            "term {k}, dimension {l}, sample {j}: value {v} is not positive"
                        )));
                    }
                    Univariate::Sampled(samples)
                }
                FactorDoc::Preset { preset } => Univariate::Preset(Preset::from_id(&preset).ok_or_else(|| {
                    Error::InvalidCoefficient(format!("term {k}, dimension {l}: unknown preset {preset:?}"))
                })?),
            });
        }
        factors.push(row);
    }
    SeparableCoefficient::new(doc.d, factors)
}

pub fn load_coefficient(path: &Path) -> Result<SeparableCoefficient> {
    parse_coefficient(&fs::read_to_string(path)?)
}

/// Serializes a coefficient; preset factors keep their id, all others are
/// sampled at `samples` equispaced points.
pub fn coefficient_to_json(coeff: &SeparableCoefficient, samples: usize) -> Result<String> {
    if samples < 2 {
        return Err(Error::InvalidArgument("at least two samples required".into()));
    }
    let factors = coeff
        .factors()
        .iter()
        .map(|term| {
            term.iter()
                .map(|f| match f {
                    Univariate::Preset(p) => FactorDoc::Preset { preset: p.id().to_string() },
                    other => FactorDoc::Samples { samples: other.sample(samples) },
                })
                .collect()
        })
        .collect();
    let doc = CoefficientDoc { d: coeff.dim(), r: coeff.rank(), factors };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn save_coefficient(coeff: &SeparableCoefficient, path: &Path, samples: usize) -> Result<()> {
    fs::write(path, coefficient_to_json(coeff, samples)?)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: u32,
    pub n: usize,
    pub iterations: usize,
    pub time_pcg: f64,
    pub time_per_iter: f64,
    pub setup_time: f64,
    pub accumulated_time: f64,
    pub solution_rank: usize,
    pub converged: bool,
    pub final_residual: f64,
    /// Relative ℓ₂ difference to the direct solve, when requested.
    pub oracle_error: Option<f64>,
    pub failure: Option<String>,
    pub stats: Option<SolveStats>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntergridRow {
    pub level: u32,
    pub n: usize,
    pub c_h: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub levels: Vec<LevelReport>,
    pub intergrid: Vec<IntergridRow>,
    pub accumulated_time: f64,
}

impl ExperimentReport {
    pub fn failures(&self) -> usize {
        self.levels.iter().filter(|l| l.failure.is_some()).count()
    }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn oracle_error(spec: &ProblemSpec, cfg: &ExperimentConfig, level: u32, u: &LowRankMatrix) -> Result<Option<f64>> {
    let grid = cfg.ladder()?.grid(level)?;
    let cap = match cfg.formulation {
        Formulation::Modified => BANDED_CAP.min(128 * 128),
        Formulation::Primal => DENSE_CAP,
    };
    if grid.unknowns() > cap {
        return Ok(None);
    }
    let problem = dense_assemble(&spec.coeff, &grid, spec.assembly)?;
    let f = vectorize(&spec.rhs.on(&grid).to_dense()?);
    let reference = dense_solve_control(&problem, cfg.gamma, cfg.formulation, &f)?;
    let (n1, n2) = u.shape();
    let diff = LowRankMatrix::from_dense(&unvectorize(&reference, n1, n2), 1e-15)?;
    let err = axpy(-1.0, u, &diff)?.truncate(1e-15, None).norm() / reference.norm();
    Ok(Some(err))
}

/// Runs the ladder and writes all report files into `cfg.out_dir`.
///
/// A level that errors or does not converge is recorded and the run goes on;
/// the next cascadic level then starts from zero.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let coeff = cfg.coefficient()?;
    let mut spec = ProblemSpec::new(coeff, cfg.preconditioner);
    spec.assembly = cfg.assembly;
    spec.multiplier = cfg.multiplier_config();
    spec.rhs = cfg.rhs;
    let solve = cfg.solve_config();
    let ladder = cfg.ladder()?;

    let mut levels: Vec<LevelReport> = Vec::new();
    let mut solutions: Vec<Option<LowRankMatrix>> = Vec::new();
    let mut accumulated = 0.0;
    for level in ladder.levels() {
        let grid = ladder.grid(level)?;
        let x0 = match (cfg.cascadic, solutions.last()) {
            (true, Some(Some(prev))) => Some(prolongate_lowrank(prev)),
            _ => None,
        };
        match solve_level(&spec, &grid, &solve, x0.as_ref()) {
            Ok((u, stats)) => {
                accumulated += stats.total_time;
                let oracle = if cfg.dense_oracle {
                    oracle_error(&spec, cfg, level, &u).unwrap_or(None)
                } else {
                    None
                };
                let failure = (!stats.converged).then(|| {
                    stats.failure.clone().unwrap_or_else(|| "not converged".to_string())
                });
                levels.push(LevelReport {
                    level,
                    n: grid.n(0),
                    iterations: stats.iterations,
                    time_pcg: stats.total_time,
                    time_per_iter: stats.time_per_iteration(),
                    setup_time: stats.setup_time,
                    accumulated_time: accumulated,
                    solution_rank: u.rank(),
                    converged: stats.converged,
                    final_residual: stats.final_residual,
                    oracle_error: oracle,
                    failure: failure.clone(),
                    stats: Some(stats),
                });
                solutions.push(failure.is_none().then_some(u));
            }
            Err(e) => {
                levels.push(LevelReport {
                    level,
                    n: grid.n(0),
                    iterations: 0,
                    time_pcg: 0.0,
                    time_per_iter: 0.0,
                    setup_time: 0.0,
                    accumulated_time: accumulated,
                    solution_rank: 0,
                    converged: false,
                    final_residual: f64::NAN,
                    oracle_error: None,
                    failure: Some(e.to_string()),
                    stats: None,
                });
                solutions.push(None);
            }
        }
    }

    let mut intergrid = Vec::new();
    for w in 0..solutions.len().saturating_sub(2) {
        if let (Some(a), Some(b), Some(c)) = (&solutions[w], &solutions[w + 1], &solutions[w + 2]) {
            if let Ok(c_h) = crate::oracle::intergrid_ratio(a, b, c) {
                intergrid.push(IntergridRow { level: levels[w + 1].level, n: levels[w + 1].n, c_h });
            }
        }
    }

    let report = ExperimentReport { config: cfg.clone(), levels, intergrid, accumulated_time: accumulated };
    write_report(&report, &solutions)?;
    Ok(report)
}

fn write_report(report: &ExperimentReport, solutions: &[Option<LowRankMatrix>]) -> Result<()> {
    let dir = &report.config.out_dir;
    fs::create_dir_all(dir.join("factors"))?;

    let mut table = csv::Writer::from_path(dir.join("table.csv"))?;
    table.write_record(["grid size", "# iter", "time pcg (in sec.)", "time per iter", "sol. rank"])?;
    for l in &report.levels {
        table.write_record([
            format!("{}^2", l.n),
            l.iterations.to_string(),
            sci(l.time_pcg),
            sci(l.time_per_iter),
            l.solution_rank.to_string(),
        ])?;
    }
    table.flush()?;

    let mut acc = csv::Writer::from_path(dir.join("accumulated.csv"))?;
    acc.write_record(["mode", "accumulated time", "finest level time pcg"])?;
    let finest = report.levels.last().map_or(0.0, |l| l.time_pcg);
    acc.write_record([
        if report.config.cascadic { "cascadic" } else { "unigrid" }.to_string(),
        sci(report.accumulated_time),
        sci(finest),
    ])?;
    acc.flush()?;

    let mut res = csv::Writer::from_path(dir.join("residuals.csv"))?;
    res.write_record(["grid size", "iteration", "relative residual"])?;
    let mut ranks = csv::Writer::from_path(dir.join("rank_propagation.csv"))?;
    ranks.write_record(["grid size", "iteration", "site", "rank before", "rank after"])?;
    for l in &report.levels {
        let Some(stats) = &l.stats else { continue };
        for (k, r) in stats.residuals.iter().enumerate() {
            res.write_record([format!("{}^2", l.n), k.to_string(), sci(*r)])?;
        }
        for rec in &stats.ranks {
            ranks.write_record([
                format!("{}^2", l.n),
                rec.iteration.to_string(),
                format!("{:?}", rec.site),
                rec.rank_before.to_string(),
                rec.rank_after.to_string(),
            ])?;
        }
    }
    res.flush()?;
    ranks.flush()?;

    let mut conv = csv::Writer::from_path(dir.join("convrate.csv"))?;
    conv.write_record(["grid size n^2", "c_h"])?;
    for row in &report.intergrid {
        conv.write_record([format!("{}^2", row.n), sci(row.c_h)])?;
    }
    conv.flush()?;

    for (l, u) in report.levels.iter().zip(solutions) {
        let Some(u) = u else { continue };
        for (name, panel) in [("left", u.left()), ("right", u.right())] {
            let mut w = csv::Writer::from_path(dir.join("factors").join(format!("level{}_{name}.csv", l.level)))?;
            for row in panel.row_iter() {
                w.write_record(row.iter().map(|v| sci(*v)))?;
            }
            w.flush()?;
        }
    }

    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_round_trip() {
        let c = SeparableCoefficient::test2();
        let text = coefficient_to_json(&c, 1024).unwrap();
        let back = parse_coefficient(&text).unwrap();
        for i in 0..=50 {
            for j in 0..=50 {
                let x = [i as f64 / 50.0, j as f64 / 50.0];
                assert!((c.eval(&x) - back.eval(&x)).abs() <= 1e-9 * c.eval(&x));
            }
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        match parse_coefficient("{\"d\": 2,\n  \"R\": }") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 8)),
            other => panic!("{other:?}"),
        }
        let empty = r#"{"d": 2, "R": 0, "factors": []}"#;
        assert!(matches!(parse_coefficient(empty), Err(Error::InvalidCoefficient(_))));
        let neg = r#"{"d": 2, "R": 1, "factors": [[{"samples": [1.0, 2.0]}, {"samples": [1.0, -0.5, 2.0]}]]}"#;
        match parse_coefficient(neg) {
            Err(Error::InvalidCoefficient(msg)) => assert!(msg.contains("term 0, dimension 1, sample 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let unknown = r#"{"d": 2, "R": 1, "factors": [[{"preset": "x+2"}, {"preset": "cosh"}]]}"#;
        assert!(parse_coefficient(unknown).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.formulation = Formulation::Primal;
        assert!(c.validate().is_err());
        c.preconditioner = PrecondKind::B2;
        assert!(c.validate().is_ok());
        c.preset = PresetChoice::Custom;
        assert!(c.validate().is_err());
        let json = serde_json::to_string(&ExperimentConfig::default()).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ExperimentConfig::default());
    }
}
