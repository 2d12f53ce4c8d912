use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use lowrank_control::experiment::{run_experiment, ExperimentConfig, PresetChoice};
use lowrank_control::pcg::{Formulation, PrecondKind};

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Test1,
    Test2,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecondArg {
    #[value(name = "S1")]
    S1,
    #[value(name = "S2")]
    S2,
    #[value(name = "B1")]
    B1,
    #[value(name = "B2")]
    B2,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    Modified,
    Primal,
}

/// Low-rank PCG for the elliptic control equation on a ladder of grids.
///
/// The thread count is taken from LRCONTROL_THREADS when set.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, value_enum, default_value = "test2")]
    preset: PresetArg,
    /// Coefficient document for `--preset custom`.
    #[arg(long)]
    coefficient: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "S2")]
    precond: PrecondArg,
    /// Defaults to the formulation of the chosen preconditioner.
    #[arg(long, value_enum)]
    formulation: Option<FormulationArg>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 5)]
    lmin: u32,
    #[arg(long, default_value_t = 10)]
    lmax: u32,
    #[arg(long)]
    cascadic: bool,
    #[arg(long, default_value_t = 1e-7)]
    eps_pcg: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps_trunc: f64,
    #[arg(long, default_value_t = 30)]
    rank_precond: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cross-check small levels against a direct solve.
    #[arg(long)]
    dense_oracle: bool,
    /// JSON experiment configuration; command-line flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn build_config(args: &Args) -> Result<ExperimentConfig, String> {
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        return serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()));
    }
    let preconditioner = match args.precond {
        PrecondArg::S1 => PrecondKind::S1,
        PrecondArg::S2 => PrecondKind::S2,
        PrecondArg::B1 => PrecondKind::B1,
        PrecondArg::B2 => PrecondKind::B2,
    };
    let formulation = match args.formulation {
        Some(FormulationArg::Modified) => Formulation::Modified,
        Some(FormulationArg::Primal) => Formulation::Primal,
        None => preconditioner.formulation(),
    };
    Ok(ExperimentConfig {
        preset: match args.preset {
            PresetArg::Test1 => PresetChoice::Test1,
            PresetArg::Test2 => PresetChoice::Test2,
            PresetArg::Custom => PresetChoice::Custom,
        },
        coefficient_file: args.coefficient.clone(),
        formulation,
        preconditioner,
        gamma: args.gamma,
        l_min: args.lmin,
        l_max: args.lmax,
        cascadic: args.cascadic,
        eps_pcg: args.eps_pcg,
        eps_trunc: args.eps_trunc,
        rank_precond: args.rank_precond,
        out_dir: args.out_dir.clone(),
        seed: args.seed,
        dense_oracle: args.dense_oracle,
        ..ExperimentConfig::default()
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(threads) = std::env::var("LRCONTROL_THREADS").ok().and_then(|v| v.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let cfg = match build_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    println!("{:>10} {:>6} {:>12} {:>12} {:>5}", "grid", "iter", "time pcg", "time/iter", "rank");
    for l in &report.levels {
        println!(
            "{:>10} {:>6} {:>12.4e} {:>12.4e} {:>5}{}",
            format!("{}^2", l.n),
            l.iterations,
            l.time_pcg,
            l.time_per_iter,
            l.solution_rank,
            l.failure.as_ref().map_or(String::new(), |f| format!("  FAILED: {f}"))
        );
    }
    for row in &report.intergrid {
        println!("c_h({}^2) = {:.4}", row.n, row.c_h);
    }
    println!("accumulated time {:.4e} s, reports in {}", report.accumulated_time, cfg.out_dir.display());
    if report.failures() > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
