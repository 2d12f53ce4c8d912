//! Run a small experiment ladder and write the CSV/JSON report files.

use lowrank_control::experiment::{run_experiment, ExperimentConfig, PresetChoice};

fn main() -> lowrank_control::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/experiment-report".into());
    let cfg = ExperimentConfig {
        preset: PresetChoice::Test2,
        l_min: 4,
        l_max: 7,
        cascadic: true,
        dense_oracle: true,
        out_dir: out.into(),
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    for l in &report.levels {
        println!(
            "{}^2: {} iterations, rank {}, oracle error {:?}",
            l.n, l.iterations, l.solution_rank, l.oracle_error
        );
    }
    for row in &report.intergrid {
        println!("c_h({}^2) = {:.4}", row.n, row.c_h);
    }
    println!("files written to {}", cfg.out_dir.display());
    Ok(())
}
