//! Drive several solvers over a directory of generated instances and print
//! the CSV report, checkpointing every 20 iterations.
//!
//! Run with `cargo run --release --example benchmark_run`.

use mrflift::bench::{gen_to_dir, run, write_csv, Checkpoint, RunConfig, Solver};
use mrflift::gen::{EnergyMode, GenSpec};
use mrflift::lift::LiftConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("mrflift-bench");
    let _ = std::fs::remove_dir_all(&dir);
    gen_to_dir(
        &GenSpec::pairwise(200, 4.0, EnergyMode::potts(), 0),
        2,
        &dir,
        "potts",
    )?;
    let mut rows = Vec::new();
    for solver in [Solver::Lbp, Solver::Trbp, Solver::Neurolift] {
        let cfg = RunConfig {
            solver,
            instances: vec![dir.clone()],
            checkpoint: Checkpoint::Iterations(20),
            lift: LiftConfig {
                lift_dim: 64,
                ..LiftConfig::default()
            },
            trials: 2,
            time_limit: Some(30.0),
            ..RunConfig::default()
        };
        let out = run(&cfg)?;
        for (what, err) in &out.failures {
            eprintln!("{what}: {err}");
        }
        rows.extend(out.rows);
    }
    write_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
