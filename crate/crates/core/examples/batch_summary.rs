//! A small three-mode batch and its summary table.
//!
//! cargo run --release --example batch_summary

use std::sync::Arc;

use conav::config::RunConfig;
use conav::sim::{run_batch, BatchSpec};

fn main() -> conav::Result<()> {
    let cfg = RunConfig {
        seeds: vec![1, 2, 3],
        repetitions: 1,
        ..RunConfig::default()
    };
    let scenario = Arc::new(cfg.build_scenario()?);
    let batch = BatchSpec {
        runs: &cfg.runs,
        seeds: &cfg.seeds,
        repetitions: cfg.repetitions,
        jobs: 0,
    };
    let (records, summary) = run_batch(scenario, &batch, &cfg.sim)?;
    println!("{} trials\n", records.len());
    print!("{}", summary.to_table());
    println!();
    print!("{}", summary.to_csv()?);
    Ok(())
}
