//! One trial per mode on the default course, with the scripted users.
//!
//! cargo run --release --example compare_modes -- 4

use std::sync::Arc;

use conav::config::RunConfig;
use conav::metrics::TrialMetrics;
use conav::sim::run_trial;

fn main() -> conav::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = RunConfig::default();
    let scenario = Arc::new(cfg.build_scenario()?);
    for run in &cfg.runs {
        let rec = run_trial(scenario.clone(), run.mode, run.profile, seed, 0, &cfg.sim)?;
        let m = TrialMetrics::of(&rec);
        println!(
            "{:<10} {:<17} {:?}  time {:?}  length {:?}  control {:?}  collisions {}",
            run.mode.as_str(),
            run.profile.as_str(),
            rec.end_reason,
            m.completion_time.value(),
            m.trajectory_length.value(),
            m.control_percentage.value(),
            m.collisions
        );
    }
    Ok(())
}
