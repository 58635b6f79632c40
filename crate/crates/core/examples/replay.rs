//! Drive a shared-mode session from a command queue, then replay its log
//! headlessly and check the two records match.
//!
//! cargo run --release --example replay

use std::sync::Arc;

use conav::config::RunConfig;
use conav::modes::NavMode;
use conav::sim::{replay_trial, SessionStatus, SimSession, UserSource};
use conav::user::{CommandQueue, UserCommand};

fn main() -> conav::Result<()> {
    let cfg = RunConfig::default();
    let scenario = Arc::new(cfg.build_scenario()?);
    let queue = CommandQueue::new();
    let mut live = SimSession::new(scenario.clone(), NavMode::Shared, UserSource::Queue(queue.clone()), 5, 0, cfg.sim.clone())?;

    while live.status() != SessionStatus::Done {
        let t = live.clock();
        // a nudge to the left every few seconds
        if (t % 4.0) < 0.5 {
            queue.push(UserCommand::from_axes(t, 0.4, 0.6, 0.05).0);
        } else if (t % 4.0) < 0.55 {
            queue.push(UserCommand::inactive(t));
        }
        live.tick()?;
    }
    let live = live.into_record();
    let again = replay_trial(scenario, &live, None, &cfg.sim)?;
    println!(
        "live: {:?} after {} ticks, {} logged commands",
        live.end_reason,
        live.samples.len(),
        live.user_log.len()
    );
    println!("replay identical: {}", again == live);
    Ok(())
}
