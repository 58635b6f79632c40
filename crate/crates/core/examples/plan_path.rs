//! Plan a global path through the default course and shortcut it.
//!
//! cargo run --example plan_path

use conav::config::RunConfig;
use conav::planner::{plan_detailed, shortcut};

fn main() -> conav::Result<()> {
    let cfg = RunConfig::default();
    let scenario = cfg.build_scenario()?;
    let (s, g) = (scenario.start(), scenario.goal());

    let raw = plan_detailed(&scenario.grid, (s.x, s.y), (g.x, g.y))?;
    let short = shortcut(&raw.path, &scenario.grid);
    println!("A*: {} cells, cost {:.2}, length {:.2} m", raw.cells.len(), raw.cost, raw.path.total_length);
    println!("shortcut: {} waypoints, length {:.2} m", short.waypoints.len(), short.total_length);
    for (x, y) in &short.waypoints {
        println!("  ({x:6.2}, {y:5.2})");
    }
    Ok(())
}
