//! Write the default zigzag course as a scenario document.
//!
//! cargo run --example export_scenario -- scenarios/zigzag25.json

use conav::config::RunConfig;

fn main() -> conav::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "zigzag25.json".into());
    let spec = RunConfig::default().scenario_spec()?;
    spec.save(&out)?;
    println!("{} obstacles, start ({:.2}, {:.2}), goal ({:.2}, {:.2}) -> {out}",
        spec.obstacles.len(), spec.start.x, spec.start.y, spec.goal.x, spec.goal.y);
    Ok(())
}
