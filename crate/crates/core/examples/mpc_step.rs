//! One controller step from the start of the default course, autonomous and
//! with the user pushing hard left.
//!
//! cargo run --example mpc_step

use conav::config::RunConfig;
use conav::mpc::Controller;
use conav::user::UserCommand;

fn main() -> conav::Result<()> {
    let cfg = RunConfig::default();
    let scenario = cfg.build_scenario()?;
    let pose = scenario.start();

    for (label, theta, user) in [
        ("autonomous", 0.0, UserCommand::inactive(0.0)),
        ("user left", 0.8, UserCommand::from_axes(0.0, 0.5, 1.0, 0.05).0),
    ] {
        let mut ctl = Controller::new(cfg.sim.params, cfg.sim.mpc.clone(), cfg.sim.planner);
        ctl.set_goal(scenario.goal(), scenario.spec.goal_tolerance);
        let cmd = ctl.step(&pose, theta, &user, &scenario.grid)?;
        let trace = ctl.last_trace().expect("step leaves a trace");
        let end = trace.solution.predicted.poses.last().expect("non-empty horizon");
        println!("{label}: v = {:.3} m/s, omega = {:.3} rad/s", cmd.v, cmd.omega);
        println!("  cost {:.3} {:?}", trace.solution.cost, trace.solution.cost_breakdown);
        println!("  best cost per iteration {:?}", trace.solution.iteration_best);
        println!("  predicted end ({:.2}, {:.2}, {:.2})", end.x, end.y, end.theta);
    }
    Ok(())
}
