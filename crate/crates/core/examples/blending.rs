//! How joystick activity moves the blending weight.
//!
//! cargo run --example blending

use conav::user::{BlendingConfig, BlendingState, UserCommand};

fn main() -> conav::Result<()> {
    let cfg = BlendingConfig::default();
    let mut state = BlendingState::new(&cfg);
    // one second of pushing at 10 Hz, then three seconds hands off
    for i in 0..40 {
        let t = i as f64 * 0.1;
        let v = if t < 1.0 { 0.7 } else { 0.0 };
        let (cmd, _) = UserCommand::from_axes(t, v, 0.0, cfg.deadzone);
        state.record(&cmd)?;
        if i % 4 == 0 {
            println!("t = {t:4.1}  active = {:5}  k = {:2}  theta = {:.3}", cmd.active, state.k, state.theta);
        }
    }
    Ok(())
}
