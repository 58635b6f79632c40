//! The three navigation modes and their dispatch onto the controller.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::Controller;
use crate::user::UserCommand;
use crate::vehicle::{clamp, Pose2D, VelocityCommand, WheelchairParams};
use crate::world::OccupancyGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NavMode {
    Manual,
    Autonomous,
    Shared,
}

impl NavMode {
    pub const ALL: [NavMode; 3] = [NavMode::Manual, NavMode::Autonomous, NavMode::Shared];

    pub fn as_str(&self) -> &'static str {
        match self {
            NavMode::Manual => "manual",
            NavMode::Autonomous => "autonomous",
            NavMode::Shared => "shared",
        }
    }

    /// Whether the mode drives through the planner and MPC.
    pub fn needs_goal(&self) -> bool {
        !matches!(self, NavMode::Manual)
    }
}

impl fmt::Display for NavMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NavMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "manual" => Ok(NavMode::Manual),
            "autonomous" => Ok(NavMode::Autonomous),
            "shared" => Ok(NavMode::Shared),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// Compute the command for one tick.
///
/// MANUAL passes the joystick through the command limits with no planner
/// and no safety assist. AUTONOMOUS ignores the user entirely. SHARED blends
/// by `theta`.
pub fn control_step(
    mode: NavMode,
    controller: &mut Controller,
    params: &WheelchairParams,
    pose: &Pose2D,
    theta: f64,
    user_cmd: &UserCommand,
    grid: &OccupancyGrid,
) -> Result<VelocityCommand> {
    match mode {
        NavMode::Manual => {
            let wanted = if user_cmd.active {
                user_cmd.scaled(params)
            } else {
                VelocityCommand::ZERO
            };
            let cmd = clamp(wanted, controller.last_command(), params);
            controller.note_applied(cmd);
            Ok(cmd)
        }
        NavMode::Autonomous => controller.step(pose, 0.0, &UserCommand::inactive(user_cmd.t), grid),
        NavMode::Shared => controller.step(pose, theta, user_cmd, grid),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::{MpcConfig, PlannerConfig};

    #[test]
    fn names_round_trip() {
        for m in NavMode::ALL {
            assert_eq!(m.as_str().parse::<NavMode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("hover".parse::<NavMode>().is_err());
    }

    #[test]
    fn manual_zero_in_zero_out() {
        let params = WheelchairParams::default();
        let mut ctl = Controller::new(params, MpcConfig::default(), PlannerConfig::default());
        let grid = OccupancyGrid::new(4, 4, 0.5, Pose2D::default()).unwrap();
        let cmd = control_step(
            NavMode::Manual,
            &mut ctl,
            &params,
            &Pose2D::default(),
            0.0,
            &UserCommand::inactive(0.0),
            &grid,
        )
        .unwrap();
        assert_eq!(cmd, VelocityCommand::ZERO);
    }

    #[test]
    fn planner_modes_need_goal() {
        let params = WheelchairParams::default();
        let grid = OccupancyGrid::new(4, 4, 0.5, Pose2D::default()).unwrap();
        for mode in [NavMode::Autonomous, NavMode::Shared] {
            let mut ctl = Controller::new(params, MpcConfig::default(), PlannerConfig::default());
            let err = control_step(mode, &mut ctl, &params, &Pose2D::new(1.0, 1.0, 0.0), 0.0, &UserCommand::inactive(0.0), &grid)
                .unwrap_err();
            assert!(matches!(err, Error::Config(_)));
        }
    }
}
