//! Differential-drive (unicycle) kinematics.
//!
//! State is pose-only: `(x, y, theta)`. Commands are body-frame twists
//! `(v, omega)` bounded in magnitude and in rate of change per tick.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Angular rates below this are integrated as straight-line motion.
pub const STRAIGHT_OMEGA_EPS: f64 = 1e-9;

/// Wrap an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, kept in `(-pi, pi]`.
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    /// Forward speed, m/s.
    pub v: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
}

impl VelocityCommand {
    pub const ZERO: Self = Self { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

impl std::ops::Neg for VelocityCommand {
    type Output = Self;

    fn neg(self) -> Self {
        Self::new(-self.v, -self.omega)
    }
}

/// Limits of the admissible control set and the simulation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WheelchairParams {
    pub v_max: f64,
    pub omega_max: f64,
    pub accel_max: f64,
    pub alpha_max: f64,
    pub footprint_radius: f64,
    pub dt: f64,
}

impl Default for WheelchairParams {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            omega_max: 1.5,
            accel_max: 1.0,
            alpha_max: 2.0,
            footprint_radius: 0.45,
            dt: 0.1,
        }
    }
}

impl WheelchairParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("accel_max", self.accel_max),
            ("alpha_max", self.alpha_max),
            ("footprint_radius", self.footprint_radius),
            ("dt", self.dt),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "wheelchair parameter {name} must be positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// Whether `cmd` respects the magnitude limits.
    pub fn within_magnitude(&self, cmd: VelocityCommand) -> bool {
        cmd.v.abs() <= self.v_max && cmd.omega.abs() <= self.omega_max
    }
}

/// Sequence of poses `s_0..s_T` sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTrajectory {
    pub poses: Vec<Pose2D>,
    pub dt: f64,
}

impl StateTrajectory {
    /// Number of steps `T` (one less than the pose count).
    pub fn horizon(&self) -> usize {
        self.poses.len().saturating_sub(1)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.poses.iter().map(|p| (p.x, p.y)).collect()
    }
}

/// Control sequence `u_0..u_{T-1}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSequence {
    pub commands: Vec<VelocityCommand>,
}

impl ControlSequence {
    pub fn zeros(len: usize) -> Self {
        Self {
            commands: vec![VelocityCommand::ZERO; len],
        }
    }

    pub fn constant(cmd: VelocityCommand, len: usize) -> Self {
        Self {
            commands: vec![cmd; len],
        }
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}

/// Integrate one constant-twist step exactly (circular arc, or a line when
/// the yaw rate is negligible).
pub fn step(pose: Pose2D, cmd: VelocityCommand, dt: f64) -> Pose2D {
    let VelocityCommand { v, omega } = cmd;
    if omega.abs() < STRAIGHT_OMEGA_EPS {
        return Pose2D {
            x: pose.x + v * pose.theta.cos() * dt,
            y: pose.y + v * pose.theta.sin() * dt,
            theta: normalize_angle(pose.theta + omega * dt),
        };
    }
    // chord form of the arc: |chord| = 2 (v/omega) sin(half), along theta + half
    let half = 0.5 * omega * dt;
    let chord = v * dt * (half.sin() / half);
    let mid = pose.theta + half;
    Pose2D {
        x: pose.x + chord * mid.cos(),
        y: pose.y + chord * mid.sin(),
        theta: normalize_angle(pose.theta + omega * dt),
    }
}

/// Apply magnitude limits, then rate limits relative to `prev`.
pub fn clamp(cmd: VelocityCommand, prev: VelocityCommand, params: &WheelchairParams) -> VelocityCommand {
    let v = cmd.v.clamp(-params.v_max, params.v_max);
    let omega = cmd.omega.clamp(-params.omega_max, params.omega_max);
    let dv = params.accel_max * params.dt;
    let dw = params.alpha_max * params.dt;
    VelocityCommand {
        v: v.clamp(prev.v - dv, prev.v + dv),
        omega: omega.clamp(prev.omega - dw, prev.omega + dw),
    }
}

/// Roll a control sequence forward from `start`; the result has
/// `controls.len() + 1` poses.
pub fn rollout(start: Pose2D, controls: &ControlSequence, dt: f64) -> StateTrajectory {
    let mut poses = Vec::with_capacity(controls.len() + 1);
    poses.push(start);
    let mut pose = start;
    for &cmd in &controls.commands {
        pose = step(pose, cmd, dt);
        poses.push(pose);
    }
    StateTrajectory { poses, dt }
}
