//! User commands, the activity-driven blending weight, and scripted users.

use std::collections::VecDeque;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{PathProjector, PlannedPath};
use crate::vehicle::{normalize_angle, rollout, ControlSequence, Pose2D, StateTrajectory, VelocityCommand, WheelchairParams};
use crate::world::OccupancyGrid;

/// One joystick sample, normalized to `[-1, 1]` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserCommand {
    pub t: f64,
    pub v_norm: f64,
    pub omega_norm: f64,
    pub active: bool,
}

impl UserCommand {
    pub fn inactive(t: f64) -> Self {
        Self {
            t,
            v_norm: 0.0,
            omega_norm: 0.0,
            active: false,
        }
    }

    /// Clamp the axes to `[-1, 1]` and apply the deadzone. The flag reports
    /// whether clamping changed anything.
    pub fn from_axes(t: f64, v_norm: f64, omega_norm: f64, deadzone: f64) -> (Self, bool) {
        let v = if v_norm.is_finite() { v_norm.clamp(-1.0, 1.0) } else { 0.0 };
        let w = if omega_norm.is_finite() { omega_norm.clamp(-1.0, 1.0) } else { 0.0 };
        let clamped = v != v_norm || w != omega_norm;
        let active = v.abs() > deadzone || w.abs() > deadzone;
        (
            Self {
                t,
                v_norm: v,
                omega_norm: w,
                active,
            },
            clamped,
        )
    }

    /// Scale the normalized axes to a velocity command.
    pub fn scaled(&self, params: &WheelchairParams) -> VelocityCommand {
        VelocityCommand::new(self.v_norm * params.v_max, self.omega_norm * params.omega_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendingConfig {
    /// Sliding window (s) over which active commands are counted.
    pub window: f64,
    /// Scale of the saturating weight `1 - exp(-k / k0)`.
    pub k0: f64,
    pub deadzone: f64,
}

impl Default for BlendingConfig {
    fn default() -> Self {
        Self {
            window: 2.0,
            k0: 5.0,
            deadzone: 0.05,
        }
    }
}

/// Largest double below one; the weight never reaches full user control.
const WEIGHT_CEILING: f64 = 1.0 - f64::EPSILON / 2.0;

/// User-intent weight `1 - exp(-k / k0)`: 0 with no activity, increasing
/// toward (never reaching) 1.
pub fn blending_weight(k: usize, k0: f64) -> f64 {
    (-(-(k as f64) / k0).exp_m1()).min(WEIGHT_CEILING)
}

/// Sliding-window count `k` of active commands and the derived weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendingState {
    pub window: f64,
    pub k0: f64,
    pub events: VecDeque<f64>,
    pub k: usize,
    pub theta: f64,
    latest: Option<f64>,
}

impl BlendingState {
    pub fn new(cfg: &BlendingConfig) -> Self {
        Self {
            window: cfg.window,
            k0: cfg.k0,
            events: VecDeque::new(),
            k: 0,
            theta: 0.0,
            latest: None,
        }
    }

    /// Evict events at or before `cmd.t - window`, then count `cmd` if it is
    /// active. Timestamps must not decrease.
    pub fn record(&mut self, cmd: &UserCommand) -> Result<()> {
        if let Some(latest) = self.latest {
            if cmd.t < latest {
                return Err(Error::Ordering { got: cmd.t, latest });
            }
        }
        self.latest = Some(cmd.t);
        let cutoff = cmd.t - self.window;
        while self.events.front().is_some_and(|&ts| ts <= cutoff) {
            self.events.pop_front();
        }
        if cmd.active {
            self.events.push_back(cmd.t);
        }
        self.k = self.events.len();
        self.theta = blending_weight(self.k, self.k0);
        Ok(())
    }
}

/// User-intent rollout: hold the scaled command for the horizon. Inactive
/// commands produce a stationary trajectory.
pub fn user_reference(
    pose: &Pose2D,
    cmd: &UserCommand,
    params: &WheelchairParams,
    horizon: usize,
    dt: f64,
) -> StateTrajectory {
    let u = if cmd.active {
        cmd.scaled(params)
    } else {
        VelocityCommand::ZERO
    };
    rollout(*pose, &ControlSequence::constant(u, horizon), dt)
}

/// Single-producer queue of timestamped commands consumed by the sim loop.
#[derive(Debug, Clone, Default)]
pub struct CommandQueue {
    inner: Arc<Mutex<VecDeque<UserCommand>>>,
}

impl CommandQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, cmd: UserCommand) {
        self.inner.lock().expect("command queue poisoned").push_back(cmd);
    }

    /// Remove and return every queued command stamped at or before `t`.
    pub fn drain_until(&self, t: f64) -> Vec<UserCommand> {
        let mut q = self.inner.lock().expect("command queue poisoned");
        let n = q.iter().take_while(|c| c.t <= t).count();
        q.drain(..n).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("command queue poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserProfile {
    ManualDriver,
    SharedSupervisor,
    Idle,
}

impl UserProfile {
    pub fn as_str(&self) -> &'static str {
        match self {
            UserProfile::ManualDriver => "manual_driver",
            UserProfile::SharedSupervisor => "shared_supervisor",
            UserProfile::Idle => "idle",
        }
    }
}

impl FromStr for UserProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual_driver" => Ok(UserProfile::ManualDriver),
            "shared_supervisor" => Ok(UserProfile::SharedSupervisor),
            "idle" => Ok(UserProfile::Idle),
            other => Err(Error::Config(format!("unknown user profile '{other}'"))),
        }
    }
}

impl std::fmt::Display for UserProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pure-pursuit joystick driver that pulses the stick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManualDriverConfig {
    pub reaction_delay: f64,
    /// Seconds between stick decisions.
    pub update_period: f64,
    /// Portion of each period the stick stays deflected.
    pub press_fraction: f64,
    /// Std-dev (rad) of the heading misjudgement drawn at each decision.
    pub heading_noise: f64,
    pub lookahead: f64,
    pub cruise: f64,
    /// Extra clearance the driver keeps beyond the planner inflation.
    pub route_margin: f64,
}

impl Default for ManualDriverConfig {
    fn default() -> Self {
        Self {
            reaction_delay: 0.3,
            update_period: 0.4,
            press_fraction: 0.65,
            heading_noise: 0.1,
            lookahead: 1.0,
            cruise: 0.7,
            route_margin: 0.0,
        }
    }
}

/// Supervisor that only steps in when the planned motion gets close to an
/// obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisorConfig {
    /// Clearance (m, from the footprint edge) that triggers an intervention.
    pub c_min: f64,
    pub burst: f64,
    pub v_norm: f64,
    pub omega_norm: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            c_min: 0.35,
            burst: 1.0,
            v_norm: 0.5,
            omega_norm: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UserProfilesConfig {
    pub manual_driver: ManualDriverConfig,
    pub shared_supervisor: SupervisorConfig,
}

/// What a scripted user can observe on a tick.
#[derive(Debug, Clone, Copy)]
pub struct TrialView<'a> {
    pub t: f64,
    pub pose: Pose2D,
    /// The controller's most recent predicted trajectory, if any.
    pub planned: Option<&'a StateTrajectory>,
    pub grid: &'a OccupancyGrid,
    pub params: &'a WheelchairParams,
}

#[derive(Debug, Clone)]
struct DriverState {
    cfg: ManualDriverConfig,
    route: PathProjector,
    progress: f64,
    history: VecDeque<(f64, Pose2D)>,
    next_update: f64,
    press_until: f64,
    held: (f64, f64),
    noise: Normal<f64>,
}

#[derive(Debug, Clone)]
struct SupervisorState {
    cfg: SupervisorConfig,
    burst_until: f64,
    held: (f64, f64),
}

#[derive(Debug, Clone)]
enum Behaviour {
    Idle,
    Driver(Box<DriverState>),
    Supervisor(SupervisorState),
}

/// Deterministic stand-in for a human operator.
#[derive(Debug, Clone)]
pub struct ScriptedUser {
    profile: UserProfile,
    deadzone: f64,
    rng: ChaCha8Rng,
    behaviour: Behaviour,
}

impl ScriptedUser {
    /// `route` is the path a manual driver follows; other profiles ignore it.
    pub fn new(
        profile: UserProfile,
        cfg: &UserProfilesConfig,
        deadzone: f64,
        seed: u64,
        route: Option<&PlannedPath>,
    ) -> Result<Self> {
        let behaviour = match profile {
            UserProfile::Idle => Behaviour::Idle,
            UserProfile::SharedSupervisor => Behaviour::Supervisor(SupervisorState {
                cfg: cfg.shared_supervisor,
                burst_until: f64::NEG_INFINITY,
                held: (0.0, 0.0),
            }),
            UserProfile::ManualDriver => {
                let route = route.ok_or_else(|| Error::Config("manual_driver needs a route to follow".into()))?;
                let d = cfg.manual_driver;
                let noise = Normal::new(0.0, d.heading_noise.max(0.0))
                    .map_err(|e| Error::Config(format!("heading noise: {e}")))?;
                Behaviour::Driver(Box::new(DriverState {
                    cfg: d,
                    route: PathProjector::new(route),
                    progress: 0.0,
                    history: VecDeque::new(),
                    next_update: f64::NEG_INFINITY,
                    press_until: f64::NEG_INFINITY,
                    held: (0.0, 0.0),
                    noise,
                }))
            }
        };
        Ok(Self {
            profile,
            deadzone,
            rng: ChaCha8Rng::seed_from_u64(seed),
            behaviour,
        })
    }

    pub fn profile(&self) -> UserProfile {
        self.profile
    }

    /// Produce the command for this tick.
    pub fn command(&mut self, view: &TrialView<'_>) -> UserCommand {
        let t = view.t;
        let axes = match &mut self.behaviour {
            Behaviour::Idle => None,
            Behaviour::Driver(d) => d.command(view, &mut self.rng),
            Behaviour::Supervisor(s) => s.command(view),
        };
        match axes {
            Some((v, w)) => UserCommand::from_axes(t, v, w, self.deadzone).0,
            None => UserCommand::inactive(t),
        }
    }
}

impl DriverState {
    fn command(&mut self, view: &TrialView<'_>, rng: &mut ChaCha8Rng) -> Option<(f64, f64)> {
        let t = view.t;
        self.history.push_back((t, view.pose));
        // the driver reacts to where the chair was `reaction_delay` ago
        let seen_at = t - self.cfg.reaction_delay;
        while self.history.len() > 1 && self.history[1].0 <= seen_at + 1e-9 {
            self.history.pop_front();
        }
        let perceived = self.history[0].1;

        if t + 1e-9 >= self.next_update {
            self.next_update = t + self.cfg.update_period;
            self.press_until = t + self.cfg.press_fraction * self.cfg.update_period;
            self.held = self.steer(&perceived, view, rng);
        }
        (t + 1e-9 < self.press_until).then_some(self.held)
    }

    fn steer(&mut self, pose: &Pose2D, view: &TrialView<'_>, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let s = self
            .route
            .project_within(pose.x, pose.y, self.progress - 0.5, self.progress + 2.0 * self.cfg.lookahead);
        self.progress = self.progress.max(s);
        let (tx, ty, _) = self.route.sample(self.progress + self.cfg.lookahead);
        let dist = pose.distance_to(tx, ty);
        if dist < 1e-6 {
            return (0.0, 0.0);
        }
        let misjudged = pose.theta + self.noise.sample(rng);
        let alpha = normalize_angle((ty - pose.y).atan2(tx - pose.x) - misjudged);
        let v_norm = self.cfg.cruise * alpha.cos().max(0.15);
        // pure pursuit: curvature 2 sin(alpha) / L
        let curvature = 2.0 * alpha.sin() / dist.max(self.cfg.lookahead * 0.5);
        let omega = v_norm * view.params.v_max * curvature;
        (v_norm, (omega / view.params.omega_max).clamp(-1.0, 1.0))
    }
}

impl SupervisorState {
    fn command(&mut self, view: &TrialView<'_>) -> Option<(f64, f64)> {
        if view.t + 1e-9 < self.burst_until {
            return Some(self.held);
        }
        let planned = view.planned?;
        let radius = view.params.footprint_radius;
        let (worst, clearance) = planned
            .poses
            .iter()
            .map(|p| (p, view.grid.obstacle_distance(p.x, p.y) - radius))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        if clearance >= self.cfg.c_min {
            return None;
        }
        let search = (clearance + radius + 2.0 * view.grid.resolution()).max(view.grid.resolution());
        let (ox, oy) = view.grid.nearest_occupied(worst.x, worst.y, search)?;
        let pose = view.pose;
        // obstacle on the left of the heading -> turn right, and vice versa
        let cross = pose.theta.cos() * (oy - pose.y) - pose.theta.sin() * (ox - pose.x);
        let turn = if cross > 0.0 { -self.cfg.omega_norm } else { self.cfg.omega_norm };
        self.held = (self.cfg.v_norm, turn);
        self.burst_until = view.t + self.cfg.burst;
        Some(self.held)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_values() {
        assert_eq!(blending_weight(0, 5.0), 0.0);
        assert!((blending_weight(5, 5.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((blending_weight(5, 5.0) - 0.6321).abs() < 1e-4);
        let mut prev = 0.0;
        for k in 1..=100 {
            let w = blending_weight(k, 5.0);
            assert!(w > prev && w < 1.0, "k={k} w={w}");
            prev = w;
        }
    }

    #[test]
    fn inactive_stream_keeps_zero() {
        let mut s = BlendingState::new(&BlendingConfig::default());
        for n in 0..50 {
            s.record(&UserCommand::inactive(n as f64 * 0.1)).unwrap();
            assert_eq!((s.k, s.theta), (0, 0.0));
        }
    }

    #[test]
    fn counts_active_within_window() {
        let mut s = BlendingState::new(&BlendingConfig::default());
        for n in 0..5 {
            let (c, _) = UserCommand::from_axes(n as f64 * 0.1, 1.0, 0.0, 0.05);
            s.record(&c).unwrap();
        }
        assert_eq!(s.k, 5);
        s.record(&UserCommand::inactive(2.35)).unwrap();
        assert_eq!(s.k, 1);
        s.record(&UserCommand::inactive(3.0)).unwrap();
        assert_eq!(s.k, 0);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut s = BlendingState::new(&BlendingConfig::default());
        s.record(&UserCommand::inactive(1.0)).unwrap();
        let before = s.clone();
        assert!(matches!(s.record(&UserCommand::inactive(0.5)), Err(Error::Ordering { .. })));
        assert_eq!(s, before);
    }

    #[test]
    fn axes_clamped_and_deadzoned() {
        let (c, clamped) = UserCommand::from_axes(0.0, 2.0, 0.0, 0.05);
        assert!(clamped);
        assert_eq!((c.v_norm, c.omega_norm, c.active), (1.0, 0.0, true));
        let (c, clamped) = UserCommand::from_axes(0.0, 0.04, -0.05, 0.05);
        assert!(!clamped);
        assert!(!c.active);
    }

    #[test]
    fn inactive_user_reference_is_stationary() {
        let pose = Pose2D::new(1.0, 2.0, 0.5);
        let r = user_reference(&pose, &UserCommand::inactive(0.0), &WheelchairParams::default(), 7, 0.1);
        assert_eq!(r.poses, vec![pose; 8]);
    }

    #[test]
    fn full_forward_user_reference() {
        let params = WheelchairParams::default();
        let (c, _) = UserCommand::from_axes(0.0, 1.0, 0.0, 0.05);
        let r = user_reference(&Pose2D::default(), &c, &params, 5, 0.1);
        for (k, p) in r.poses.iter().enumerate() {
            assert!((p.x - k as f64 * params.v_max * 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn profile_parsing() {
        assert_eq!("idle".parse::<UserProfile>().unwrap(), UserProfile::Idle);
        assert_eq!(
            "shared_supervisor".parse::<UserProfile>().unwrap(),
            UserProfile::SharedSupervisor
        );
        assert!(matches!("robot".parse::<UserProfile>(), Err(Error::Config(_))));
    }

    #[test]
    fn queue_drains_in_order() {
        let q = CommandQueue::new();
        for t in [0.1, 0.2, 0.3] {
            q.push(UserCommand::inactive(t));
        }
        let got = q.drain_until(0.2);
        assert_eq!(got.iter().map(|c| c.t).collect::<Vec<_>>(), vec![0.1, 0.2]);
        assert_eq!(q.len(), 1);
    }
}
