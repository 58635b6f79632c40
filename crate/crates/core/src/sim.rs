//! Fixed-timestep trial orchestration.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{summarize, EndReason, MetricsSummary, Sample, TrialRecord};
use crate::modes::{control_step, NavMode};
use crate::mpc::{Controller, MpcConfig, PlannerConfig};
use crate::planner::{plan, shortcut, PlannedPath};
use crate::seed;
use crate::user::{
    BlendingConfig, BlendingState, CommandQueue, ScriptedUser, TrialView, UserCommand, UserProfile, UserProfilesConfig,
};
use crate::vehicle::{step, Pose2D, VelocityCommand, WheelchairParams};
use crate::world::{in_collision, inflate, GoalPoint, Scenario, ScenarioSpec};

/// Everything besides the scenario that a trial depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub params: WheelchairParams,
    pub mpc: MpcConfig,
    pub planner: PlannerConfig,
    pub blending: BlendingConfig,
    pub users: UserProfilesConfig,
    /// Collision events beyond this end the trial as aborted.
    pub max_collisions: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            params: WheelchairParams::default(),
            mpc: MpcConfig::default(),
            planner: PlannerConfig::default(),
            blending: BlendingConfig::default(),
            users: UserProfilesConfig::default(),
            max_collisions: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.mpc.validate()?;
        if (self.mpc.dt - self.params.dt).abs() > 1e-12 {
            return Err(Error::Config("MPC dt must equal the simulation dt".into()));
        }
        if !(self.blending.window > 0.0 && self.blending.k0 > 0.0) {
            return Err(Error::Config("blending window and k0 must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.blending.deadzone) {
            return Err(Error::Config("deadzone must be in [0, 1)".into()));
        }
        if !(self.planner.v_ref_factor > 0.0) {
            return Err(Error::Config("v_ref_factor must be positive".into()));
        }
        Ok(())
    }

    pub fn inflation_radius(&self) -> f64 {
        self.planner.inflation_radius(&self.params)
    }

    /// Build a scenario document with this configuration's inflation.
    pub fn build_scenario(&self, spec: &ScenarioSpec) -> Result<Scenario> {
        spec.build(self.inflation_radius())
    }
}

/// Seed for one (seed, repetition) trial. Independent of the mode, so the
/// same seed pairs trials across modes.
pub fn trial_seed(seed: u64, repetition: u32) -> u64 {
    seed::derive(seed, repetition as u64)
}

pub enum UserSource {
    Scripted(Box<ScriptedUser>),
    /// Timestamped commands consumed in order; the latest one is held
    /// between messages.
    Queue(CommandQueue),
}

impl UserSource {
    /// Replay a logged command stream.
    pub fn replay(log: &[UserCommand]) -> Self {
        let q = CommandQueue::new();
        for c in log {
            q.push(*c);
        }
        UserSource::Queue(q)
    }

    fn label(&self) -> String {
        match self {
            UserSource::Scripted(u) => u.profile().to_string(),
            UserSource::Queue(_) => "live".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SessionStatus {
    Ready,
    Running,
    Done,
}

/// The route a scripted manual driver follows: the planner's path, optionally
/// planned with extra clearance.
pub fn driver_route(scenario: &Scenario, goal: GoalPoint, extra_margin: f64) -> Result<PlannedPath> {
    let start = scenario.start();
    if extra_margin > 0.0 {
        let wide = inflate(&scenario.grid, scenario.grid.inflation_radius() + extra_margin);
        if let Ok(p) = plan(&wide, (start.x, start.y), (goal.x, goal.y)) {
            return Ok(shortcut(&p, &wide));
        }
    }
    let p = plan(&scenario.grid, (start.x, start.y), (goal.x, goal.y))?;
    Ok(shortcut(&p, &scenario.grid))
}

/// One simulated trial advancing tick by tick.
pub struct SimSession {
    scenario: Arc<Scenario>,
    mode: NavMode,
    cfg: SimConfig,
    controller: Controller,
    blending: BlendingState,
    source: UserSource,
    goal: GoalPoint,
    ticks: u64,
    pose: Pose2D,
    held: UserCommand,
    collision_events: usize,
    record: TrialRecord,
    status: SessionStatus,
}

impl SimSession {
    pub fn new(
        scenario: Arc<Scenario>,
        mode: NavMode,
        source: UserSource,
        seed: u64,
        repetition: u32,
        cfg: SimConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mpc = MpcConfig {
            seed: seed::derive(trial_seed(seed, repetition), 1),
            ..cfg.mpc.clone()
        };
        let mut controller = Controller::new(cfg.params, mpc, cfg.planner);
        let goal = scenario.goal();
        controller.set_goal(goal, scenario.spec.goal_tolerance);
        let record = TrialRecord {
            mode,
            scenario_name: scenario.name().to_string(),
            profile: source.label(),
            seed,
            repetition,
            dt: cfg.params.dt,
            samples: Vec::new(),
            completed: false,
            end_reason: EndReason::Timeout,
            user_log: Vec::new(),
        };
        Ok(Self {
            blending: BlendingState::new(&cfg.blending),
            pose: scenario.start(),
            scenario,
            mode,
            cfg,
            controller,
            source,
            goal,
            ticks: 0,
            held: UserCommand::inactive(0.0),
            collision_events: 0,
            record,
            status: SessionStatus::Ready,
        })
    }

    /// A session driven by a scripted user profile.
    pub fn scripted(
        scenario: Arc<Scenario>,
        mode: NavMode,
        profile: UserProfile,
        seed: u64,
        repetition: u32,
        cfg: SimConfig,
    ) -> Result<Self> {
        let route = match profile {
            UserProfile::ManualDriver => Some(driver_route(
                &scenario,
                scenario.goal(),
                cfg.users.manual_driver.route_margin,
            )?),
            _ => None,
        };
        let user = ScriptedUser::new(
            profile,
            &cfg.users,
            cfg.blending.deadzone,
            seed::derive(trial_seed(seed, repetition), 2),
            route.as_ref(),
        )?;
        Self::new(scenario, mode, UserSource::Scripted(Box::new(user)), seed, repetition, cfg)
    }

    /// Replace the scenario goal. Only allowed before the first tick.
    pub fn set_goal(&mut self, goal: GoalPoint) -> Result<()> {
        if self.status != SessionStatus::Ready {
            return Err(Error::Contract("goal can only change before the trial starts".into()));
        }
        if !self.scenario.grid.point_is_free(goal.x, goal.y) {
            return Err(Error::BlockedEndpoint {
                which: "goal",
                x: goal.x,
                y: goal.y,
            });
        }
        self.goal = goal;
        self.controller.set_goal(goal, self.scenario.spec.goal_tolerance);
        Ok(())
    }

    pub fn goal(&self) -> GoalPoint {
        self.goal
    }

    /// Simulation time at the start of the next tick.
    pub fn clock(&self) -> f64 {
        self.ticks as f64 * self.cfg.params.dt
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn mode(&self) -> NavMode {
        self.mode
    }

    pub fn pose(&self) -> Pose2D {
        self.pose
    }

    pub fn blending(&self) -> &BlendingState {
        &self.blending
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn record(&self) -> &TrialRecord {
        &self.record
    }

    pub fn into_record(self) -> TrialRecord {
        self.record
    }

    /// Command queue of a live session.
    pub fn queue(&self) -> Option<&CommandQueue> {
        match &self.source {
            UserSource::Queue(q) => Some(q),
            UserSource::Scripted(_) => None,
        }
    }

    fn next_user_command(&mut self, clock: f64) -> Result<UserCommand> {
        match &mut self.source {
            UserSource::Scripted(user) => {
                let view = TrialView {
                    t: clock,
                    pose: self.pose,
                    planned: self.controller.last_trace().map(|t| &t.solution.predicted),
                    grid: &self.scenario.grid,
                    params: &self.cfg.params,
                };
                let cmd = user.command(&view);
                self.blending.record(&cmd)?;
                Ok(cmd)
            }
            UserSource::Queue(q) => {
                let drained = q.drain_until(clock);
                if drained.is_empty() {
                    // nothing new: evict stale events, keep holding the stick
                    self.blending.record(&UserCommand::inactive(clock))?;
                } else {
                    for c in drained {
                        self.blending.record(&c)?;
                        self.record.user_log.push(c);
                        self.held = c;
                    }
                }
                Ok(UserCommand { t: clock, ..self.held })
            }
        }
    }

    /// Advance one tick and return the new sample.
    pub fn tick(&mut self) -> Result<&Sample> {
        if self.status == SessionStatus::Done {
            return Err(Error::Contract("tick on a finished session".into()));
        }
        self.status = SessionStatus::Running;
        let dt = self.cfg.params.dt;
        let clock = self.clock();

        let user = self.next_user_command(clock)?;
        let theta = self.blending.theta;
        let cmd = control_step(
            self.mode,
            &mut self.controller,
            &self.cfg.params,
            &self.pose,
            theta,
            &user,
            &self.scenario.grid,
        )?;
        self.pose = step(self.pose, cmd, dt);
        let hit = in_collision(&self.scenario.grid, &self.pose, self.cfg.params.footprint_radius);
        if hit && !self.record.samples.last().is_some_and(|s| s.in_collision) {
            self.collision_events += 1;
        }
        self.ticks += 1;
        let t = self.clock();
        self.record.samples.push(Sample {
            t,
            pose: self.pose,
            cmd,
            user,
            in_collision: hit,
            theta,
            k: self.blending.k,
        });

        let end = if self.pose.distance_to(self.goal.x, self.goal.y) <= self.scenario.spec.goal_tolerance {
            Some(EndReason::Goal)
        } else if self.collision_events > self.cfg.max_collisions {
            Some(EndReason::Abort)
        } else if t >= self.scenario.spec.timeout_s - 1e-9 {
            Some(EndReason::Timeout)
        } else {
            None
        };
        if let Some(reason) = end {
            self.status = SessionStatus::Done;
            self.record.end_reason = reason;
            self.record.completed = reason == EndReason::Goal;
        }
        Ok(self.record.samples.last().expect("sample just pushed"))
    }

    /// Tick until the trial ends.
    pub fn run(mut self) -> Result<TrialRecord> {
        while self.status != SessionStatus::Done {
            self.tick()?;
        }
        Ok(self.record)
    }

    /// The command most recently sent to the chair.
    pub fn last_command(&self) -> VelocityCommand {
        self.record.samples.last().map(|s| s.cmd).unwrap_or_default()
    }
}

pub fn run_trial(
    scenario: Arc<Scenario>,
    mode: NavMode,
    profile: UserProfile,
    seed: u64,
    repetition: u32,
    cfg: &SimConfig,
) -> Result<TrialRecord> {
    SimSession::scripted(scenario, mode, profile, seed, repetition, cfg.clone())?.run()
}

/// Re-run a trial from a logged command stream.
pub fn replay_trial(scenario: Arc<Scenario>, rec: &TrialRecord, goal: Option<GoalPoint>, cfg: &SimConfig) -> Result<TrialRecord> {
    let mut s = SimSession::new(
        scenario,
        rec.mode,
        UserSource::replay(&rec.user_log),
        rec.seed,
        rec.repetition,
        cfg.clone(),
    )?;
    if let Some(g) = goal {
        s.set_goal(g)?;
    }
    s.run()
}

/// Which profile drives each mode in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeRun {
    pub mode: NavMode,
    pub profile: UserProfile,
}

impl ModeRun {
    /// The pairing used for the three-mode comparison.
    pub fn three_mode() -> Vec<ModeRun> {
        vec![
            ModeRun {
                mode: NavMode::Manual,
                profile: UserProfile::ManualDriver,
            },
            ModeRun {
                mode: NavMode::Autonomous,
                profile: UserProfile::Idle,
            },
            ModeRun {
                mode: NavMode::Shared,
                profile: UserProfile::SharedSupervisor,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec<'a> {
    pub runs: &'a [ModeRun],
    pub seeds: &'a [u64],
    pub repetitions: u32,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

/// Run {runs} × {seeds} × {repetitions}. Records come back ordered by run,
/// seed, repetition regardless of scheduling.
pub fn run_batch(scenario: Arc<Scenario>, batch: &BatchSpec<'_>, cfg: &SimConfig) -> Result<(Vec<TrialRecord>, MetricsSummary)> {
    if batch.seeds.is_empty() {
        return Err(Error::Config("batch needs at least one seed".into()));
    }
    if batch.repetitions == 0 {
        return Err(Error::Config("batch needs at least one repetition".into()));
    }
    cfg.validate()?;
    let jobs: Vec<(ModeRun, u64, u32)> = batch
        .runs
        .iter()
        .flat_map(|r| {
            batch
                .seeds
                .iter()
                .flat_map(move |&s| (0..batch.repetitions).map(move |rep| (*r, s, rep)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(batch.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, seed, rep)| run_trial(scenario.clone(), r.mode, r.profile, seed, rep, cfg))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(&records);
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Extents, Obstacle, Rect};

    fn open_room() -> Arc<Scenario> {
        let spec = ScenarioSpec {
            name: "room".into(),
            resolution: 0.1,
            extents: Extents {
                width: 8.0,
                height: 4.0,
            },
            obstacles: vec![Obstacle::rect(Rect::new(0.0, 0.0, 8.0, 0.1))],
            start: Pose2D::new(1.0, 2.0, 0.0),
            goal: GoalPoint { x: 6.0, y: 2.0 },
            goal_tolerance: 0.3,
            timeout_s: 3.0,
            preference_regions: vec![],
        };
        Arc::new(spec.build(0.5).unwrap())
    }

    #[test]
    fn idle_manual_times_out_in_place() {
        let sc = open_room();
        let rec = run_trial(sc.clone(), NavMode::Manual, UserProfile::Idle, 1, 0, &SimConfig::default()).unwrap();
        assert_eq!(rec.end_reason, EndReason::Timeout);
        assert!(!rec.completed);
        assert_eq!(rec.samples.len(), 30);
        assert!(rec.samples.iter().all(|s| s.pose == sc.start()));
    }

    #[test]
    fn session_at_goal_finishes_in_one_tick() {
        let mut spec = open_room().spec.clone();
        spec.goal = GoalPoint { x: 1.1, y: 2.0 };
        let sc = Arc::new(spec.build(0.5).unwrap());
        for mode in NavMode::ALL {
            let mut s = SimSession::scripted(sc.clone(), mode, UserProfile::Idle, 0, 0, SimConfig::default()).unwrap();
            s.tick().unwrap();
            assert_eq!(s.status(), SessionStatus::Done);
            assert_eq!(s.record().end_reason, EndReason::Goal);
            assert!(matches!(s.tick(), Err(Error::Contract(_))));
        }
    }

    #[test]
    fn queue_holds_latest_and_counts_bursts() {
        let sc = open_room();
        let q = CommandQueue::new();
        for i in 0..5 {
            q.push(UserCommand::from_axes(0.0, 0.2 * (i + 1) as f64, 0.0, 0.05).0);
        }
        let mut s = SimSession::new(sc, NavMode::Manual, UserSource::Queue(q), 0, 0, SimConfig::default()).unwrap();
        let sample = *s.tick().unwrap();
        assert_eq!(sample.k, 5);
        assert_eq!(sample.user.v_norm, 1.0);
        let sample = *s.tick().unwrap();
        assert_eq!(sample.k, 5);
        assert!(sample.user.active);
        assert_eq!(s.record().user_log.len(), 5);
    }

    #[test]
    fn batch_counts() {
        let sc = open_room();
        let cfg = SimConfig {
            mpc: MpcConfig {
                samples: 32,
                iterations: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let runs = ModeRun::three_mode();
        let (recs, summary) = run_batch(
            sc,
            &BatchSpec {
                runs: &runs,
                seeds: &[1, 2],
                repetitions: 2,
                jobs: 2,
            },
            &cfg,
        )
        .unwrap();
        assert_eq!(recs.len(), 12);
        assert_eq!(summary.modes.len(), 3);
    }
}
