//! Shared-control MPC local planner.
//!
//! The reference the MPC tracks is a per-step blend of the user-intent
//! rollout and the global-plan reference, weighted by user activity. The
//! control sequence is found with a seeded cross-entropy search; free space
//! enters the cost as a clearance penalty plus a large finite penalty per
//! colliding state, and the solution reports whether it collides.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{plan, shortcut, PathProjector, PlannedPath};
use crate::seed;
use crate::user::{user_reference, UserCommand};
use crate::vehicle::{
    clamp, normalize_angle, rollout, ControlSequence, Pose2D, StateTrajectory, VelocityCommand,
    WheelchairParams,
};
use crate::world::{in_collision, CellState, GoalPoint, OccupancyGrid};

/// Penalty added for every predicted state that is in actual collision.
pub const COLLISION_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    /// State weights for (x, y, theta).
    pub q_s: [f64; 3],
    /// Input weights for (v, omega).
    pub q_u: [f64; 2],
    pub obstacle_penalty_weight: f64,
    /// Footprint-edge clearance below which the obstacle penalty starts.
    pub clearance_margin: f64,
    pub samples: usize,
    pub iterations: usize,
    pub elite_fraction: f64,
    pub seed: u64,
    /// Initial sampling std-dev as a fraction of (v_max, omega_max).
    pub init_std: [f64; 2],
    /// Floor on the refitted std-dev, same units as `init_std`.
    pub min_std: [f64; 2],
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.1,
            q_s: [1.0, 1.0, 0.3],
            q_u: [0.1, 0.05],
            obstacle_penalty_weight: 400.0,
            clearance_margin: 0.35,
            samples: 256,
            iterations: 4,
            elite_fraction: 0.1,
            seed: 0,
            init_std: [0.3, 0.4],
            min_std: [0.02, 0.02],
        }
    }
}

impl MpcConfig {
    pub fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.samples as f64).ceil() as usize).clamp(1, self.samples.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("MPC horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("MPC dt must be positive".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("MPC needs at least one sample".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::Config("elite_fraction must be in (0, 1]".into()));
        }
        let weights = self
            .q_s
            .iter()
            .chain(&self.q_u)
            .chain([&self.obstacle_penalty_weight, &self.clearance_margin])
            .chain(&self.init_std)
            .chain(&self.min_std);
        if weights.into_iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("MPC weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub state: f64,
    pub control: f64,
    pub obstacle: f64,
    /// Predicted states in actual collision.
    pub collisions: usize,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.state + self.control + self.obstacle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub controls: ControlSequence,
    pub predicted: StateTrajectory,
    pub cost: f64,
    pub feasible: bool,
    pub cost_breakdown: CostBreakdown,
    /// Best-so-far cost after each optimizer iteration.
    pub iteration_best: Vec<f64>,
}

/// Blend two references index by index: positions by convex combination,
/// headings along the shortest arc from the global toward the user heading.
pub fn blend_reference(s_user: &StateTrajectory, s_global: &StateTrajectory, theta: f64) -> Result<StateTrajectory> {
    if s_user.len() != s_global.len() {
        return Err(Error::Contract(format!(
            "reference length mismatch: user {} vs global {}",
            s_user.len(),
            s_global.len()
        )));
    }
    if (s_user.dt - s_global.dt).abs() > 1e-12 {
        return Err(Error::Contract("reference dt mismatch".into()));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Contract(format!("blend weight {theta} outside [0, 1]")));
    }
    let lerp = |g: f64, u: f64| {
        let v = (1.0 - theta) * g + theta * u;
        v.clamp(g.min(u), g.max(u))
    };
    let poses = s_user
        .poses
        .iter()
        .zip(&s_global.poses)
        .map(|(u, g)| Pose2D {
            x: lerp(g.x, u.x),
            y: lerp(g.y, u.y),
            theta: if theta == 0.0 {
                g.theta
            } else {
                normalize_angle(g.theta + theta * normalize_angle(u.theta - g.theta))
            },
        })
        .collect();
    Ok(StateTrajectory {
        poses,
        dt: s_global.dt,
    })
}

/// Evaluate the tracking, input and obstacle terms for one trajectory.
pub fn trajectory_cost(
    s: &StateTrajectory,
    s_hat: &StateTrajectory,
    u: &ControlSequence,
    grid: &OccupancyGrid,
    cfg: &MpcConfig,
    footprint_radius: f64,
) -> Result<(f64, CostBreakdown)> {
    if s.len() != s_hat.len() {
        return Err(Error::Contract(format!(
            "trajectory length {} does not match reference length {}",
            s.len(),
            s_hat.len()
        )));
    }
    let mut b = CostBreakdown::default();
    for (p, r) in s.poses.iter().zip(&s_hat.poses) {
        let dx = p.x - r.x;
        let dy = p.y - r.y;
        let dth = normalize_angle(p.theta - r.theta);
        b.state += cfg.q_s[0] * dx * dx + cfg.q_s[1] * dy * dy + cfg.q_s[2] * dth * dth;

        let clearance = grid.obstacle_distance(p.x, p.y) - footprint_radius;
        let short = (cfg.clearance_margin - clearance).max(0.0);
        b.obstacle += cfg.obstacle_penalty_weight * short * short;
        if in_collision(grid, p, footprint_radius) {
            b.obstacle += COLLISION_PENALTY;
            b.collisions += 1;
        }
    }
    for c in &u.commands {
        b.control += cfg.q_u[0] * c.v * c.v + cfg.q_u[1] * c.omega * c.omega;
    }
    Ok((b.total(), b))
}

/// Clamp a sequence to the command limits: the first command by magnitude
/// only, each later one by magnitude and rate relative to its predecessor.
pub fn clamp_sequence(seq: &mut ControlSequence, params: &WheelchairParams) {
    let mut prev: Option<VelocityCommand> = None;
    for cmd in &mut seq.commands {
        *cmd = match prev {
            None => VelocityCommand::new(
                cmd.v.clamp(-params.v_max, params.v_max),
                cmd.omega.clamp(-params.omega_max, params.omega_max),
            ),
            Some(p) => clamp(*cmd, p, params),
        };
        prev = Some(*cmd);
    }
}

/// The warm-start candidate: previous solution shifted by one step, padded
/// with a zero command, resized to `horizon` and clamped.
pub fn shift_warm_start(prev: &ControlSequence, horizon: usize, params: &WheelchairParams) -> ControlSequence {
    let mut commands: Vec<VelocityCommand> = prev.commands.iter().skip(1).copied().collect();
    commands.resize(horizon, VelocityCommand::ZERO);
    let mut seq = ControlSequence { commands };
    clamp_sequence(&mut seq, params);
    seq
}

struct Candidate {
    cost: f64,
    breakdown: CostBreakdown,
    controls: ControlSequence,
    predicted: StateTrajectory,
}

/// Minimize the shared-control cost over control sequences.
///
/// Cross-entropy search: sample clamped Gaussian perturbations of the mean
/// sequence, keep the elite fraction, refit mean and std-dev, repeat. The
/// zero sequence and the shifted warm start are scored first, so the result
/// never costs more than either.
pub fn solve(
    pose: &Pose2D,
    s_hat: &StateTrajectory,
    grid: &OccupancyGrid,
    params: &WheelchairParams,
    cfg: &MpcConfig,
    warm_start: Option<&ControlSequence>,
) -> Result<MpcSolution> {
    solve_with_candidates(pose, s_hat, grid, params, cfg, warm_start, &[])
}

/// [`solve`] with extra candidate sequences scored alongside the zero
/// sequence and warm start. Candidates are clamped before scoring.
pub fn solve_with_candidates(
    pose: &Pose2D,
    s_hat: &StateTrajectory,
    grid: &OccupancyGrid,
    params: &WheelchairParams,
    cfg: &MpcConfig,
    warm_start: Option<&ControlSequence>,
    extra: &[ControlSequence],
) -> Result<MpcSolution> {
    cfg.validate()?;
    let horizon = cfg.horizon;
    if s_hat.len() != horizon + 1 {
        return Err(Error::Contract(format!(
            "reference has {} poses, horizon needs {}",
            s_hat.len(),
            horizon + 1
        )));
    }
    let evaluate = |controls: ControlSequence| -> Result<Candidate> {
        let predicted = rollout(*pose, &controls, cfg.dt);
        let (cost, breakdown) = trajectory_cost(&predicted, s_hat, &controls, grid, cfg, params.footprint_radius)?;
        Ok(Candidate {
            cost,
            breakdown,
            controls,
            predicted,
        })
    };

    let zero = ControlSequence::zeros(horizon);
    let warm = warm_start.map(|w| shift_warm_start(w, horizon, params));
    let mut best = evaluate(zero.clone())?;
    let mut injected = vec![zero];
    if let Some(w) = warm {
        let cand = evaluate(w.clone())?;
        if cand.cost < best.cost {
            best = cand;
        }
        injected.push(w);
    }

    let mut mean: Vec<[f64; 2]> = injected
        .last()
        .expect("zero sequence always injected")
        .commands
        .iter()
        .map(|c| [c.v, c.omega])
        .collect();
    let scale = [params.v_max, params.omega_max];
    for seq in extra {
        if seq.len() != horizon {
            return Err(Error::Contract(format!(
                "candidate has {} commands, horizon is {}",
                seq.len(),
                horizon
            )));
        }
        let mut seq = seq.clone();
        clamp_sequence(&mut seq, params);
        let cand = evaluate(seq.clone())?;
        if cand.cost < best.cost {
            best = cand;
        }
        injected.push(seq);
    }
    let mut std: Vec<[f64; 2]> = vec![[cfg.init_std[0] * scale[0], cfg.init_std[1] * scale[1]]; horizon];
    let min_std = [cfg.min_std[0] * scale[0], cfg.min_std[1] * scale[1]];
    let elite = cfg.elite_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut iteration_best = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let mut pool: Vec<(f64, ControlSequence)> = Vec::with_capacity(cfg.samples + injected.len());
        if iter == 0 {
            for seq in &injected {
                let c = evaluate(seq.clone())?;
                pool.push((c.cost, c.controls));
            }
        }
        for n in 0..cfg.samples {
            let mut seq = ControlSequence {
                commands: (0..horizon)
                    .map(|t| {
                        if n == 0 && iter > 0 {
                            // the current mean itself is always scored
                            return VelocityCommand::new(mean[t][0], mean[t][1]);
                        }
                        let e0: f64 = StandardNormal.sample(&mut rng);
                        let e1: f64 = StandardNormal.sample(&mut rng);
                        VelocityCommand::new(mean[t][0] + std[t][0] * e0, mean[t][1] + std[t][1] * e1)
                    })
                    .collect(),
            };
            clamp_sequence(&mut seq, params);
            let cand = evaluate(seq)?;
            pool.push((cand.cost, cand.controls.clone()));
            if cand.cost < best.cost {
                best = cand;
            }
        }
        iteration_best.push(best.cost);

        // stable order: cost, then draw order
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| pool[a].0.total_cmp(&pool[b].0).then(a.cmp(&b)));
        let elites = &order[..elite.min(order.len())];
        let m = elites.len() as f64;
        for t in 0..horizon {
            for d in 0..2 {
                let pick = |k: usize| {
                    let c = pool[k].1.commands[t];
                    if d == 0 {
                        c.v
                    } else {
                        c.omega
                    }
                };
                let mu = elites.iter().map(|&k| pick(k)).sum::<f64>() / m;
                let var = elites.iter().map(|&k| (pick(k) - mu).powi(2)).sum::<f64>() / m;
                mean[t][d] = mu;
                std[t][d] = var.sqrt().max(min_std[d]);
            }
        }
    }

    Ok(MpcSolution {
        feasible: best.breakdown.collisions == 0,
        cost: best.cost,
        cost_breakdown: best.breakdown,
        controls: best.controls,
        predicted: best.predicted,
        iteration_best,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Cruise speed along the global path as a fraction of `v_max`.
    pub v_ref_factor: f64,
    /// Planner inflation beyond the footprint radius.
    pub inflation_margin: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            v_ref_factor: 0.8,
            inflation_margin: 0.4,
        }
    }
}

impl PlannerConfig {
    pub fn inflation_radius(&self, params: &WheelchairParams) -> f64 {
        params.footprint_radius + self.inflation_margin
    }
}

/// Intermediate geometry from the last controller step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub theta: f64,
    pub global: StateTrajectory,
    pub user: StateTrajectory,
    pub blended: StateTrajectory,
    pub solution: MpcSolution,
}

/// Receding-horizon controller: owns the global path, warm start and the
/// last applied command for one session.
#[derive(Debug, Clone)]
pub struct Controller {
    params: WheelchairParams,
    cfg: MpcConfig,
    planner: PlannerConfig,
    goal: Option<(GoalPoint, f64)>,
    path: Option<(PlannedPath, PathProjector)>,
    progress: f64,
    warm: Option<ControlSequence>,
    last_cmd: VelocityCommand,
    tick: u64,
    replans: usize,
    trace: Option<StepTrace>,
}

impl Controller {
    pub fn new(params: WheelchairParams, cfg: MpcConfig, planner: PlannerConfig) -> Self {
        Self {
            params,
            cfg,
            planner,
            goal: None,
            path: None,
            progress: 0.0,
            warm: None,
            last_cmd: VelocityCommand::ZERO,
            tick: 0,
            replans: 0,
            trace: None,
        }
    }

    pub fn set_goal(&mut self, goal: GoalPoint, tolerance: f64) {
        self.goal = Some((goal, tolerance));
        self.path = None;
        self.progress = 0.0;
    }

    pub fn goal(&self) -> Option<GoalPoint> {
        self.goal.map(|(g, _)| g)
    }

    /// Use an externally planned path instead of planning on first use.
    pub fn set_path(&mut self, path: PlannedPath) {
        let projector = PathProjector::new(&path);
        self.path = Some((path, projector));
        self.progress = 0.0;
    }

    pub fn path(&self) -> Option<&PlannedPath> {
        self.path.as_ref().map(|(p, _)| p)
    }

    pub fn last_trace(&self) -> Option<&StepTrace> {
        self.trace.as_ref()
    }

    pub fn last_command(&self) -> VelocityCommand {
        self.last_cmd
    }

    /// Number of times the global path was recomputed after the first plan.
    pub fn replans(&self) -> usize {
        self.replans
    }

    /// Record a command applied outside the MPC (keeps rate limits coherent).
    pub fn note_applied(&mut self, cmd: VelocityCommand) {
        self.last_cmd = cmd;
    }

    fn ensure_path(&mut self, pose: &Pose2D, grid: &OccupancyGrid, goal: GoalPoint) -> Result<()> {
        if self.path.is_some() {
            return Ok(());
        }
        let start = nearest_free_point(grid, (pose.x, pose.y)).unwrap_or((pose.x, pose.y));
        let raw = plan(grid, start, (goal.x, goal.y))?;
        let mut path = shortcut(&raw, grid);
        // begin the route at the chair itself when it sits off the free grid
        if path.start() != Some((pose.x, pose.y)) && start != (pose.x, pose.y) {
            path = PlannedPath::from_waypoints(std::iter::once((pose.x, pose.y)).chain(path.waypoints));
        }
        self.set_path(path);
        Ok(())
    }

    fn global_reference(&mut self, pose: &Pose2D) -> StateTrajectory {
        let (_, projector) = self.path.as_ref().expect("path planned");
        let s = projector.project_within(pose.x, pose.y, self.progress - 1.0, self.progress + 3.0);
        self.progress = s;
        let spacing = self.planner.v_ref_factor * self.params.v_max * self.cfg.dt;
        projector.reference(s, self.cfg.horizon, spacing, self.cfg.dt, pose.theta)
    }

    /// One control step: build the global and user references, blend them by
    /// `theta`, solve, and return the first command clamped against the
    /// previously applied one.
    pub fn step(&mut self, pose: &Pose2D, theta: f64, user_cmd: &UserCommand, grid: &OccupancyGrid) -> Result<VelocityCommand> {
        let (goal, tolerance) = self
            .goal
            .ok_or_else(|| Error::Config("a goal is required for planner-driven modes".into()))?;
        if pose.distance_to(goal.x, goal.y) <= tolerance {
            self.last_cmd = VelocityCommand::ZERO;
            self.warm = None;
            return Ok(VelocityCommand::ZERO);
        }
        self.ensure_path(pose, grid, goal)?;
        let mut s_global = self.global_reference(pose);
        if s_global
            .poses
            .iter()
            .skip(1)
            .any(|p| in_collision(grid, p, self.params.footprint_radius))
        {
            self.path = None;
            self.progress = 0.0;
            self.replans += 1;
            self.ensure_path(pose, grid, goal)?;
            s_global = self.global_reference(pose);
        }
        let s_user = user_reference(pose, user_cmd, &self.params, self.cfg.horizon, self.cfg.dt);
        let blended = blend_reference(&s_user, &s_global, theta)?;
        let cfg = MpcConfig {
            seed: seed::derive(self.cfg.seed, self.tick),
            ..self.cfg.clone()
        };
        let solution = solve(pose, &blended, grid, &self.params, &cfg, self.warm.as_ref())?;
        let first = solution.controls.commands.first().copied().unwrap_or_default();
        let cmd = clamp(first, self.last_cmd, &self.params);
        self.last_cmd = cmd;
        self.warm = Some(solution.controls.clone());
        self.tick += 1;
        self.trace = Some(StepTrace {
            theta,
            global: s_global,
            user: s_user,
            blended,
            solution,
        });
        Ok(cmd)
    }
}

/// Center of the FREE cell nearest to `p` (breadth-first over the grid).
pub fn nearest_free_point(grid: &OccupancyGrid, p: (f64, f64)) -> Option<(f64, f64)> {
    let (i, j) = grid.cell_of(p.0, p.1)?;
    if grid.is_free(i, j) {
        return Some(p);
    }
    let mut best: Option<(f64, usize)> = None;
    for idx in 0..grid.len() {
        if grid.state_at(idx) != CellState::Free {
            continue;
        }
        let (ci, cj) = grid.coords(idx);
        let (cx, cy) = grid.cell_center(ci, cj);
        let d2 = (cx - p.0).powi(2) + (cy - p.1).powi(2);
        if best.is_none_or(|(b, _)| d2 < b) {
            best = Some((d2, idx));
        }
    }
    best.map(|(_, idx)| {
        let (ci, cj) = grid.coords(idx);
        grid.cell_center(ci, cj)
    })
}
