//! One websocket connection: the protocol state machine and the trial thread.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc as std_mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use conav::metrics::TrialMetrics;
use conav::modes::NavMode;
use conav::sim::{SessionStatus, SimSession, UserSource};
use conav::user::{CommandQueue, UserCommand};
use conav::vehicle::StateTrajectory;
use conav::world::{GoalPoint, Scenario};
use tokio::sync::mpsc;

use crate::protocol::{parse_client, ClientMessage, ParseError, ServerMessage, PROTOCOL_VERSION};
use crate::AppState;

/// A frame for the writer task. `close` ends the connection after sending.
#[derive(Debug)]
pub struct Outgoing {
    pub msg: ServerMessage,
    pub close: bool,
}

impl Outgoing {
    fn msg(msg: ServerMessage) -> Self {
        Self { msg, close: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitHello,
    Configure,
    Running,
}

struct RunningTrial {
    joystick: std_mpsc::Sender<(f64, f64)>,
    stop: Arc<AtomicBool>,
    handle: JoinHandle<()>,
}

impl RunningTrial {
    fn halt(self) {
        self.stop.store(true, Ordering::Relaxed);
        let _ = self.handle.join();
    }
}

pub struct Connection {
    app: Arc<AppState>,
    out: mpsc::Sender<Outgoing>,
    phase: Phase,
    last_seq: Option<u64>,
    scenario: Option<Arc<Scenario>>,
    seed: u64,
    mode: NavMode,
    goal: Option<GoalPoint>,
    trial: Option<RunningTrial>,
}

impl Connection {
    pub fn new(app: Arc<AppState>, out: mpsc::Sender<Outgoing>) -> Self {
        Self {
            app,
            out,
            phase: Phase::AwaitHello,
            last_seq: None,
            scenario: None,
            seed: 0,
            mode: NavMode::Shared,
            goal: None,
            trial: None,
        }
    }

    async fn send(&self, msg: ServerMessage) {
        let _ = self.out.send(Outgoing::msg(msg)).await;
    }

    async fn fail(&self, code: &str, text: impl Into<String>) -> Flow {
        self.send(ServerMessage::error(code, text)).await;
        Flow::Continue
    }

    /// The running trial, if its thread is still alive.
    fn live_trial(&mut self) -> Option<&RunningTrial> {
        if self.trial.as_ref().is_some_and(|t| t.handle.is_finished()) {
            if let Some(t) = self.trial.take() {
                t.halt();
            }
            self.phase = Phase::Configure;
        }
        self.trial.as_ref()
    }

    pub async fn handle_text(&mut self, text: &str) -> Flow {
        let env = match parse_client(text) {
            Ok(env) => env,
            Err(ParseError::UnknownType(tag)) => return self.fail("unknown_type", format!("unknown message type '{tag}'")).await,
            Err(ParseError::Malformed(e)) => return self.fail("malformed", e).await,
        };
        if self.last_seq.is_some_and(|last| env.seq <= last) {
            return self.fail("bad_seq", format!("sequence number {} is not increasing", env.seq)).await;
        }
        self.last_seq = Some(env.seq);

        if self.phase == Phase::AwaitHello && !matches!(env.msg, ClientMessage::Hello { .. }) {
            return self.fail("hello_required", "send hello first").await;
        }
        match env.msg {
            ClientMessage::Hello { proto, scenario, seed } => self.hello(proto, scenario, seed).await,
            ClientMessage::SetMode { mode } => {
                if self.live_trial().is_some() {
                    return self.fail("trial_running", "reset before changing mode").await;
                }
                self.mode = mode;
                Flow::Continue
            }
            ClientMessage::SetGoal { x, y } => {
                if self.live_trial().is_some() {
                    return self.fail("trial_running", "reset before changing the goal").await;
                }
                let scenario = self.scenario.as_ref().expect("scenario loaded by hello");
                if !scenario.grid.point_is_free(x, y) {
                    return self.fail("blocked_goal", format!("goal ({x:.2}, {y:.2}) is not in free space")).await;
                }
                self.goal = Some(GoalPoint { x, y });
                Flow::Continue
            }
            ClientMessage::Joystick { v_norm, omega_norm } => {
                match self.live_trial() {
                    Some(t) => {
                        let _ = t.joystick.send((v_norm, omega_norm));
                        Flow::Continue
                    }
                    None => self.fail("not_running", "joystick input outside a running trial").await,
                }
            }
            ClientMessage::Start => self.start().await,
            ClientMessage::Reset => {
                if let Some(t) = self.trial.take() {
                    t.halt();
                }
                self.goal = None;
                self.phase = Phase::Configure;
                Flow::Continue
            }
        }
    }

    async fn hello(&mut self, proto: u32, scenario: Option<String>, seed: Option<u64>) -> Flow {
        if proto != PROTOCOL_VERSION {
            let _ = self
                .out
                .send(Outgoing {
                    msg: ServerMessage::error(
                        "proto_mismatch",
                        format!("protocol {proto} not supported, server speaks {PROTOCOL_VERSION}"),
                    ),
                    close: true,
                })
                .await;
            return Flow::Close;
        }
        if self.phase != Phase::AwaitHello {
            return self.fail("already_connected", "hello was already received").await;
        }
        let name = match scenario.or_else(|| self.app.default_scenario()) {
            Some(n) => n,
            None => return self.fail("unknown_scenario", "no scenarios available").await,
        };
        let built = match self.app.scenario(&name) {
            Ok(s) => s,
            Err(e) => return self.fail("unknown_scenario", e).await,
        };
        self.seed = seed.unwrap_or(0);
        self.send(ServerMessage::ScenarioGeometry {
            name,
            spec: built.spec.clone(),
        })
        .await;
        self.scenario = Some(built);
        self.phase = Phase::Configure;
        Flow::Continue
    }

    async fn start(&mut self) -> Flow {
        if self.live_trial().is_some() {
            return self.fail("trial_running", "a trial is already running").await;
        }
        if self.mode.needs_goal() && self.goal.is_none() {
            return self
                .fail("goal_required", format!("{} mode needs a goal before start", self.mode))
                .await;
        }
        let scenario = Arc::clone(self.scenario.as_ref().expect("scenario loaded by hello"));
        let queue = CommandQueue::new();
        let mut session = match SimSession::new(
            scenario,
            self.mode,
            UserSource::Queue(queue.clone()),
            self.seed,
            0,
            self.app.config.sim.clone(),
        ) {
            Ok(s) => s,
            Err(e) => return self.fail("internal", e.to_string()).await,
        };
        if let Some(goal) = self.goal {
            if let Err(e) = session.set_goal(goal) {
                return self.fail("blocked_goal", e.to_string()).await;
            }
        }
        let (joy_tx, joy_rx) = std_mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        let ctx = TrialThread {
            app: Arc::clone(&self.app),
            session,
            queue,
            joystick: joy_rx,
            stop: Arc::clone(&stop),
            out: self.out.clone(),
        };
        let handle = std::thread::spawn(move || ctx.run());
        self.trial = Some(RunningTrial {
            joystick: joy_tx,
            stop,
            handle,
        });
        self.phase = Phase::Running;
        Flow::Continue
    }

    /// Stop any running trial. Called when the socket goes away.
    pub fn shutdown(&mut self) {
        if let Some(t) = self.trial.take() {
            t.halt();
        }
    }
}

/// Stamp every pending joystick message with the sim clock and queue it.
/// Returns how many had out-of-range axes.
pub fn ingest_joystick(rx: &std_mpsc::Receiver<(f64, f64)>, queue: &CommandQueue, clock: f64, deadzone: f64) -> usize {
    let mut clamped = 0;
    while let Ok((v, w)) = rx.try_recv() {
        let (cmd, was_clamped) = UserCommand::from_axes(clock, v, w, deadzone);
        if was_clamped {
            tracing::warn!(v, w, "joystick axes clamped");
            clamped += 1;
        }
        queue.push(cmd);
    }
    clamped
}

fn points(traj: &StateTrajectory) -> Vec<(f64, f64)> {
    traj.poses.iter().map(|p| (p.x, p.y)).collect()
}

struct TrialThread {
    app: Arc<AppState>,
    session: SimSession,
    queue: CommandQueue,
    joystick: std_mpsc::Receiver<(f64, f64)>,
    stop: Arc<AtomicBool>,
    out: mpsc::Sender<Outgoing>,
}

impl TrialThread {
    fn run(mut self) {
        let period = self.app.config.tick_period;
        let deadzone = self.session.config().blending.deadzone;
        let mut clamped = 0;
        let mut next = Instant::now();
        loop {
            if self.stop.load(Ordering::Relaxed) {
                return;
            }
            if !period.is_zero() {
                next += period;
                let now = Instant::now();
                if next > now {
                    std::thread::sleep(next - now);
                } else if now - next > Duration::from_secs(1) {
                    // far behind: drop the backlog rather than spin
                    next = now;
                }
            }
            let clock = self.session.clock();
            clamped += ingest_joystick(&self.joystick, &self.queue, clock, deadzone);
            let sample = match self.session.tick() {
                Ok(s) => *s,
                Err(e) => {
                    let _ = self.out.blocking_send(Outgoing::msg(ServerMessage::error("internal", e.to_string())));
                    return;
                }
            };
            // a lagging client loses state frames; the sim never waits for it
            let _ = self.out.try_send(Outgoing::msg(ServerMessage::State {
                t: sample.t,
                pose: sample.pose,
                cmd: sample.cmd,
                in_collision: sample.in_collision,
                theta: sample.theta,
                k: sample.k,
            }));
            if let Some(trace) = self.session.controller().last_trace().filter(|_| self.session.mode().needs_goal()) {
                let _ = self.out.try_send(Outgoing::msg(ServerMessage::Trajectories {
                    global: points(&trace.global),
                    user: points(&trace.user),
                    blended: points(&trace.blended),
                    predicted: points(&trace.solution.predicted),
                }));
            }
            if self.session.status() == SessionStatus::Done {
                break;
            }
        }
        let record = self.session.into_record();
        let metrics = TrialMetrics::of(&record);
        let end_reason = record.end_reason;
        let trial_id = self.app.store_trial(record);
        let _ = self.out.blocking_send(Outgoing::msg(ServerMessage::TrialDone {
            trial_id,
            end_reason,
            metrics,
            clamped_inputs: clamped,
        }));
    }
}
