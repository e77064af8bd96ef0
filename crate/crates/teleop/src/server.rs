//! The sim thread, the connection handlers and the HTTP routes.
//!
//! One std thread owns the [`Simulation`]. Handlers reach it only through a
//! bounded command queue; snapshots leave through a broadcast channel whose
//! per-receiver buffer is [`SEND_QUEUE_DEPTH`]. The sim thread never awaits.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use psf_core::sim::{GoalSchedule, LogRow, ObstacleSpec, ScenarioConfig, Simulation};
use psf_core::{ControlInput, GridSpec, RobotState};
use tokio::net::{TcpListener, ToSocketAddrs};
use tokio::sync::{broadcast, mpsc, watch};

use crate::wire::{
    envelope, parse_client, ClientCommand, EventPayload, FieldSlicePayload, GoalPayload, Level, StatePayload,
};

/// Outbound messages a client may fall behind before it is disconnected.
pub const SEND_QUEUE_DEPTH: usize = 64;
/// Inbound commands buffered between handlers and the sim thread; further
/// commands are refused with an event.
pub const COMMAND_QUEUE_DEPTH: usize = 256;
/// Replies addressed to one connection (command errors).
pub const REPLY_QUEUE_DEPTH: usize = 32;
/// Slowest tick period the service accepts (state streams at ≥ 20 Hz).
pub const MAX_TICK_PERIOD: f64 = 0.05;
/// Target period of `field_slice` messages (≥ 5 Hz).
pub const FIELD_SLICE_PERIOD: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] psf_core::Error),
    #[error("scenario goal mode must be `teleop`")]
    NotTeleop,
    #[error("control_dt {0} s is slower than the {MAX_TICK_PERIOD} s state rate")]
    TickTooSlow(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sim thread panicked")]
    SimPanicked,
}

#[derive(Clone)]
struct Outgoing {
    kind: &'static str,
    payload: Arc<str>,
}

impl Outgoing {
    fn new(kind: &'static str, payload: &impl serde::Serialize) -> Self {
        Outgoing {
            kind,
            payload: serde_json::to_string(payload).expect("payload serializes").into(),
        }
    }

    fn event(level: Level, text: impl Into<String>) -> Self {
        Outgoing::new(
            "event",
            &EventPayload {
                level,
                text: text.into(),
            },
        )
    }
}

/// A validated command on its way to the sim thread.
pub(crate) struct Pending {
    cmd: ClientCommand,
    reply: mpsc::Sender<Outgoing>,
}

/// Commands drained in one tick: the last goal, everything else in order.
pub(crate) struct Batch<T> {
    pub goal: Option<GoalPayload>,
    pub rest: Vec<T>,
}

/// Folds one tick's worth of commands. Earlier goals are discarded unseen.
pub(crate) fn batch<T>(items: impl IntoIterator<Item = T>, cmd: impl Fn(&T) -> &ClientCommand) -> Batch<T> {
    let mut out = Batch {
        goal: None,
        rest: Vec::new(),
    };
    for item in items {
        match cmd(&item) {
            ClientCommand::Goal(g) => out.goal = Some(*g),
            _ => out.rest.push(item),
        }
    }
    out
}

/// Tick start times, for cadence statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Cadence {
    pub period: Duration,
    /// Gaps between consecutive tick starts.
    pub intervals: Vec<Duration>,
    /// Ticks that overran their period.
    pub overruns: usize,
}

impl Cadence {
    /// `|interval - period| / period` for every interval.
    pub fn jitter(&self) -> Vec<f64> {
        let p = self.period.as_secs_f64();
        self.intervals.iter().map(|d| (d.as_secs_f64() - p).abs() / p).collect()
    }

    pub fn max_jitter(&self) -> f64 {
        self.jitter().into_iter().fold(0.0, f64::max)
    }
}

struct Shared {
    grid: GridSpec,
    commands: mpsc::Sender<Pending>,
    outbound: broadcast::Sender<Outgoing>,
    scenario: RwLock<String>,
    shutdown: watch::Receiver<bool>,
}

/// What a finished service run leaves behind.
#[derive(Debug, Clone, PartialEq)]
pub struct Served {
    pub cadence: Cadence,
    /// One row per simulated (unpaused) tick.
    pub rows: Vec<LogRow>,
}

/// A bound, not yet running, teleoperation service.
pub struct Server {
    listener: TcpListener,
    config: ScenarioConfig,
}

impl Server {
    /// Validates `config` and binds `addr`. Port 0 picks a free port.
    pub async fn bind(config: ScenarioConfig, addr: impl ToSocketAddrs) -> Result<Self, ServeError> {
        config.validate()?;
        if !matches!(config.goal, GoalSchedule::Teleop { .. }) {
            return Err(ServeError::NotTeleop);
        }
        if config.control_dt > MAX_TICK_PERIOD + 1e-12 {
            return Err(ServeError::TickTooSlow(config.control_dt));
        }
        let listener = TcpListener::bind(addr).await?;
        Ok(Server { listener, config })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Serves until `shutdown` resolves, then stops the sim thread.
    pub async fn run_until(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<Served, ServeError> {
        let sim = Simulation::new(self.config.clone())?;
        let (cmd_tx, cmd_rx) = mpsc::channel(COMMAND_QUEUE_DEPTH);
        let (out_tx, _) = broadcast::channel(SEND_QUEUE_DEPTH);
        let (stop_tx, stop_rx) = watch::channel(false);
        let shared = Arc::new(Shared {
            grid: self.config.grid,
            commands: cmd_tx,
            outbound: out_tx.clone(),
            scenario: RwLock::new(self.config.to_json()),
            shutdown: stop_rx,
        });

        let stop = Arc::new(AtomicBool::new(false));
        let cadence = Arc::new(Mutex::new(Cadence {
            period: Duration::from_secs_f64(self.config.control_dt),
            intervals: Vec::new(),
            overruns: 0,
        }));
        let sim_thread = {
            let (stop, cadence, shared) = (stop.clone(), cadence.clone(), shared.clone());
            std::thread::Builder::new()
                .name("psf-sim".into())
                .spawn(move || sim_loop(sim, cmd_rx, out_tx, &shared, &stop, &cadence))?
        };

        let app = Router::new()
            .route("/ws", get(ws_route))
            .route("/health", get(|| async { "ok" }))
            .route("/scenario", get(scenario_route))
            .with_state(shared);
        let signal = async move {
            shutdown.await;
            let _ = stop_tx.send(true);
        };
        let served = axum::serve(self.listener, app).with_graceful_shutdown(signal).await;

        stop.store(true, Ordering::Relaxed);
        let joined = tokio::task::spawn_blocking(move || sim_thread.join())
            .await
            .map_err(|_| ServeError::SimPanicked)?;
        let rows = joined.map_err(|_| ServeError::SimPanicked)?;
        served?;
        let cadence = cadence.lock().expect("cadence lock").clone();
        Ok(Served { cadence, rows })
    }
}

/// Binds `addr` and serves `config` until ctrl-c.
pub async fn serve(config: ScenarioConfig, addr: impl ToSocketAddrs) -> Result<Served, ServeError> {
    let server = Server::bind(config, addr).await?;
    eprintln!("listening on ws://{}/ws", server.local_addr());
    server
        .run_until(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn scenario_route(State(shared): State<Arc<Shared>>) -> Response {
    let body = shared.scenario.read().expect("scenario lock").clone();
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn ws_route(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn connection(mut socket: WebSocket, shared: Arc<Shared>) {
    let mut snapshots = shared.outbound.subscribe();
    let (reply_tx, mut replies) = mpsc::channel(REPLY_QUEUE_DEPTH);
    let mut shutdown = shared.shutdown.clone();
    let mut out_seq = 0u64;
    let mut last_in_seq: Option<u64> = None;

    async fn send(socket: &mut WebSocket, seq: &mut u64, msg: &Outgoing) -> bool {
        *seq += 1;
        let text = envelope(msg.kind, *seq, &msg.payload);
        socket.send(Message::Text(text.into())).await.is_ok()
    }

    loop {
        let outgoing = tokio::select! {
            _ = shutdown.changed() => break,
            snap = snapshots.recv() => match snap {
                Ok(m) => m,
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let bye = Outgoing::event(Level::Error, format!("dropped: {n} messages behind"));
                    let _ = send(&mut socket, &mut out_seq, &bye).await;
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(m) = replies.recv() => m,
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    match accept(&shared, text.as_str(), &mut last_in_seq, &reply_tx) {
                        Ok(()) => continue,
                        Err(e) => e,
                    }
                }
                Some(Ok(Message::Binary(_))) => Outgoing::event(Level::Error, "binary frames are not accepted"),
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => continue,
            },
        };
        if !send(&mut socket, &mut out_seq, &outgoing).await {
            break;
        }
    }
}

/// Parses, checks sequencing and extent, and queues one client message.
fn accept(
    shared: &Shared,
    text: &str,
    last_seq: &mut Option<u64>,
    reply: &mpsc::Sender<Outgoing>,
) -> Result<(), Outgoing> {
    let (seq, cmd) = parse_client(text).map_err(|e| Outgoing::event(Level::Error, e.to_string()))?;
    if last_seq.is_some_and(|last| seq <= last) {
        return Err(Outgoing::event(
            Level::Error,
            format!("seq {seq} does not follow {}; ignored", last_seq.unwrap_or_default()),
        ));
    }
    *last_seq = Some(seq);
    cmd.validate(&shared.grid)
        .map_err(|e| Outgoing::event(Level::Error, format!("rejected: {e}")))?;
    shared
        .commands
        .try_send(Pending {
            cmd,
            reply: reply.clone(),
        })
        .map_err(|_| Outgoing::event(Level::Warn, "command queue full; ignored"))
}

fn sim_loop(
    mut sim: Simulation,
    mut commands: mpsc::Receiver<Pending>,
    outbound: broadcast::Sender<Outgoing>,
    shared: &Shared,
    stop: &AtomicBool,
    cadence: &Mutex<Cadence>,
) -> Vec<LogRow> {
    let dt = sim.config().control_dt;
    let period = Duration::from_secs_f64(dt);
    let slice_every = ((FIELD_SLICE_PERIOD / dt + 1e-9).floor() as usize).max(1);
    let mut paused = false;
    let mut announced_end = false;
    let mut last_input = ControlInput::ZERO;
    let mut last_h = None;
    let mut last_slack = 0.0;
    let mut deadline = Instant::now();
    let mut last_start: Option<Instant> = None;
    let mut k = 0usize;
    let mut rows = Vec::new();

    while !stop.load(Ordering::Relaxed) {
        let started = Instant::now();
        if let Some(prev) = last_start {
            cadence.lock().expect("cadence lock").intervals.push(started - prev);
        }
        last_start = Some(started);

        let mut drained = Vec::new();
        while let Ok(p) = commands.try_recv() {
            drained.push(p);
        }
        let Batch { goal, rest } = batch(drained, |p| &p.cmd);
        if let Some(g) = goal {
            let theta = g.theta.unwrap_or(sim.goal().theta);
            // Already checked against the grid by the handler.
            let _ = sim.set_goal(RobotState::new(g.x, g.y, theta));
        }
        for Pending { cmd, reply } in rest {
            let result = match cmd {
                ClientCommand::Pause => {
                    paused = true;
                    Ok("paused".to_string())
                }
                ClientCommand::Resume => {
                    paused = false;
                    Ok("resumed".to_string())
                }
                ClientCommand::SpawnObstacle(s) => sim
                    .spawn_obstacle(ObstacleSpec {
                        shape: s.shape,
                        pose: s.pose,
                        velocity: s.velocity,
                        spawn_time: 0.0,
                        spawn_jitter: 0.0,
                    })
                    .map(|()| format!("obstacle spawned at ({}, {})", s.pose[0], s.pose[1])),
                ClientCommand::SetParams(p) => sim.set_params(p.rho, p.horizon, p.controller).map(|()| {
                    *shared.scenario.write().expect("scenario lock") = sim.config().to_json();
                    let c = &sim.config().controller;
                    format!("params: {:?}, rho {}, N {}", c.kind, c.mpc.rho, c.mpc.horizon)
                }),
                ClientCommand::Goal(_) => unreachable!("goals are batched"),
            };
            match result {
                Ok(text) => {
                    let _ = outbound.send(Outgoing::event(Level::Info, text));
                }
                Err(e) => {
                    let _ = reply.try_send(Outgoing::event(Level::Error, format!("rejected: {e}")));
                }
            }
        }

        if sim.is_finished() && !announced_end {
            announced_end = true;
            let _ = outbound.send(Outgoing::event(Level::Warn, "scenario duration reached; holding"));
        }
        if !paused && !sim.is_finished() {
            let out = sim.tick();
            last_input = ControlInput::new(out.row.v_x, out.row.v_y, out.row.omega);
            last_h = out.row.h_value.is_finite().then_some(out.row.h_value);
            last_slack = out.row.slack;
            rows.push(out.row);
            if let Some(f) = out.failure {
                let _ = outbound.send(Outgoing::event(Level::Warn, format!("t={:.2}: {f}", out.row.t)));
            }
        }
        let _ = outbound.send(Outgoing::new(
            "state",
            &state(&sim, paused, last_input, last_h, last_slack),
        ));
        if k.is_multiple_of(slice_every) {
            if let Some(slice) = field_slice(&sim) {
                let _ = outbound.send(Outgoing::new("field_slice", &slice));
            }
        }
        k += 1;

        if k == 1 {
            // The first field is built cold; pace from the end of that tick.
            deadline = Instant::now();
            last_start = None;
        }
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else {
            cadence.lock().expect("cadence lock").overruns += 1;
            deadline = now;
        }
    }
    rows
}

fn state(sim: &Simulation, paused: bool, input: ControlInput, h: Option<f64>, slack: f64) -> StatePayload {
    let world = sim.world();
    let c = &sim.config().controller;
    StatePayload {
        t: world.t,
        pose: world.robot,
        inputs: if paused || sim.is_finished() {
            ControlInput::ZERO
        } else {
            input
        },
        h_value: h,
        slack,
        plan: sim
            .plan()
            .map(|p| p.states.iter().map(|s| [s.x, s.y, s.theta]).collect())
            .unwrap_or_default(),
        obstacles: world
            .obstacles
            .iter()
            .filter(|o| o.is_active(world.t))
            .cloned()
            .collect(),
        goal: sim.goal(),
        paused,
        controller: c.kind,
        rho: c.mpc.rho,
        horizon: c.mpc.horizon,
    }
}

/// The first time slice at the heading node nearest the robot.
fn field_slice(sim: &Simulation) -> Option<FieldSlicePayload> {
    let field = sim.field()?;
    let n = field.spec.n_theta;
    let step = std::f64::consts::TAU / n as f64;
    let j = (sim.world().robot.theta / step).round() as usize % n;
    Some(FieldSlicePayload::encode(j, 0, &field.spec.grid, field.slice(j, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goal(x: f64) -> ClientCommand {
        ClientCommand::Goal(GoalPayload { x, y: 1.0, theta: None })
    }

    #[test]
    fn last_goal_wins_and_others_keep_order() {
        let cmds = vec![
            goal(1.0),
            ClientCommand::Pause,
            goal(2.0),
            ClientCommand::Resume,
            goal(3.0),
        ];
        let b = batch(cmds, |c| c);
        assert_eq!(b.goal.map(|g| g.x), Some(3.0));
        assert_eq!(b.rest, vec![ClientCommand::Pause, ClientCommand::Resume]);

        let b = batch(vec![ClientCommand::Pause], |c| c);
        assert!(b.goal.is_none());
        assert_eq!(b.rest.len(), 1);
    }

    #[test]
    fn jitter_is_relative_to_period() {
        let c = Cadence {
            period: Duration::from_millis(50),
            intervals: vec![
                Duration::from_millis(50),
                Duration::from_millis(55),
                Duration::from_millis(40),
            ],
            overruns: 0,
        };
        let j = c.jitter();
        assert!((j[1] - 0.1).abs() < 1e-12 && (c.max_jitter() - 0.2).abs() < 1e-12);
    }
}
