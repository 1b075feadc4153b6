//! Discrete-event simulation of the multistatic sounding schedule: antenna
//! switching inside one link and the phased master/slave measurement round.
//!
//! Time is kept in integer nanoseconds so that the repetition grid is exact.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::{self, Write as _};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NS_PER_S: f64 = 1e9;

fn to_ns(seconds: f64) -> u64 {
    (seconds * NS_PER_S).round() as u64
}

/// One symbol slot of the switching timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchSlot {
    pub offset: f64,
    pub tx: usize,
    pub rx: usize,
    pub symbol: usize,
}

/// Time-division switching timeline of one MIMO snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchSchedule {
    pub tx_elements: usize,
    pub rx_elements: usize,
    pub symbol_length: f64,
    pub slots: Vec<SwitchSlot>,
}

impl SwitchSchedule {
    /// Duration of one full snapshot.
    pub fn snapshot_duration(&self) -> f64 {
        self.slots.len() as f64 * self.symbol_length
    }

    /// Symbols between two Tx element switches.
    pub fn symbols_per_tx(&self) -> usize {
        2 * self.rx_elements
    }
}

/// The Rx switch dwells two symbols per element; the Tx switch advances
/// after every Rx element has been visited.
pub fn build_switch_schedule(tx_elements: usize, rx_elements: usize, symbol_length: f64) -> Result<SwitchSchedule> {
    if tx_elements == 0 || rx_elements == 0 {
        return Err(Error::Contract("switch schedule needs at least one element per side".into()));
    }
    if !(symbol_length > 0.0 && symbol_length.is_finite()) {
        return Err(Error::Contract(format!("symbol length must be positive, got {symbol_length}")));
    }
    let per_tx = 2 * rx_elements;
    let slots = (0..tx_elements * per_tx)
        .map(|s| SwitchSlot { offset: s as f64 * symbol_length, tx: s / per_tx, rx: (s % per_tx) / 2, symbol: s })
        .collect();
    Ok(SwitchSchedule { tx_elements, rx_elements, symbol_length, slots })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub tx: usize,
    pub rx: Vec<usize>,
}

/// Ordered measurement phases of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPlan {
    pub num_nodes: usize,
    pub phases: Vec<Phase>,
    pub t_rep: f64,
    pub guard_time: f64,
    /// Rx nodes keep their captures instead of sending them to the master.
    pub local_save: bool,
}

impl MeasurementPlan {
    /// Every measured (tx, rx) pair in phase order.
    pub fn links(&self) -> Vec<(usize, usize)> {
        self.phases.iter().flat_map(|p| p.rx.iter().map(move |&r| (p.tx, r))).collect()
    }

    /// Structured text form.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {}", self.num_nodes);
        let _ = writeln!(s, "t_rep_s {}", self.t_rep);
        let _ = writeln!(s, "guard_time_s {}", self.guard_time);
        let _ = writeln!(s, "local_save {}", self.local_save);
        let _ = writeln!(s, "phases {}", self.phases.len());
        for (i, p) in self.phases.iter().enumerate() {
            let rx: Vec<String> = p.rx.iter().map(|r| r.to_string()).collect();
            let _ = writeln!(s, "phase {i} tx {} rx {}", p.tx, rx.join(","));
        }
        let _ = writeln!(s, "links {}", self.links().len());
        s
    }
}

/// Phase `p` transmits from node `p` to every node with a higher id, so
/// each reciprocal link is measured once.
pub fn build_plan(num_nodes: usize, config: &ProtocolConfig) -> Result<MeasurementPlan> {
    if num_nodes < 2 {
        return Err(Error::Contract(format!("a plan needs at least two nodes, got {num_nodes}")));
    }
    config.validate()?;
    let phases = (0..num_nodes - 1).map(|p| Phase { tx: p, rx: (p + 1..num_nodes).collect() }).collect();
    Ok(MeasurementPlan {
        num_nodes,
        phases,
        t_rep: config.t_rep,
        guard_time: config.guard_time,
        local_save: config.local_save,
    })
}

/// Command-channel latency in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatencyModel {
    Fixed { seconds: f64 },
    Uniform { min: f64, max: f64 },
    /// Draws cycle through the listed values.
    Sequence { values: Vec<f64> },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Uniform { min: 1e-3, max: 20e-3 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match self {
            LatencyModel::Fixed { seconds } => ok(*seconds),
            LatencyModel::Uniform { min, max } => ok(*min) && ok(*max) && min <= max,
            LatencyModel::Sequence { values } => !values.is_empty() && values.iter().all(|&v| ok(v)),
        };
        if valid {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid latency model {self:?}")))
        }
    }
}

struct LatencySource<'a> {
    model: &'a LatencyModel,
    rng: ChaCha8Rng,
    next: usize,
}

impl LatencySource<'_> {
    fn draw(&mut self) -> u64 {
        let seconds = match self.model {
            LatencyModel::Fixed { seconds } => *seconds,
            LatencyModel::Uniform { min, max } if min == max => *min,
            LatencyModel::Uniform { min, max } => self.rng.random_range(*min..*max),
            LatencyModel::Sequence { values } => {
                let v = values[self.next % values.len()];
                self.next += 1;
                v
            }
        };
        to_ns(seconds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub t_rep: f64,
    pub symbol_length: f64,
    pub guard_time: f64,
    pub local_save: bool,
    pub latency: LatencyModel,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { t_rep: 0.1, symbol_length: 1.28e-6, guard_time: 0.0, local_save: false, latency: LatencyModel::default() }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_rep > 0.0 && self.t_rep.is_finite()) {
            return Err(Error::Config(format!("protocol.t_rep must be positive, got {}", self.t_rep)));
        }
        if !(self.symbol_length > 0.0 && self.symbol_length.is_finite()) {
            return Err(Error::Config(format!("protocol.symbol_length must be positive, got {}", self.symbol_length)));
        }
        if !(self.guard_time >= 0.0 && self.guard_time.is_finite()) {
            return Err(Error::Config(format!("protocol.guard_time must be nonnegative, got {}", self.guard_time)));
        }
        self.latency.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Actor {
    Master,
    Node(usize),
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Master => write!(f, "master"),
            Actor::Node(n) => write!(f, "node{n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    CommandSent,
    CommandReceived,
    TransmissionStart,
    NotificationSent,
    NotificationReceived,
    RequestSent,
    RequestReceived,
    CycleSkipped,
    CaptureStart,
    CaptureEnd,
    TransmissionStop,
    DataTransferStart,
    DataTransferEnd,
    PhaseComplete,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::CommandSent => "command_sent",
            EventKind::CommandReceived => "command_received",
            EventKind::TransmissionStart => "transmission_start",
            EventKind::NotificationSent => "notification_sent",
            EventKind::NotificationReceived => "notification_received",
            EventKind::RequestSent => "request_sent",
            EventKind::RequestReceived => "request_received",
            EventKind::CycleSkipped => "cycle_skipped",
            EventKind::CaptureStart => "capture_start",
            EventKind::CaptureEnd => "capture_end",
            EventKind::TransmissionStop => "transmission_stop",
            EventKind::DataTransferStart => "data_transfer_start",
            EventKind::DataTransferEnd => "data_transfer_end",
            EventKind::PhaseComplete => "phase_complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time_ns: u64,
    pub phase: usize,
    pub actor: Actor,
    pub kind: EventKind,
    pub payload: String,
}

impl Event {
    pub fn time(&self) -> f64 {
        self.time_ns as f64 / NS_PER_S
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub t_rep_ns: u64,
    /// Last event time rounded up to the repetition grid.
    pub round_duration_ns: u64,
}

impl EventLog {
    pub fn round_duration(&self) -> f64 {
        self.round_duration_ns as f64 / NS_PER_S
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// Broken ordering, grid or causality rules, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for pair in self.events.windows(2) {
            if pair[1].time_ns < pair[0].time_ns {
                out.push(format!("time decreases at {:?}", pair[1]));
            }
        }
        for e in self.of_kind(EventKind::CaptureStart) {
            if e.time_ns % self.t_rep_ns != 0 {
                out.push(format!("capture off the repetition grid at {} ns", e.time_ns));
            }
        }
        let phases = self.events.iter().map(|e| e.phase + 1).max().unwrap_or(0);
        for p in 0..phases {
            let first = |kind: EventKind| self.events.iter().position(|e| e.phase == p && e.kind == kind);
            let notified = first(EventKind::NotificationReceived);
            let started = first(EventKind::TransmissionStart);
            for (i, e) in self.events.iter().enumerate().filter(|(_, e)| e.phase == p) {
                let after = |anchor: Option<usize>| anchor.is_some_and(|a| a < i);
                match e.kind {
                    EventKind::RequestSent | EventKind::RequestReceived if !after(notified) => {
                        out.push(format!("phase {p}: request before the transmission start notification"));
                    }
                    EventKind::CaptureStart if !after(started) => {
                        out.push(format!("phase {p}: capture before transmission start"));
                    }
                    _ => {}
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "time_ns", "phase", "actor", "event", "payload"])?;
        for e in &self.events {
            w.write_record([
                format!("{:.9}", e.time()),
                e.time_ns.to_string(),
                e.phase.to_string(),
                e.actor.to_string(),
                e.kind.name().to_string(),
                e.payload.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Step {
    SendCommand,
    ReceiveCommand,
    StartTransmission,
    ReceiveNotification,
    ReceiveRequest(usize),
    EndCapture,
    ReceiveData(usize),
    /// A transmission cycle boundary. Ordered after every other step at the
    /// same instant so that messages arriving exactly on the boundary count.
    Cycle,
}

impl Step {
    fn class(self) -> u8 {
        matches!(self, Step::Cycle) as u8
    }
}

#[derive(Default)]
struct PhaseState {
    tx_start: Option<u64>,
    ready: usize,
    captured: bool,
    delivered: usize,
}

/// Simulates one measurement round. Phases run back to back: the master
/// commands the Tx node, which starts transmitting at the next repetition
/// boundary and reports back; the master then broadcasts the reception
/// request and all Rx nodes capture at the first boundary after the last
/// request arrives. Boundaries passed while waiting are logged as skipped.
pub fn simulate_round(plan: &MeasurementPlan, schedule: &SwitchSchedule, latency: &LatencyModel, seed: u64) -> Result<EventLog> {
    latency.validate()?;
    if plan.phases.is_empty() {
        return Err(Error::Contract("plan has no phases".into()));
    }
    let t_rep = to_ns(plan.t_rep);
    if t_rep == 0 {
        return Err(Error::Contract(format!("repetition interval {} s is below one nanosecond", plan.t_rep)));
    }
    let guard = to_ns(plan.guard_time);
    let snapshot = to_ns(schedule.snapshot_duration());
    let grid_after = |t: u64| t.div_ceil(t_rep) * t_rep;

    let mut source = LatencySource { model: latency, rng: ChaCha8Rng::seed_from_u64(seed), next: 0 };
    let mut queue: BinaryHeap<Reverse<(u64, u8, u64, usize, Step)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |queue: &mut BinaryHeap<_>, time: u64, phase: usize, step: Step| {
        queue.push(Reverse((time, step.class(), seq, phase, step)));
        seq += 1;
    };
    let mut events = Vec::new();
    let mut log = |time_ns: u64, phase: usize, actor: Actor, kind: EventKind, payload: String| {
        events.push(Event { time_ns, phase, actor, kind, payload });
    };
    let mut state: Vec<PhaseState> = plan.phases.iter().map(|_| PhaseState::default()).collect();

    push(&mut queue, 0, 0, Step::SendCommand);
    while let Some(Reverse((t, _, _, p, step))) = queue.pop() {
        let phase = &plan.phases[p];
        let tx = Actor::Node(phase.tx);
        match step {
            Step::SendCommand => {
                log(t, p, Actor::Master, EventKind::CommandSent, format!("start transmission on node {}", phase.tx));
                push(&mut queue, t + source.draw(), p, Step::ReceiveCommand);
            }
            Step::ReceiveCommand => {
                log(t, p, tx, EventKind::CommandReceived, String::new());
                push(&mut queue, grid_after(t), p, Step::StartTransmission);
            }
            Step::StartTransmission => {
                state[p].tx_start = Some(t);
                log(t, p, tx, EventKind::TransmissionStart, format!("every {} ns", t_rep));
                log(t, p, tx, EventKind::NotificationSent, String::new());
                push(&mut queue, t + source.draw(), p, Step::ReceiveNotification);
                push(&mut queue, t, p, Step::Cycle);
            }
            Step::ReceiveNotification => {
                log(t, p, Actor::Master, EventKind::NotificationReceived, String::new());
                let rx: Vec<String> = phase.rx.iter().map(|r| r.to_string()).collect();
                log(t, p, Actor::Master, EventKind::RequestSent, format!("rx {}", rx.join(" ")));
                for &r in &phase.rx {
                    push(&mut queue, t + source.draw(), p, Step::ReceiveRequest(r));
                }
            }
            Step::ReceiveRequest(r) => {
                state[p].ready += 1;
                log(t, p, Actor::Node(r), EventKind::RequestReceived, String::new());
            }
            Step::Cycle => {
                if state[p].ready < phase.rx.len() {
                    log(t, p, tx, EventKind::CycleSkipped, "reception not requested yet".into());
                    push(&mut queue, t + t_rep, p, Step::Cycle);
                } else if !state[p].captured {
                    state[p].captured = true;
                    for &r in &phase.rx {
                        log(t, p, Actor::Node(r), EventKind::CaptureStart, format!("{} ns snapshot", snapshot));
                    }
                    push(&mut queue, t + snapshot, p, Step::EndCapture);
                }
            }
            Step::EndCapture => {
                for &r in &phase.rx {
                    log(t, p, Actor::Node(r), EventKind::CaptureEnd, String::new());
                }
                log(t, p, tx, EventKind::TransmissionStop, String::new());
                if plan.local_save {
                    log(t, p, Actor::Master, EventKind::PhaseComplete, "captures saved locally".into());
                    if p + 1 < plan.phases.len() {
                        push(&mut queue, t + guard, p + 1, Step::SendCommand);
                    }
                } else {
                    for &r in &phase.rx {
                        log(t, p, Actor::Node(r), EventKind::DataTransferStart, String::new());
                        push(&mut queue, t + source.draw(), p, Step::ReceiveData(r));
                    }
                }
            }
            Step::ReceiveData(r) => {
                state[p].delivered += 1;
                log(t, p, Actor::Master, EventKind::DataTransferEnd, format!("from node {r}"));
                if state[p].delivered == phase.rx.len() {
                    log(t, p, Actor::Master, EventKind::PhaseComplete, String::new());
                    if p + 1 < plan.phases.len() {
                        push(&mut queue, t + guard, p + 1, Step::SendCommand);
                    }
                }
            }
        }
    }
    let last = events.last().map(|e| e.time_ns).unwrap_or(0);
    Ok(EventLog { events, t_rep_ns: t_rep, round_duration_ns: grid_after(last.max(1)) })
}
