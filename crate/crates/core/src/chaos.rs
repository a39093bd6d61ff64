//! Fault injection: the event taxonomy, schedules, input perturbation
//! signals, PRBS generation and the shutdown-limit abort guard.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::Role;
use crate::plant::{LimitClass, PlantState, ProcessLimits};
use crate::scalar::Scalar;
use crate::sim::Simulation;

/// Default perturbation window: 24 h in minutes.
pub const DEFAULT_WINDOW_MIN: f64 = 1440.0;

/// Three-level step sequence around a nominal input:
/// `u0`, then `u0 + Δ` for one window, `u0 − Δ` for the next, then `u0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSequence<T> {
    pub u0: T,
    pub delta: T,
    pub t0: T,
    pub window: T,
}

impl<T: Scalar> PerturbationSequence<T> {
    pub fn new(u0: T, delta: T, t0: T, window: T) -> Result<Self> {
        if !(window > T::zero()) || !window.is_finite() {
            return Err(Error::Invalid("perturbation window must be positive".into()));
        }
        if !(u0.is_finite() && delta.is_finite() && t0.is_finite()) {
            return Err(Error::Invalid("perturbation parameters must be finite".into()));
        }
        Ok(Self { u0, delta, t0, window })
    }

    pub fn with_default_window(u0: T, delta: T, t0: T) -> Result<Self> {
        Self::new(u0, delta, t0, T::lit(DEFAULT_WINDOW_MIN))
    }

    pub fn eval(&self, t: T) -> T {
        let t1 = self.t0 + self.window;
        let t2 = t1 + self.window;
        if t < self.t0 {
            self.u0
        } else if t < t1 {
            self.u0 + self.delta
        } else if t < t2 {
            self.u0 - self.delta
        } else {
            self.u0
        }
    }

    /// `∫_a^b (u(t) − u0) dt`, evaluated piecewise.
    pub fn deviation_integral(&self, a: T, b: T) -> T {
        let t1 = self.t0 + self.window;
        let t2 = t1 + self.window;
        // a fully covered window contributes exactly `window`, so the two cancel
        let overlap = |lo: T, hi: T| {
            if a <= lo && b >= hi {
                self.window
            } else {
                (b.min(hi) - a.max(lo)).max(T::zero())
            }
        };
        self.delta * overlap(self.t0, t1) - self.delta * overlap(t1, t2)
    }
}

/// Feedback taps (1-based register positions) giving maximal-length
/// sequences for register widths 2 through 16.
pub fn prbs_taps(k: u32) -> Option<&'static [u32]> {
    Some(match k {
        2 => &[2, 1],
        3 => &[3, 2],
        4 => &[4, 3],
        5 => &[5, 3],
        6 => &[6, 5],
        7 => &[7, 6],
        8 => &[8, 6, 5, 4],
        9 => &[9, 5],
        10 => &[10, 7],
        11 => &[11, 9],
        12 => &[12, 11, 10, 4],
        13 => &[13, 12, 11, 8],
        14 => &[14, 13, 12, 2],
        15 => &[15, 14],
        16 => &[16, 15, 13, 4],
        _ => return None,
    })
}

/// Fibonacci LFSR mapped to a three-level signal through the two freshest
/// bits: `00 → 0`, `01 → +Δ`, `10 → −Δ`, `11 → 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrbsGenerator<T> {
    k: u32,
    taps: Vec<u32>,
    register: u32,
    delta: T,
}

impl<T: Scalar> PrbsGenerator<T> {
    pub fn new(k: u32, seed: u32, delta: T) -> Result<Self> {
        let taps = prbs_taps(k).ok_or_else(|| Error::Invalid(format!("no PRBS taps for register width {k}")))?;
        let register = seed & Self::mask(k);
        if register == 0 {
            return Err(Error::Invalid("PRBS seed must be non-zero in the low register bits".into()));
        }
        Ok(Self { k, taps: taps.to_vec(), register, delta })
    }

    pub fn with_default_width(seed: u32, delta: T) -> Result<Self> {
        Self::new(10, seed, delta)
    }

    fn mask(k: u32) -> u32 {
        ((1u64 << k) - 1) as u32
    }

    pub fn width(&self) -> u32 {
        self.k
    }

    pub fn register(&self) -> u32 {
        self.register
    }

    pub fn period(&self) -> u64 {
        (1u64 << self.k) - 1
    }

    /// Shifts one bit in and returns it.
    pub fn next_bit(&mut self) -> u32 {
        let fb = self.taps.iter().fold(0, |acc, &p| acc ^ ((self.register >> (p - 1)) & 1));
        self.register = ((self.register << 1) | fb) & Self::mask(self.k);
        fb
    }

    pub fn next_level(&mut self) -> T {
        let prev = self.register & 1;
        let new = self.next_bit();
        match (prev, new) {
            (0, 1) => self.delta,
            (1, 0) => -self.delta,
            _ => T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorFailure {
    StuckAtLast,
    Bias(f64),
    Silence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChaosEvent {
    TerminateNode { node: String, duration_min: f64 },
    OverloadNode { node: String, slowdown: f64, duration_min: f64 },
    /// Links are directed `[src, dst]` node-name pairs.
    InjectLatency { links: Vec<[String; 2]>, added_latency_min: f64, duration_min: f64 },
    InjectNetworkError { links: Vec<[String; 2]>, drop_prob: f64, duration_min: f64 },
    SubnetUnavailable { duration_min: f64 },
    /// With `checkpoint`, the integrator comes back at its value when the
    /// restart began rather than its configured initial value.
    RestartPlc { node: String, downtime_min: f64, #[serde(default)] checkpoint: bool },
    FailSensor { node: String, mode: SensorFailure, duration_min: f64 },
}

impl ChaosEvent {
    pub fn duration(&self) -> f64 {
        match self {
            ChaosEvent::TerminateNode { duration_min, .. }
            | ChaosEvent::OverloadNode { duration_min, .. }
            | ChaosEvent::InjectLatency { duration_min, .. }
            | ChaosEvent::InjectNetworkError { duration_min, .. }
            | ChaosEvent::SubnetUnavailable { duration_min }
            | ChaosEvent::FailSensor { duration_min, .. } => *duration_min,
            ChaosEvent::RestartPlc { downtime_min, .. } => *downtime_min,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ChaosEvent::TerminateNode { .. } => "terminate_node",
            ChaosEvent::OverloadNode { .. } => "overload_node",
            ChaosEvent::InjectLatency { .. } => "inject_latency",
            ChaosEvent::InjectNetworkError { .. } => "inject_network_error",
            ChaosEvent::SubnetUnavailable { .. } => "subnet_unavailable",
            ChaosEvent::RestartPlc { .. } => "restart_plc",
            ChaosEvent::FailSensor { .. } => "fail_sensor",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.duration();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Invalid(format!("{}: duration must be positive", self.kind())));
        }
        match self {
            ChaosEvent::OverloadNode { slowdown, .. } if !(*slowdown >= 1.0 && slowdown.is_finite()) => {
                Err(Error::Invalid("overload_node: slowdown must be at least 1".into()))
            }
            ChaosEvent::InjectLatency { added_latency_min, .. }
                if !(*added_latency_min >= 0.0 && added_latency_min.is_finite()) =>
            {
                Err(Error::Invalid("inject_latency: added latency must be finite and non-negative".into()))
            }
            ChaosEvent::InjectNetworkError { drop_prob, .. } if !(0.0..=1.0).contains(drop_prob) => {
                Err(Error::Invalid("inject_network_error: drop probability outside [0, 1]".into()))
            }
            ChaosEvent::FailSensor { mode: SensorFailure::Bias(b), .. } if !b.is_finite() => {
                Err(Error::Invalid("fail_sensor: bias must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Events with start times, stably sorted so equal starts keep list order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventSchedule {
    entries: Vec<(f64, ChaosEvent)>,
}

impl EventSchedule {
    pub fn new(mut entries: Vec<(f64, ChaosEvent)>) -> Result<Self> {
        for (start, e) in &entries {
            if !(*start >= 0.0) || !start.is_finite() {
                return Err(Error::Invalid(format!("{}: start time must be finite and non-negative", e.kind())));
            }
            e.validate()?;
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(f64, ChaosEvent)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortGuard {
    pub limits: ProcessLimits<f64>,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GuardOutcome {
    /// Carries the variables currently beyond their normal limits.
    Continue { normal_exceeded: Vec<String> },
    Abort { variable: String, value: f64, limit: f64, time: f64 },
}

/// Aborts on the first variable (in state order) past a shutdown limit.
/// Variables without a limits entry are not monitored.
pub fn guard_check(names: &[String], s: &PlantState<f64>, g: &AbortGuard) -> GuardOutcome {
    let mut normal_exceeded = Vec::new();
    for (name, &v) in names.iter().zip(&s.x) {
        let Some(lim) = g.limits.get(name) else { continue };
        match lim.classify(v) {
            LimitClass::ShutdownExceeded if g.enabled => {
                let limit = match (lim.shutdown_low, lim.shutdown_high) {
                    (Some(lo), _) if v < lo => lo,
                    (_, Some(hi)) => hi,
                    (lo, None) => lo.unwrap_or(f64::NAN),
                };
                return GuardOutcome::Abort { variable: name.clone(), value: v, limit, time: s.t };
            }
            LimitClass::Normal => {}
            _ => normal_exceeded.push(name.clone()),
        }
    }
    GuardOutcome::Continue { normal_exceeded }
}

/// One applied or reverted event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub time: f64,
    pub action: EventAction,
    pub index: usize,
    pub event: ChaosEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventAction {
    Apply,
    Revert,
}

fn resolve_links(sim: &Simulation, links: &[[String; 2]]) -> Result<Vec<usize>> {
    links
        .iter()
        .map(|[a, b]| {
            let src = sim.net.node_by_name(a).ok_or_else(|| Error::UnknownTarget(a.clone()))?;
            let dst = sim.net.node_by_name(b).ok_or_else(|| Error::UnknownTarget(b.clone()))?;
            sim.net.link_index(src, dst).ok_or_else(|| Error::UnknownTarget(format!("{a}->{b}")))
        })
        .collect()
}

/// Checks that every target named by the event exists with a fitting role.
pub fn check_targets(sim: &Simulation, e: &ChaosEvent) -> Result<()> {
    let node = |name: &str| sim.net.node_by_name(name).ok_or_else(|| Error::UnknownTarget(name.to_string()));
    match e {
        ChaosEvent::TerminateNode { node: n, .. } | ChaosEvent::OverloadNode { node: n, .. } => node(n).map(|_| ()),
        ChaosEvent::InjectLatency { links, .. } | ChaosEvent::InjectNetworkError { links, .. } => {
            resolve_links(sim, links).map(|_| ())
        }
        ChaosEvent::SubnetUnavailable { .. } => Ok(()),
        ChaosEvent::RestartPlc { node: n, .. } => {
            let id = node(n)?;
            sim.agent_of_controller(id)
                .map(|_| ())
                .ok_or_else(|| Error::UnknownTarget(format!("{n} is not an agent controller")))
        }
        ChaosEvent::FailSensor { node: n, .. } => {
            let id = node(n)?;
            if sim.net.node(id).role != Role::Sensor {
                return Err(Error::UnknownTarget(format!("{n} is not a sensor")));
            }
            Ok(())
        }
    }
}

/// Applies event number `id` to the simulation's network and devices.
pub fn apply_event(sim: &mut Simulation, id: u64, e: &ChaosEvent) -> Result<()> {
    check_targets(sim, e)?;
    let node = |sim: &Simulation, name: &str| sim.net.node_by_name(name).expect("checked");
    match e {
        ChaosEvent::TerminateNode { node: n, .. } => {
            let nid = node(sim, n);
            sim.net.set_node_down(nid, id, true);
        }
        ChaosEvent::OverloadNode { node: n, slowdown, .. } => {
            let nid = node(sim, n);
            sim.net.set_slowdown(nid, id, Some(*slowdown));
        }
        ChaosEvent::InjectLatency { links, added_latency_min, .. } => {
            for k in resolve_links(sim, links)? {
                sim.net.set_added_latency(k, id, Some(*added_latency_min));
            }
        }
        ChaosEvent::InjectNetworkError { links, drop_prob, .. } => {
            for k in resolve_links(sim, links)? {
                sim.net.set_added_drop(k, id, Some(*drop_prob));
            }
        }
        ChaosEvent::SubnetUnavailable { .. } => {
            let r = sim.net.router();
            sim.net.set_node_down(r, id, true);
        }
        ChaosEvent::RestartPlc { node: n, checkpoint, .. } => {
            let nid = node(sim, n);
            let j = sim.agent_of_controller(nid).expect("checked");
            let restore = if *checkpoint { sim.u[j] } else { sim.agents()[j].u0 };
            sim.restart_values.push((id, j, restore));
            sim.net.set_node_down(nid, id, true);
        }
        ChaosEvent::FailSensor { node: n, mode, .. } => {
            let nid = node(sim, n);
            sim.sensor_faults.push((id, nid, *mode));
        }
    }
    Ok(())
}

/// Undoes event number `id`; network parameters return bit-exactly.
pub fn revert_event(sim: &mut Simulation, id: u64, e: &ChaosEvent) -> Result<()> {
    check_targets(sim, e)?;
    let node = |sim: &Simulation, name: &str| sim.net.node_by_name(name).expect("checked");
    match e {
        ChaosEvent::TerminateNode { node: n, .. } => {
            let nid = node(sim, n);
            sim.net.set_node_down(nid, id, false);
        }
        ChaosEvent::OverloadNode { node: n, .. } => {
            let nid = node(sim, n);
            sim.net.set_slowdown(nid, id, None);
        }
        ChaosEvent::InjectLatency { links, .. } => {
            for k in resolve_links(sim, links)? {
                sim.net.set_added_latency(k, id, None);
            }
        }
        ChaosEvent::InjectNetworkError { links, .. } => {
            for k in resolve_links(sim, links)? {
                sim.net.set_added_drop(k, id, None);
            }
        }
        ChaosEvent::SubnetUnavailable { .. } => {
            let r = sim.net.router();
            sim.net.set_node_down(r, id, false);
        }
        ChaosEvent::RestartPlc { node: n, .. } => {
            let nid = node(sim, n);
            sim.net.set_node_down(nid, id, false);
            if let Some(pos) = sim.restart_values.iter().position(|&(e, _, _)| e == id) {
                let (_, j, value) = sim.restart_values.remove(pos);
                sim.u[j] = value;
            }
        }
        ChaosEvent::FailSensor { .. } => {
            sim.sensor_faults.retain(|&(e, _, _)| e != id);
        }
    }
    Ok(())
}
