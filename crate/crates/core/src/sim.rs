//! Fixed-step co-simulation of plant, network and DAPI controllers.
//!
//! Every step of length `dt` runs, in order: scheduled event reverts and
//! applications, sensor scans, delivery, controller forwarding and actuator
//! commands, a second delivery pass, sampling, the controller integrators
//! (forward Euler over zero-order-held values) and one RK4 plant step,
//! followed by the abort guard. Network latencies therefore round up to the
//! next step boundary.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chaos::{
    apply_event, check_targets, guard_check, AbortGuard, ChaosEvent, EventAction, EventLogEntry, EventSchedule,
    GuardOutcome, PerturbationSequence, PrbsGenerator, SensorFailure,
};
use crate::control::q_matrix;
use crate::error::{Error, Result};
use crate::netsim::{Lan, Link, LinkParams, MessageRecord, NetNode, Network, Payload, Role};
use crate::plant::{step, DisturbanceSignal, PlantModel, PlantState};
use crate::topology::{NodeId, Topology};

const STEP_EPS: f64 = 1e-9;

/// One DAPI agent: a controller with its own sensor and actuator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub controller: NodeId,
    pub sensor: NodeId,
    pub actuator: NodeId,
    /// Plant input driven by this agent.
    pub input: usize,
    /// Plant output channel this agent's sensor measures.
    pub output: usize,
    pub u0: f64,
    pub beta: f64,
    /// Gain `k_j` of the local bias feedback `β_j = β0_j − k_j·(x̂_j − r_j)`.
    pub feedback_gain: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputSignal {
    Steps(PerturbationSequence<f64>),
    /// Three-level PRBS, one level per `hold_min`, starting at `start_min`.
    Prbs { k: u32, seed: u32, delta: f64, start_min: f64, hold_min: f64 },
}

/// Additive perturbation of one plant input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPerturbation {
    pub input: usize,
    pub signal: InputSignal,
}

/// Everything a closed-loop run needs.
#[derive(Clone)]
pub struct SimSpec {
    pub plant: Arc<dyn PlantModel<f64>>,
    pub x0: Vec<f64>,
    /// Plant inputs before agent overrides and perturbations.
    pub base_inputs: Vec<f64>,
    pub disturbance: DisturbanceSignal<f64>,
    /// Agent communication graph; node `j + 1` is agent `j`.
    pub topology: Topology<f64>,
    pub local_gains: Vec<f64>,
    pub agents: Vec<AgentSpec>,
    pub nodes: Vec<NetNode>,
    pub links: Vec<Link>,
    pub historian: Option<NodeId>,
    pub dt: f64,
    pub sample_period: f64,
    pub scan_period: f64,
    pub guard: AbortGuard,
    pub perturbations: Vec<InputPerturbation>,
    pub seed: u64,
    pub log_messages: bool,
}

impl std::fmt::Debug for SimSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimSpec")
            .field("states", &self.plant.state_names())
            .field("agents", &self.agents.len())
            .field("nodes", &self.nodes.len())
            .field("dt", &self.dt)
            .finish()
    }
}

fn steps_per(period: f64, dt: f64, what: &str) -> Result<u64> {
    let r = period / dt;
    let n = r.round();
    if !(n >= 1.0) || (r - n).abs() > 1e-6 {
        return Err(Error::Invalid(format!("{what} ({period} min) must be a positive multiple of dt ({dt} min)")));
    }
    Ok(n as u64)
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        let p = &self.plant;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Invalid("dt must be positive".into()));
        }
        steps_per(self.sample_period, self.dt, "sample period")?;
        steps_per(self.scan_period, self.dt, "scan period")?;
        if self.x0.len() != p.state_dim() {
            return Err(Error::DimensionMismatch { expected: p.state_dim(), got: self.x0.len() });
        }
        if self.base_inputs.len() != p.input_dim() {
            return Err(Error::DimensionMismatch { expected: p.input_dim(), got: self.base_inputs.len() });
        }
        if self.disturbance.dim() != p.disturbance_dim() {
            return Err(Error::DimensionMismatch { expected: p.disturbance_dim(), got: self.disturbance.dim() });
        }
        let m = self.topology.node_count();
        if self.agents.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.agents.len() });
        }
        if self.local_gains.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.local_gains.len() });
        }
        let n_out = p.output_names().len();
        let n = self.nodes.len();
        let role = |id: NodeId| (id.0 >= 1 && id.0 <= n).then(|| self.nodes[id.index()].role);
        for a in &self.agents {
            if a.input >= p.input_dim() {
                return Err(Error::Invalid(format!("agent `{}` drives unknown input {}", a.name, a.input)));
            }
            if a.output >= n_out {
                return Err(Error::Invalid(format!("agent `{}` measures unknown output {}", a.name, a.output)));
            }
            if role(a.controller) != Some(Role::Controller) {
                return Err(Error::Invalid(format!("agent `{}`: controller node is not a controller", a.name)));
            }
            if role(a.sensor) != Some(Role::Sensor) {
                return Err(Error::Invalid(format!("agent `{}`: sensor node is not a sensor", a.name)));
            }
            if role(a.actuator) != Some(Role::Actuator) {
                return Err(Error::Invalid(format!("agent `{}`: actuator node is not an actuator", a.name)));
            }
            if ![a.u0, a.beta, a.feedback_gain, a.reference].iter().all(|v| v.is_finite()) {
                return Err(Error::Invalid(format!("agent `{}` has non-finite parameters", a.name)));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            for b in &self.agents[i + 1..] {
                if a.controller == b.controller || a.actuator == b.actuator || a.input == b.input {
                    return Err(Error::Invalid(format!(
                        "agents `{}` and `{}` share a controller, actuator or input",
                        a.name, b.name
                    )));
                }
                if a.sensor == b.sensor && a.output != b.output {
                    return Err(Error::Invalid(format!("agents `{}` and `{}` read one sensor on two channels", a.name, b.name)));
                }
            }
        }
        for pert in &self.perturbations {
            if pert.input >= p.input_dim() {
                return Err(Error::Invalid(format!("perturbation of unknown input {}", pert.input)));
            }
            if let InputSignal::Prbs { k, seed, hold_min, .. } = pert.signal {
                PrbsGenerator::new(k, seed, 0.0)?;
                steps_per(hold_min, self.dt, "PRBS hold")?;
            }
        }
        if let Some(h) = self.historian {
            if role(h) != Some(Role::Historian) {
                return Err(Error::Invalid("historian node is not a historian".into()));
            }
        }
        Ok(())
    }
}

/// Node indices of a [`star_network`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StarLayout {
    pub nodes: Vec<NetNode>,
    pub links: Vec<Link>,
    pub router: NodeId,
    pub historian: NodeId,
    pub hmi: NodeId,
    /// Per agent: `(sensor, controller, actuator)`.
    pub agents: Vec<(NodeId, NodeId, NodeId)>,
}

/// Two-LAN star: field devices in the process LAN reach the control room
/// through the router; controllers also talk to each other directly.
pub fn star_network(agent_names: &[String], params: LinkParams) -> StarLayout {
    let mut nodes = Vec::new();
    let mut add = |name: String, role, lan| {
        let id = NodeId::from_index(nodes.len());
        nodes.push(NetNode::new(id, name, role, lan));
        id
    };
    let router = add("router".into(), Role::Router, Lan::ControlRoom);
    let historian = add("historian".into(), Role::Historian, Lan::ControlRoom);
    let hmi = add("hmi".into(), Role::Hmi, Lan::ControlRoom);
    let agents: Vec<_> = agent_names
        .iter()
        .map(|a| {
            let s = add(format!("{a}_sensor"), Role::Sensor, Lan::ProcessOps);
            let c = add(format!("{a}_plc"), Role::Controller, Lan::ControlRoom);
            let x = add(format!("{a}_actuator"), Role::Actuator, Lan::ProcessOps);
            (s, c, x)
        })
        .collect();
    let mut links = Vec::new();
    let mut both = |a: NodeId, b: NodeId| {
        links.push(Link::new(a, b, params.clone()));
        links.push(Link::new(b, a, params.clone()));
    };
    both(router, historian);
    both(router, hmi);
    for &(s, c, x) in &agents {
        both(s, router);
        both(router, c);
        both(x, router);
    }
    for (i, &(_, a, _)) in agents.iter().enumerate() {
        for &(_, b, _) in &agents[i + 1..] {
            both(a, b);
        }
    }
    StarLayout { nodes, links, router, historian, hmi, agents }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// `(t, value)` pairs of a named column.
    pub fn series(&self, name: &str) -> Result<Vec<(f64, f64)>> {
        let c = self.column(name).ok_or_else(|| Error::UnknownVariable(name.to_string()))?;
        Ok(self.rows.iter().map(|r| (r[0], r[c])).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.rows.last().map(|r| r[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardAbort {
    pub variable: String,
    pub value: f64,
    pub limit: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Continue,
    Aborted(GuardAbort),
}

struct Scheduled {
    id: u64,
    start: f64,
    end: f64,
    event: ChaosEvent,
    applied: bool,
    reverted: bool,
}

struct PrbsState {
    gen: PrbsGenerator<f64>,
    level: f64,
    started: bool,
    hold_steps: u64,
    start: f64,
    next_k: u64,
}

/// A steppable closed-loop run. State is owned exclusively.
pub struct Simulation {
    spec: Arc<SimSpec>,
    pub(crate) net: Network,
    state: PlantState<f64>,
    k: u64,
    pub(crate) u: Vec<f64>,
    actuator_hold: Vec<f64>,
    inputs: Vec<f64>,
    pub(crate) sensor_faults: Vec<(u64, NodeId, SensorFailure)>,
    pub(crate) restart_values: Vec<(u64, usize, f64)>,
    sensor_last: BTreeMap<NodeId, f64>,
    sensors: Vec<(NodeId, usize, Vec<NodeId>)>,
    controller_agent: BTreeMap<NodeId, usize>,
    q: DMatrix<f64>,
    sample_every: u64,
    scan_every: u64,
    scheduled: Vec<Scheduled>,
    next_event_id: u64,
    event_log: Vec<EventLogEntry>,
    prbs: Vec<Option<PrbsState>>,
    trajectory: Trajectory,
    last_sampled_k: Option<u64>,
    aborted: Option<GuardAbort>,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation").field("t", &self.time()).field("u", &self.u).finish()
    }
}

impl Simulation {
    pub fn new(spec: Arc<SimSpec>) -> Result<Self> {
        spec.validate()?;
        let mut net = Network::new(spec.nodes.clone(), spec.links.clone(), spec.seed)?;
        net.set_logging(spec.log_messages);
        let q = q_matrix(&spec.topology, &spec.local_gains)?;

        let mut sensors: Vec<(NodeId, usize, Vec<NodeId>)> = Vec::new();
        for a in &spec.agents {
            match sensors.iter_mut().find(|(s, _, _)| *s == a.sensor) {
                Some(entry) => entry.2.push(a.controller),
                None => sensors.push((a.sensor, a.output, vec![a.controller])),
            }
        }
        let controller_agent = spec.agents.iter().enumerate().map(|(j, a)| (a.controller, j)).collect();

        let mut columns = vec!["t".to_string()];
        columns.extend(spec.plant.state_names().iter().cloned());
        columns.extend(spec.plant.input_names().iter().cloned());
        let has_flows = spec
            .plant
            .boundary_flows(&spec.x0, &spec.base_inputs, &spec.disturbance.at(0.0))
            .is_some();
        if has_flows {
            columns.extend(["throughput_rate", "input_feed_rate", "output_yield"].map(String::from));
        }
        for a in &spec.agents {
            columns.push(format!("{}_u", a.name));
            columns.push(format!("{}_seen", a.name));
            columns.push(format!("{}_staleness", a.name));
        }

        let prbs = spec
            .perturbations
            .iter()
            .map(|p| match p.signal {
                InputSignal::Prbs { k, seed, delta, start_min, hold_min } => Ok(Some(PrbsState {
                    gen: PrbsGenerator::new(k, seed, delta)?,
                    level: 0.0,
                    started: false,
                    hold_steps: steps_per(hold_min, spec.dt, "PRBS hold")?,
                    start: start_min,
                    next_k: 0,
                })),
                InputSignal::Steps(_) => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;

        let u: Vec<f64> = spec.agents.iter().map(|a| a.u0).collect();
        let mut inputs = spec.base_inputs.clone();
        for (j, a) in spec.agents.iter().enumerate() {
            inputs[a.input] = u[j];
        }
        Ok(Self {
            sample_every: steps_per(spec.sample_period, spec.dt, "sample period")?,
            scan_every: steps_per(spec.scan_period, spec.dt, "scan period")?,
            net,
            state: PlantState::new(0.0, spec.x0.clone()),
            k: 0,
            actuator_hold: u.clone(),
            u,
            inputs,
            sensor_faults: Vec::new(),
            restart_values: Vec::new(),
            sensor_last: BTreeMap::new(),
            sensors,
            controller_agent,
            q,
            scheduled: Vec::new(),
            next_event_id: 0,
            event_log: Vec::new(),
            prbs,
            trajectory: Trajectory::new(columns),
            last_sampled_k: None,
            aborted: None,
            spec,
        })
    }

    pub fn spec(&self) -> &SimSpec {
        &self.spec
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.spec.agents
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.spec.dt
    }

    pub fn state(&self) -> &PlantState<f64> {
        &self.state
    }

    pub fn integrators(&self) -> &[f64] {
        &self.u
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn event_log(&self) -> &[EventLogEntry] {
        &self.event_log
    }

    pub fn take_messages(&mut self) -> Vec<MessageRecord> {
        self.net.take_log()
    }

    pub fn aborted(&self) -> Option<&GuardAbort> {
        self.aborted.as_ref()
    }

    pub fn agent_of_controller(&self, id: NodeId) -> Option<usize> {
        self.controller_agent.get(&id).copied()
    }

    /// Adds the schedule with every start shifted by `offset` minutes.
    pub fn schedule(&mut self, schedule: &EventSchedule, offset: f64) -> Result<()> {
        for (start, e) in schedule.entries() {
            check_targets(self, e)?;
            let start = offset + start;
            self.scheduled.push(Scheduled {
                id: self.next_event_id,
                start,
                end: start + e.duration(),
                event: e.clone(),
                applied: false,
                reverted: false,
            });
            self.next_event_id += 1;
        }
        Ok(())
    }

    fn run_events(&mut self, t: f64) -> Result<()> {
        for i in 0..self.scheduled.len() {
            let s = &self.scheduled[i];
            if s.applied && !s.reverted && s.end <= t + STEP_EPS {
                let (id, e) = (s.id, s.event.clone());
                crate::chaos::revert_event(self, id, &e)?;
                self.scheduled[i].reverted = true;
                self.event_log.push(EventLogEntry { time: t, action: EventAction::Revert, index: id as usize, event: e });
            }
        }
        for i in 0..self.scheduled.len() {
            let s = &self.scheduled[i];
            if !s.applied && s.start <= t + STEP_EPS {
                let (id, e) = (s.id, s.event.clone());
                apply_event(self, id, &e)?;
                self.scheduled[i].applied = true;
                self.event_log.push(EventLogEntry { time: t, action: EventAction::Apply, index: id as usize, event: e });
            }
        }
        Ok(())
    }

    fn sensor_reading(&mut self, sensor: NodeId, true_value: f64) -> Option<f64> {
        let fault = self.sensor_faults.iter().rev().find(|(_, s, _)| *s == sensor).map(|f| f.2);
        let v = match fault {
            None => true_value,
            Some(SensorFailure::Bias(b)) => true_value + b,
            Some(SensorFailure::StuckAtLast) => {
                return Some(self.sensor_last.get(&sensor).copied().unwrap_or(true_value));
            }
            Some(SensorFailure::Silence) => return None,
        };
        self.sensor_last.insert(sensor, v);
        Some(v)
    }

    fn deliver(&mut self, t: f64) {
        for msg in self.net.deliver_due(t) {
            if let Payload::Command { target, value } = msg.payload {
                if let Some(j) = self.spec.agents.iter().position(|a| a.actuator == target) {
                    self.actuator_hold[j] = value;
                }
            }
        }
    }

    fn perturbation_offset(&mut self, idx: usize, t: f64) -> f64 {
        let k = self.k;
        match &self.spec.perturbations[idx].signal {
            InputSignal::Steps(p) => p.eval(t) - p.u0,
            InputSignal::Prbs { .. } => {
                let st = self.prbs[idx].as_mut().expect("prbs state");
                if t + STEP_EPS < st.start {
                    return 0.0;
                }
                if !st.started {
                    st.started = true;
                    st.next_k = k;
                }
                if k >= st.next_k {
                    st.level = st.gen.next_level();
                    st.next_k = k + st.hold_steps;
                }
                st.level
            }
        }
    }

    fn record(&mut self, t: f64, x: &[f64], inputs: &[f64], seen: &[Option<(f64, f64)>]) {
        let mut row = Vec::with_capacity(self.trajectory.columns.len());
        row.push(t);
        row.extend_from_slice(x);
        row.extend_from_slice(inputs);
        let d = self.spec.disturbance.at(t);
        if let Some(f) = self.spec.plant.boundary_flows(x, inputs, &d) {
            let y = if f.reactive_feed > 0.0 { f.product / f.reactive_feed } else { 0.0 };
            row.extend([f.product, f.total_feed, y]);
        }
        for (j, s) in seen.iter().enumerate() {
            row.push(self.u[j]);
            match s {
                Some((v, st)) => row.extend([*v, t - st]),
                None => row.extend([f64::NAN, f64::NAN]),
            }
        }
        self.trajectory.rows.push(row);
    }

    /// Advances one step of `dt`. After an abort or an error the
    /// simulation does not advance further.
    pub fn step(&mut self) -> Result<StepOutcome> {
        if let Some(a) = &self.aborted {
            return Ok(StepOutcome::Aborted(a.clone()));
        }
        let spec = Arc::clone(&self.spec);
        let t = self.time();
        let names = spec.plant.state_names();

        if self.k == 0 {
            if let GuardOutcome::Abort { variable, value, limit, time } = guard_check(names, &self.state, &spec.guard) {
                let x = self.state.x.clone();
                let inputs = self.inputs.clone();
                self.record(t, &x, &inputs, &vec![None; spec.agents.len()]);
                self.last_sampled_k = Some(0);
                let a = GuardAbort { variable, value, limit, time };
                self.aborted = Some(a.clone());
                return Ok(StepOutcome::Aborted(a));
            }
        }

        self.run_events(t)?;
        let scan = self.k.is_multiple_of(self.scan_every);
        let d = spec.disturbance.at(t);

        if scan {
            let y = spec.plant.output(&self.state.x, &self.inputs, &d);
            for i in 0..self.sensors.len() {
                let (sensor, channel) = (self.sensors[i].0, self.sensors[i].1);
                if !self.net.node(sensor).alive() {
                    continue;
                }
                let Some(v) = self.sensor_reading(sensor, y[channel]) else { continue };
                let payload = Payload::StateSample { node: sensor, value: v, sample_time: t };
                for c in self.sensors[i].2.clone() {
                    self.net.send(sensor, c, payload, t)?;
                }
                if let Some(h) = spec.historian {
                    self.net.send(sensor, h, payload, t)?;
                }
            }
        }
        self.deliver(t);

        let m = spec.agents.len();
        if scan {
            let a = spec.topology.adjacency();
            for (j, ag) in spec.agents.iter().enumerate() {
                if !self.net.node(ag.controller).alive() {
                    continue;
                }
                if let Some((v, st)) = self.net.last_known(ag.controller, ag.sensor) {
                    let payload = Payload::StateSample { node: ag.controller, value: v, sample_time: st };
                    for l in 0..m {
                        if l != j && a[(l, j)] > 0.0 {
                            self.net.send(ag.controller, spec.agents[l].controller, payload, t)?;
                        }
                    }
                }
                self.net.send(ag.controller, ag.actuator, Payload::Command { target: ag.actuator, value: self.u[j] }, t)?;
            }
        }
        self.deliver(t);

        let seen: Vec<Option<(f64, f64)>> =
            spec.agents.iter().map(|ag| self.net.last_known(ag.controller, ag.sensor)).collect();
        let mut inputs = spec.base_inputs.clone();
        for (j, ag) in spec.agents.iter().enumerate() {
            inputs[ag.input] = self.actuator_hold[j];
        }
        for i in 0..spec.perturbations.len() {
            let off = self.perturbation_offset(i, t);
            inputs[spec.perturbations[i].input] += off;
        }
        self.inputs = inputs.clone();

        if self.k.is_multiple_of(self.sample_every) {
            let x = self.state.x.clone();
            self.record(t, &x, &inputs, &seen);
            self.last_sampled_k = Some(self.k);
        }

        let a = spec.topology.adjacency();
        let mut du = vec![0.0; m];
        let mut active = vec![false; m];
        for (j, ag) in spec.agents.iter().enumerate() {
            if !self.net.node(ag.controller).alive() {
                continue;
            }
            let Some((xj, _)) = seen[j] else { continue };
            let mut acc = -self.q[(j, j)] * xj;
            let mut complete = true;
            for l in 0..m {
                if l == j || a[(j, l)] == 0.0 {
                    continue;
                }
                match self.net.last_known(ag.controller, spec.agents[l].controller) {
                    Some((xl, _)) => acc -= self.q[(j, l)] * xl,
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete {
                du[j] = acc + ag.beta - ag.feedback_gain * (xj - ag.reference);
                active[j] = true;
            }
        }

        let next = step(spec.plant.as_ref(), &self.state, &inputs, &spec.disturbance, spec.dt)?;
        for j in 0..m {
            if active[j] {
                self.u[j] += spec.dt * du[j];
            }
        }
        self.k += 1;
        self.state = PlantState::new(self.time(), next.x);

        if let GuardOutcome::Abort { variable, value, limit, .. } = guard_check(names, &self.state, &spec.guard) {
            let t_new = self.time();
            let x = self.state.x.clone();
            self.record(t_new, &x, &inputs, &seen);
            self.last_sampled_k = Some(self.k);
            let a = GuardAbort { variable, value, limit, time: t_new };
            self.aborted = Some(a.clone());
            return Ok(StepOutcome::Aborted(a));
        }
        Ok(StepOutcome::Continue)
    }

    /// Steps until `t_end` (inclusive of the sample at `t_end`).
    pub fn run_until(&mut self, t_end: f64) -> Result<StepOutcome> {
        while self.time() < t_end - STEP_EPS {
            if let StepOutcome::Aborted(a) = self.step()? {
                return Ok(StepOutcome::Aborted(a));
            }
        }
        if let Some(a) = &self.aborted {
            return Ok(StepOutcome::Aborted(a.clone()));
        }
        Ok(StepOutcome::Continue)
    }

    /// Records the current instant if the last row is older.
    pub fn finish(&mut self) {
        if self.aborted.is_some() || self.last_sampled_k == Some(self.k) {
            return;
        }
        let t = self.time();
        let seen: Vec<_> = self.spec.agents.iter().map(|ag| self.net.last_known(ag.controller, ag.sensor)).collect();
        let (x, inputs) = (self.state.x.clone(), self.inputs.clone());
        self.record(t, &x, &inputs, &seen);
        self.last_sampled_k = Some(self.k);
    }
}

/// Runs a spec from `t = 0` to `t_end` with an optional schedule.
pub fn simulate_closed_loop(
    spec: SimSpec,
    schedule: &EventSchedule,
    t_end: f64,
) -> Result<(Trajectory, Vec<EventLogEntry>, Option<GuardAbort>)> {
    let mut sim = Simulation::new(Arc::new(spec))?;
    sim.schedule(schedule, 0.0)?;
    let out = sim.run_until(t_end)?;
    sim.finish();
    let abort = match out {
        StepOutcome::Aborted(a) => Some(a),
        StepOutcome::Continue => None,
    };
    Ok((sim.trajectory.clone(), sim.event_log.clone(), abort))
}
