//! Experiment configuration: TOML schema, validation with key paths,
//! construction of an [`ExperimentSpec`], hashing, sweeps and the built-in
//! TEC demo.
//!
//! All times are minutes. Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chaos::{AbortGuard, ChaosEvent, EventSchedule, PerturbationSequence, SensorFailure, DEFAULT_WINDOW_MIN};
use crate::control::{default_local_gains, solve_setpoints_with, verify_optimality, DisutilityFunction, SolverOptions};
use crate::error::{Error, Result};
use crate::experiment::{ExperimentSpec, Hypothesis, SetpointReport, SteadyStateSpec};
use crate::netsim::{Lan, Link, LinkParams, NetNode, Network, Role};
use crate::plant::{
    DisturbanceSignal, EquilibriumParams, LinearIntegratorPlant, PlantModel, ProcessLimits, TecParams, TecSurrogate,
    VariableLimits,
};
use crate::sim::{AgentSpec, InputPerturbation, InputSignal, SimSpec};
use crate::topology::{NodeId, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub run: RunSection,
    pub topology: TopologySection,
    pub plant: PlantSection,
    pub agents: Vec<AgentSection>,
    pub network: NetworkSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disutilities: Option<DisutilitySection>,
    pub steady_state: SteadySection,
    pub hypothesis: HypothesisSection,
    #[serde(default)]
    pub guard: GuardSection,
    #[serde(default)]
    pub events: Vec<EventSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_name")]
    pub name: String,
    /// Run length after the injection instant.
    pub duration_min: f64,
    #[serde(default = "default_dt")]
    pub dt_min: f64,
    #[serde(default = "default_sample")]
    pub sample_period_min: f64,
    pub seed: u64,
    pub settle_limit_min: f64,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_dt() -> f64 {
    0.05
}

fn default_sample() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub nodes: Vec<NodeSection>,
    /// Agent communication edges; `listener` receives `source`'s state.
    #[serde(default)]
    pub agent_edges: Vec<AgentEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    pub name: String,
    pub role: Role,
    pub lan: Lan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEdge {
    pub listener: String,
    pub source: String,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    TecSurrogate,
    LinearIntegrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub model: PlantKind,
    /// Number of states of the linear integrator plant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_constant_min: Option<f64>,
    /// Overrides the model's nominal inputs as the base input vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal_inputs: Option<Vec<f64>>,
    /// Defaults to the model equilibrium.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tec: Option<TecParams<f64>>,
    #[serde(default)]
    pub disturbance: Vec<DisturbanceStep>,
    #[serde(default)]
    pub perturbations: Vec<PerturbationSection>,
    #[serde(default)]
    pub limits: BTreeMap<String, LimitSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceStep {
    pub start_min: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Steps,
    Prbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    pub input: String,
    pub signal: SignalKind,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub register_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub register_seed: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold_min: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shutdown_low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shutdown_high: Option<f64>,
}

impl From<LimitSection> for VariableLimits<f64> {
    fn from(l: LimitSection) -> Self {
        VariableLimits {
            normal_low: l.normal_low,
            normal_high: l.normal_high,
            shutdown_low: l.shutdown_low,
            shutdown_high: l.shutdown_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub name: String,
    pub controller: String,
    pub sensor: String,
    pub actuator: String,
    pub input: String,
    pub output: String,
    /// Initial integrator value; defaults to the optimal setpoint when
    /// disutilities are given, else the nominal input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<f64>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub feedback_gain: f64,
    #[serde(default)]
    pub reference: f64,
    /// Overrides `C_j` (default: the agent's weighted in-degree).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Defaults to `dt_min`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_period_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub historian: Option<String>,
    #[serde(default = "yes")]
    pub log_messages: bool,
    pub links: Vec<LinkSection>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub a: String,
    pub b: String,
    #[serde(default)]
    pub latency_min: f64,
    #[serde(default)]
    pub jitter_min: f64,
    #[serde(default)]
    pub drop_prob: f64,
    /// Only `a → b` when set; otherwise both directions.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisutilitySection {
    pub demand: f64,
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default = "default_barrier")]
    pub barrier_weight: f64,
    /// Diagonal of `D`; defaults to ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Keyed by agent name.
    pub functions: BTreeMap<String, FunctionSection>,
}

fn default_barrier() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSection {
    pub reference: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteadySection {
    pub metric: String,
    pub window_min: f64,
    pub band: f64,
    pub hold_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisSection {
    pub metric: String,
    pub low: f64,
    pub high: f64,
    pub horizon_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardSection {
    #[serde(default = "yes")]
    pub enabled: bool,
}

impl Default for GuardSection {
    fn default() -> Self {
        Self { enabled: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TerminateNode,
    OverloadNode,
    InjectLatency,
    InjectNetworkError,
    SubnetUnavailable,
    RestartPlc,
    FailSensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorMode {
    StuckAtLast,
    Bias,
    Silence,
}

/// Flat event record; which keys are required depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSection {
    pub kind: EventKind,
    /// Minutes after the injection instant.
    pub start_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downtime_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slowdown: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<[String; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub added_latency_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<SensorMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<bool>,
}

impl EventSection {
    fn bare(kind: EventKind, start_min: f64) -> Self {
        Self {
            kind,
            start_min,
            duration_min: None,
            downtime_min: None,
            node: None,
            slowdown: None,
            links: None,
            added_latency_min: None,
            drop_prob: None,
            mode: None,
            bias: None,
            checkpoint: None,
        }
    }

    /// Converts to a [`ChaosEvent`]; errors name the missing or stray key.
    pub fn to_event(&self) -> std::result::Result<ChaosEvent, (String, String)> {
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| (key.to_string(), "required for this kind".to_string()));
        let node = || self.node.clone().ok_or_else(|| ("node".to_string(), "required for this kind".to_string()));
        let links = || self.links.clone().ok_or_else(|| ("links".to_string(), "required for this kind".to_string()));
        let dur = || need(self.duration_min, "duration_min");
        let allowed: &[&str] = match self.kind {
            EventKind::TerminateNode => &["duration_min", "node"],
            EventKind::OverloadNode => &["duration_min", "node", "slowdown"],
            EventKind::InjectLatency => &["duration_min", "links", "added_latency_min"],
            EventKind::InjectNetworkError => &["duration_min", "links", "drop_prob"],
            EventKind::SubnetUnavailable => &["duration_min"],
            EventKind::RestartPlc => &["downtime_min", "node", "checkpoint"],
            EventKind::FailSensor => &["duration_min", "node", "mode", "bias"],
        };
        let present = [
            ("duration_min", self.duration_min.is_some()),
            ("downtime_min", self.downtime_min.is_some()),
            ("node", self.node.is_some()),
            ("slowdown", self.slowdown.is_some()),
            ("links", self.links.is_some()),
            ("added_latency_min", self.added_latency_min.is_some()),
            ("drop_prob", self.drop_prob.is_some()),
            ("mode", self.mode.is_some()),
            ("bias", self.bias.is_some()),
            ("checkpoint", self.checkpoint.is_some()),
        ];
        if let Some((k, _)) = present.iter().find(|(k, p)| *p && !allowed.contains(k)) {
            return Err((k.to_string(), "not used by this kind".into()));
        }
        Ok(match self.kind {
            EventKind::TerminateNode => ChaosEvent::TerminateNode { node: node()?, duration_min: dur()? },
            EventKind::OverloadNode => ChaosEvent::OverloadNode {
                node: node()?,
                slowdown: need(self.slowdown, "slowdown")?,
                duration_min: dur()?,
            },
            EventKind::InjectLatency => ChaosEvent::InjectLatency {
                links: links()?,
                added_latency_min: need(self.added_latency_min, "added_latency_min")?,
                duration_min: dur()?,
            },
            EventKind::InjectNetworkError => ChaosEvent::InjectNetworkError {
                links: links()?,
                drop_prob: need(self.drop_prob, "drop_prob")?,
                duration_min: dur()?,
            },
            EventKind::SubnetUnavailable => ChaosEvent::SubnetUnavailable { duration_min: dur()? },
            EventKind::RestartPlc => ChaosEvent::RestartPlc {
                node: node()?,
                downtime_min: need(self.downtime_min, "downtime_min")?,
                checkpoint: self.checkpoint.unwrap_or(false),
            },
            EventKind::FailSensor => {
                let mode = match self.mode.ok_or_else(|| ("mode".to_string(), "required for this kind".to_string()))? {
                    SensorMode::StuckAtLast => SensorFailure::StuckAtLast,
                    SensorMode::Silence => SensorFailure::Silence,
                    SensorMode::Bias => SensorFailure::Bias(need(self.bias, "bias")?),
                };
                if self.bias.is_some() && self.mode != Some(SensorMode::Bias) {
                    return Err(("bias".into(), "only used with mode = \"bias\"".into()));
                }
                ChaosEvent::FailSensor { node: node()?, mode, duration_min: dur()? }
            }
        })
    }
}

/// A validation finding with the offending key path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn issues_error(issues: &[ConfigIssue]) -> Error {
    Error::Config(issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))
}

impl ConfigFile {
    /// Parses TOML. Structural errors carry the key path, e.g.
    /// `network.links[0].latencey_min`.
    pub fn from_toml_str(s: &str) -> std::result::Result<Self, ConfigIssue> {
        let de = toml::Deserializer::parse(s).map_err(|e| ConfigIssue { path: "<document>".into(), message: e.to_string() })?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().trim().to_string();
            ConfigIssue { path, message }
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|i| issues_error(&[i]))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Every invariant violation, each with its section/key path.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        match self.build_inner() {
            Ok(_) => Vec::new(),
            Err(Built::Issues(v)) => v,
            Err(Built::Fatal(e)) => vec![ConfigIssue { path: "<config>".into(), message: e.to_string() }],
        }
    }

    pub fn build(&self) -> Result<ExperimentSpec> {
        match self.build_inner() {
            Ok(spec) => Ok(spec),
            Err(Built::Issues(v)) => Err(issues_error(&v)),
            Err(Built::Fatal(e)) => Err(e),
        }
    }

    fn build_inner(&self) -> std::result::Result<ExperimentSpec, Built> {
        let mut issues = Vec::new();
        let mut issue = |path: String, message: String| issues.push(ConfigIssue { path, message });
        let pos = |v: f64| v > 0.0 && v.is_finite();

        let r = &self.run;
        if !pos(r.duration_min) {
            issue("run.duration_min".into(), "must be positive".into());
        }
        if !pos(r.dt_min) {
            issue("run.dt_min".into(), "must be positive".into());
        }
        if !pos(r.sample_period_min) {
            issue("run.sample_period_min".into(), "must be positive".into());
        }
        if !pos(r.settle_limit_min) {
            issue("run.settle_limit_min".into(), "must be positive".into());
        }

        // plant
        let plant: Arc<dyn PlantModel<f64>> = match self.plant.model {
            PlantKind::TecSurrogate => {
                if self.plant.states.is_some() {
                    issue("plant.states".into(), "only used by the linear integrator".into());
                }
                if self.plant.time_constant_min.is_some() {
                    issue("plant.time_constant_min".into(), "only used by the linear integrator".into());
                }
                Arc::new(TecSurrogate::new(self.plant.tec.clone().unwrap_or_default()))
            }
            PlantKind::LinearIntegrator => {
                if self.plant.tec.is_some() {
                    issue("plant.tec".into(), "only used by the TEC surrogate".into());
                }
                let m = self.plant.states.unwrap_or(self.agents.len());
                let tau = self.plant.time_constant_min.unwrap_or(1.0);
                if !pos(tau) {
                    issue("plant.time_constant_min".into(), "must be positive".into());
                }
                Arc::new(LinearIntegratorPlant::with_time_constant(m, tau))
            }
        };
        let states = plant.state_names().to_vec();
        let input_names = plant.input_names().to_vec();
        let output_names = plant.output_names().to_vec();

        let model_nominal = match self.plant.model {
            PlantKind::TecSurrogate => self.plant.tec.clone().unwrap_or_default().nominal_inputs.to_vec(),
            PlantKind::LinearIntegrator => vec![0.0; input_names.len()],
        };
        let base_inputs = self.plant.nominal_inputs.clone().unwrap_or(model_nominal);
        if base_inputs.len() != input_names.len() {
            issue("plant.nominal_inputs".into(), format!("expected {} values", input_names.len()));
        }
        let x0 = match (&self.plant.initial_state, self.plant.model) {
            (Some(x), _) => x.clone(),
            (None, PlantKind::TecSurrogate) => TecSurrogate::new(self.plant.tec.clone().unwrap_or_default()).equilibrium_state(),
            (None, PlantKind::LinearIntegrator) => vec![0.0; states.len()],
        };
        if x0.len() != states.len() {
            issue("plant.initial_state".into(), format!("expected {} values", states.len()));
        }
        let mut breakpoints = Vec::new();
        for (i, d) in self.plant.disturbance.iter().enumerate() {
            if d.values.len() != plant.disturbance_dim() {
                issue(format!("plant.disturbance[{i}].values"), format!("expected {} values", plant.disturbance_dim()));
            }
            if i > 0 && !(d.start_min > self.plant.disturbance[i - 1].start_min) {
                issue(format!("plant.disturbance[{i}].start_min"), "must increase".into());
            }
            breakpoints.push((d.start_min, d.values.clone()));
        }
        let mut limits = Vec::new();
        for (name, lim) in &self.plant.limits {
            if !states.contains(name) {
                issue(format!("plant.limits.{name}"), format!("not a state of the plant (states: {})", states.join(", ")));
            }
            let vl: VariableLimits<f64> = (*lim).into();
            for (a, b) in vl.ordering_violations() {
                issue(format!("plant.limits.{name}"), format!("{a} exceeds {b}"));
            }
            limits.push((name.clone(), vl));
        }
        let input_index = |name: &str| input_names.iter().position(|n| n == name);
        let mut perturbations = Vec::new();
        for (i, p) in self.plant.perturbations.iter().enumerate() {
            let path = format!("plant.perturbations[{i}]");
            let Some(input) = input_index(&p.input) else {
                issue(format!("{path}.input"), format!("unknown input `{}`", p.input));
                continue;
            };
            let signal = match p.signal {
                SignalKind::Steps => {
                    let u0 = base_inputs.get(input).copied().unwrap_or(0.0);
                    let Some(t0) = p.t0_min else {
                        issue(format!("{path}.t0_min"), "required for steps".into());
                        continue;
                    };
                    match PerturbationSequence::new(u0, p.delta, t0, p.window_min.unwrap_or(DEFAULT_WINDOW_MIN)) {
                        Ok(s) => InputSignal::Steps(s),
                        Err(e) => {
                            issue(format!("{path}.window_min"), e.to_string());
                            continue;
                        }
                    }
                }
                SignalKind::Prbs => InputSignal::Prbs {
                    k: p.register_bits.unwrap_or(10),
                    seed: p.register_seed.unwrap_or(1),
                    delta: p.delta,
                    start_min: p.start_min.unwrap_or(0.0),
                    hold_min: p.hold_min.unwrap_or(r.dt_min),
                },
            };
            perturbations.push(InputPerturbation { input, signal });
        }

        // network nodes and links
        let mut nodes = Vec::new();
        for (i, n) in self.topology.nodes.iter().enumerate() {
            if self.topology.nodes[..i].iter().any(|o| o.name == n.name) {
                issue(format!("topology.nodes[{i}].name"), format!("duplicate node `{}`", n.name));
            }
            nodes.push(NetNode::new(NodeId::from_index(i), n.name.clone(), n.role, n.lan));
        }
        let node_id = |name: &str| self.topology.nodes.iter().position(|n| n.name == name).map(NodeId::from_index);
        let routers = self.topology.nodes.iter().filter(|n| n.role == Role::Router).count();
        if routers != 1 {
            issue("topology.nodes".into(), format!("exactly one router required, found {routers}"));
        }
        let mut links = Vec::new();
        for (i, l) in self.network.links.iter().enumerate() {
            let path = format!("network.links[{i}]");
            let (a, b) = (node_id(&l.a), node_id(&l.b));
            if a.is_none() {
                issue(format!("{path}.a"), format!("unknown node `{}`", l.a));
            }
            if b.is_none() {
                issue(format!("{path}.b"), format!("unknown node `{}`", l.b));
            }
            if !(l.latency_min >= 0.0 && l.latency_min.is_finite()) {
                issue(format!("{path}.latency_min"), "must be finite and non-negative".into());
            }
            if !(l.jitter_min >= 0.0 && l.jitter_min.is_finite()) {
                issue(format!("{path}.jitter_min"), "must be finite and non-negative".into());
            }
            if !(0.0..=1.0).contains(&l.drop_prob) {
                issue(format!("{path}.drop_prob"), "must lie in [0, 1]".into());
            }
            if let (Some(a), Some(b)) = (a, b) {
                if a == b {
                    issue(path.clone(), "link joins a node to itself".into());
                    continue;
                }
                let (na, nb) = (&self.topology.nodes[a.index()], &self.topology.nodes[b.index()]);
                if na.lan != nb.lan && na.role != Role::Router && nb.role != Role::Router {
                    issue(path.clone(), format!("`{}` and `{}` are on different LANs; cross-LAN links must end at the router", l.a, l.b));
                }
                let params = LinkParams { base_latency: l.latency_min, jitter: l.jitter_min, drop_prob: l.drop_prob };
                links.push(Link::new(a, b, params.clone()));
                if !l.directed {
                    links.push(Link::new(b, a, params));
                }
            }
        }
        let historian = match &self.network.historian {
            Some(h) => match node_id(h) {
                Some(id) if self.topology.nodes[id.index()].role == Role::Historian => Some(id),
                _ => {
                    issue("network.historian".into(), format!("`{h}` is not a historian node"));
                    None
                }
            },
            None => None,
        };
        let scan = self.network.scan_period_min.unwrap_or(r.dt_min);

        // agents
        let m = self.agents.len();
        if m == 0 {
            issue("agents".into(), "at least one agent is required".into());
        }
        let mut agents = Vec::new();
        let role_of = |id: NodeId| self.topology.nodes[id.index()].role;
        for (j, a) in self.agents.iter().enumerate() {
            let path = format!("agents[{j}]");
            if self.agents[..j].iter().any(|o| o.name == a.name) {
                issue(format!("{path}.name"), format!("duplicate agent `{}`", a.name));
            }
            let mut lookup = |key: &str, name: &str, role: Role| match node_id(name) {
                Some(id) if role_of(id) == role => Some(id),
                Some(_) => {
                    issue(format!("{path}.{key}"), format!("`{name}` is not a {role:?} node").to_lowercase());
                    None
                }
                None => {
                    issue(format!("{path}.{key}"), format!("unknown node `{name}`"));
                    None
                }
            };
            let controller = lookup("controller", &a.controller, Role::Controller);
            let sensor = lookup("sensor", &a.sensor, Role::Sensor);
            let actuator = lookup("actuator", &a.actuator, Role::Actuator);
            let input = input_index(&a.input);
            if input.is_none() {
                issue(format!("{path}.input"), format!("unknown input `{}` (inputs: {})", a.input, input_names.join(", ")));
            }
            let output = output_names.iter().position(|n| *n == a.output);
            if output.is_none() {
                issue(format!("{path}.output"), format!("unknown output `{}` (outputs: {})", a.output, output_names.join(", ")));
            }
            if let (Some(controller), Some(sensor), Some(actuator), Some(input), Some(output)) =
                (controller, sensor, actuator, input, output)
            {
                agents.push(AgentSpec {
                    name: a.name.clone(),
                    controller,
                    sensor,
                    actuator,
                    input,
                    output,
                    u0: a.u0.unwrap_or_else(|| base_inputs.get(input).copied().unwrap_or(0.0)),
                    beta: a.beta,
                    feedback_gain: a.feedback_gain,
                    reference: a.reference,
                });
            }
        }
        for (i, a) in agents.iter().enumerate() {
            for b in &agents[i + 1..] {
                if a.controller == b.controller {
                    issue("agents".into(), format!("`{}` and `{}` share a controller", a.name, b.name));
                }
                if a.actuator == b.actuator {
                    issue("agents".into(), format!("`{}` and `{}` share an actuator", a.name, b.name));
                }
                if a.input == b.input {
                    issue("agents".into(), format!("`{}` and `{}` drive the same input", a.name, b.name));
                }
            }
        }
        let agent_index = |name: &str| self.agents.iter().position(|a| a.name == name);
        let mut edges = Vec::new();
        for (i, e) in self.topology.agent_edges.iter().enumerate() {
            let path = format!("topology.agent_edges[{i}]");
            let (l, s) = (agent_index(&e.listener), agent_index(&e.source));
            if l.is_none() {
                issue(format!("{path}.listener"), format!("unknown agent `{}`", e.listener));
            }
            if s.is_none() {
                issue(format!("{path}.source"), format!("unknown agent `{}`", e.source));
            }
            if !pos(e.weight) {
                issue(format!("{path}.weight"), "must be positive".into());
            }
            if let (Some(l), Some(s)) = (l, s) {
                if l == s {
                    issue(path, "self loops are not allowed".into());
                } else {
                    edges.push((NodeId::from_index(l), NodeId::from_index(s), e.weight));
                }
            }
        }

        // steady state, hypothesis, events
        let steady = SteadyStateSpec {
            metric: self.steady_state.metric.clone(),
            window_min: self.steady_state.window_min,
            band: self.steady_state.band,
            hold_min: self.steady_state.hold_min,
        };
        if let Err(e) = steady.validate() {
            issue("steady_state".into(), e.to_string());
        }
        let hypothesis = Hypothesis {
            metric: self.hypothesis.metric.clone(),
            low: self.hypothesis.low,
            high: self.hypothesis.high,
            horizon_min: self.hypothesis.horizon_min,
        };
        if let Err(e) = hypothesis.validate() {
            issue("hypothesis".into(), e.to_string());
        }
        if !(r.duration_min >= hypothesis.horizon_min) {
            issue("run.duration_min".into(), "must be at least hypothesis.horizon_min".into());
        }
        if !(r.settle_limit_min >= steady.hold_min) {
            issue("run.settle_limit_min".into(), "must be at least steady_state.hold_min".into());
        }
        let mut metrics: Vec<String> = states.clone();
        metrics.extend(input_names.iter().cloned());
        if matches!(self.plant.model, PlantKind::TecSurrogate) {
            metrics.extend(["throughput_rate", "input_feed_rate", "output_yield"].map(String::from));
        }
        for a in &self.agents {
            metrics.push(format!("{}_u", a.name));
            metrics.push(format!("{}_seen", a.name));
        }
        for (path, metric) in [("steady_state.metric", &steady.metric), ("hypothesis.metric", &hypothesis.metric)] {
            if !metrics.contains(metric) {
                issue(path.into(), format!("unknown metric `{metric}`"));
            }
        }
        let mut entries = Vec::new();
        for (i, e) in self.events.iter().enumerate() {
            let path = format!("events[{i}]");
            if !(e.start_min >= 0.0 && e.start_min.is_finite()) {
                issue(format!("{path}.start_min"), "must be finite and non-negative".into());
            }
            match e.to_event() {
                Ok(ev) => {
                    if let Err(err) = ev.validate() {
                        issue(path.clone(), err.to_string());
                    }
                    let mut unknown = |name: &str, key: &str| {
                        if node_id(name).is_none() {
                            issue(format!("{path}.{key}"), format!("unknown node `{name}`"));
                        }
                    };
                    match &ev {
                        ChaosEvent::TerminateNode { node, .. }
                        | ChaosEvent::OverloadNode { node, .. }
                        | ChaosEvent::RestartPlc { node, .. }
                        | ChaosEvent::FailSensor { node, .. } => unknown(node, "node"),
                        ChaosEvent::InjectLatency { links: ls, .. } | ChaosEvent::InjectNetworkError { links: ls, .. } => {
                            for [a, b] in ls {
                                unknown(a, "links");
                                unknown(b, "links");
                            }
                        }
                        ChaosEvent::SubnetUnavailable { .. } => {}
                    }
                    entries.push((e.start_min, ev));
                }
                Err((key, msg)) => issue(format!("{path}.{key}"), msg),
            }
        }

        if !issues.is_empty() {
            return Err(Built::Issues(issues));
        }

        // everything below may still fail on cross-cutting invariants
        let fatal = Built::Fatal;
        let topology = Topology::from_edges(m, &edges).map_err(fatal)?;
        let mut local_gains = default_local_gains(&topology);
        for (j, a) in self.agents.iter().enumerate() {
            if let Some(c) = a.local_gain {
                local_gains[j] = c;
            }
        }
        let mut setpoints = None;
        if let Some(ds) = &self.disutilities {
            let mut fns = Vec::new();
            for a in &self.agents {
                let Some(f) = ds.functions.get(&a.name) else {
                    return Err(Built::Issues(vec![ConfigIssue {
                        path: format!("disutilities.functions.{}", a.name),
                        message: "missing disutility for agent".into(),
                    }]));
                };
                let z = DisutilityFunction::boxed(
                    f.reference,
                    f.alpha,
                    f.low.unwrap_or(f64::NEG_INFINITY),
                    f.high.unwrap_or(f64::INFINITY),
                    ds.barrier_weight,
                );
                z.validate().map_err(|e| {
                    Built::Issues(vec![ConfigIssue { path: format!("disutilities.functions.{}", a.name), message: e.to_string() }])
                })?;
                fns.push(z);
            }
            for name in ds.functions.keys() {
                if agent_index(name).is_none() {
                    return Err(Built::Issues(vec![ConfigIssue {
                        path: format!("disutilities.functions.{name}"),
                        message: "no agent with this name".into(),
                    }]));
                }
            }
            let sol = solve_setpoints_with(&fns, ds.demand, &SolverOptions::for_scalar::<f64>()).map_err(fatal)?;
            let weights = ds.weights.clone().unwrap_or_else(|| vec![1.0; m]);
            let p = EquilibriumParams { gamma: ds.gamma, d: ds.demand };
            let report = match verify_optimality(&topology, &weights, &sol, &p, &fns) {
                Ok(c) => SetpointReport {
                    u_h: sol.u_h.clone(),
                    nu: sol.nu,
                    balance_residual: sol.balance_residual,
                    residual_5a: c.residual_5a,
                    residual_5b: c.residual_5b,
                    certified: c.passes(),
                },
                Err(Error::ConditionViolated(_)) => SetpointReport {
                    u_h: sol.u_h.clone(),
                    nu: sol.nu,
                    balance_residual: sol.balance_residual,
                    residual_5a: f64::NAN,
                    residual_5b: f64::NAN,
                    certified: false,
                },
                Err(e) => return Err(fatal(e)),
            };
            for (j, a) in self.agents.iter().enumerate() {
                if a.u0.is_none() {
                    agents[j].u0 = sol.u_h[j];
                }
            }
            setpoints = Some(report);
        }

        let limits = ProcessLimits::new(limits).map_err(fatal)?;
        let disturbance = DisturbanceSignal::new(plant.disturbance_dim(), breakpoints).map_err(fatal)?;
        let sim = SimSpec {
            plant,
            x0,
            base_inputs,
            disturbance,
            topology,
            local_gains,
            agents,
            nodes: nodes.clone(),
            links: links.clone(),
            historian,
            dt: r.dt_min,
            sample_period: r.sample_period_min,
            scan_period: scan,
            guard: AbortGuard { limits, enabled: self.guard.enabled },
            perturbations,
            seed: r.seed,
            log_messages: self.network.log_messages,
        };
        sim.validate().map_err(fatal)?;
        Network::new(nodes, links, r.seed).map_err(fatal)?;
        let schedule = EventSchedule::new(entries).map_err(fatal)?;
        let spec = ExperimentSpec {
            name: r.name.clone(),
            sim,
            steady,
            hypothesis,
            schedule,
            duration_min: r.duration_min,
            settle_limit_min: r.settle_limit_min,
            config_hash: self.hash(),
            setpoints,
        };
        spec.validate().map_err(fatal)?;
        Ok(spec)
    }
}

enum Built {
    Issues(Vec<ConfigIssue>),
    Fatal(Error),
}

/// Parses and fully validates a config text.
pub fn validate_str(s: &str) -> Vec<ConfigIssue> {
    match ConfigFile::from_toml_str(s) {
        Ok(c) => c.validate(),
        Err(i) => vec![i],
    }
}

/// Replaces the numeric value at a dotted path (`events.0.added_latency_min`).
/// The key must already exist and hold a number.
pub fn patch_value(doc: &toml::Value, path: &str, value: f64) -> Result<toml::Value> {
    let mut out = doc.clone();
    let mut cur = &mut out;
    let parts: Vec<&str> = path.split('.').collect();
    if path.is_empty() || parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad parameter path `{path}`")));
    }
    for part in &parts {
        cur = match cur {
            toml::Value::Table(t) => t.get_mut(*part),
            toml::Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("parameter path `{path}` does not exist")))?;
    }
    match cur {
        toml::Value::Float(f) => *f = value,
        toml::Value::Integer(i) => {
            if value.fract() != 0.0 || value < i64::MIN as f64 || value > i64::MAX as f64 {
                return Err(Error::Config(format!("`{path}` is an integer key; {value} is not an integer")));
            }
            *i = value as i64;
        }
        _ => return Err(Error::Config(format!("`{path}` is not a numeric key"))),
    }
    Ok(out)
}

/// One config per sweep value, each independently parsed and hashed.
pub fn sweep_configs(text: &str, path: &str, values: &[f64]) -> Result<Vec<ConfigFile>> {
    let doc: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    values
        .iter()
        .map(|&v| {
            let patched = patch_value(&doc, path, v)?;
            let s = toml::to_string(&patched).map_err(|e| Error::Config(e.to_string()))?;
            ConfigFile::from_toml_str(&s).map_err(|i| issues_error(&[i]))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoScenario {
    /// No injected events.
    Nominal,
    /// The boundary router fails for two hours.
    RouterOutage,
    /// Both temperature transmitters read 60 °C low; the loop overheats the reactor.
    Overdrive,
    /// Zero added latency on the transmitter uplinks, ready for a sweep of
    /// `events.0.added_latency_min`.
    LatencySweep,
}

/// The built-in TEC-surrogate experiment.
///
/// Two DAPI agents trim the A and C feeds from redundant reactor
/// temperature transmitters. A +2 °C/min heat load appears at t = 60 min;
/// the closed loop rejects it, an open loop lets the reactor settle near
/// 130 °C where output yield falls below 0.90.
pub fn demo_tec(scenario: DemoScenario) -> ConfigFile {
    let node = |name: &str, role, lan| NodeSection { name: name.into(), role, lan };
    let nodes = vec![
        node("router", Role::Router, Lan::ControlRoom),
        node("historian", Role::Historian, Lan::ControlRoom),
        node("hmi", Role::Hmi, Lan::ControlRoom),
        node("plc_a", Role::Controller, Lan::ControlRoom),
        node("plc_c", Role::Controller, Lan::ControlRoom),
        node("tt1", Role::Sensor, Lan::ProcessOps),
        node("tt2", Role::Sensor, Lan::ProcessOps),
        node("fv_a", Role::Actuator, Lan::ProcessOps),
        node("fv_c", Role::Actuator, Lan::ProcessOps),
    ];
    let link = |a: &str, b: &str| LinkSection {
        a: a.into(),
        b: b.into(),
        latency_min: 0.005,
        jitter_min: 0.01,
        drop_prob: 0.001,
        directed: false,
    };
    let links = vec![
        link("tt1", "router"),
        link("tt2", "router"),
        link("fv_a", "router"),
        link("fv_c", "router"),
        link("router", "plc_a"),
        link("router", "plc_c"),
        link("router", "historian"),
        link("router", "hmi"),
        link("plc_a", "plc_c"),
    ];
    let agent = |name: &str, plc: &str, tt: &str, fv: &str, input: &str, gain: f64| AgentSection {
        name: name.into(),
        controller: plc.into(),
        sensor: tt.into(),
        actuator: fv.into(),
        input: input.into(),
        output: "temperature_deviation".into(),
        u0: None,
        beta: 0.0,
        feedback_gain: gain,
        reference: 0.0,
        local_gain: None,
    };
    let lim = |nl, nh, sl, sh| LimitSection { normal_low: nl, normal_high: nh, shutdown_low: sl, shutdown_high: sh };
    let limits = BTreeMap::from([
        ("reactor_pressure".to_string(), lim(None, Some(2895.0), None, Some(3000.0))),
        ("reactor_level".to_string(), lim(Some(11.8), Some(21.3), Some(2.0), Some(24.0))),
        ("reactor_temperature".to_string(), lim(None, Some(150.0), None, Some(175.0))),
        ("separator_level".to_string(), lim(Some(3.3), Some(9.0), Some(1.0), Some(12.0))),
        ("stripper_level".to_string(), lim(Some(3.5), Some(6.6), Some(1.0), Some(8.0))),
    ]);
    let func = |reference, alpha, low, high| FunctionSection { reference, alpha, low: Some(low), high: Some(high) };

    let (name, events) = match scenario {
        DemoScenario::Nominal => ("tec-nominal", vec![]),
        DemoScenario::RouterOutage => {
            let mut e = EventSection::bare(EventKind::SubnetUnavailable, 0.0);
            e.duration_min = Some(120.0);
            ("tec-router-outage", vec![e])
        }
        DemoScenario::Overdrive => {
            let fail = |tt: &str| {
                let mut e = EventSection::bare(EventKind::FailSensor, 0.0);
                e.node = Some(tt.into());
                e.mode = Some(SensorMode::Bias);
                e.bias = Some(-60.0);
                e.duration_min = Some(240.0);
                e
            };
            ("tec-overdrive", vec![fail("tt1"), fail("tt2")])
        }
        DemoScenario::LatencySweep => {
            let mut e = EventSection::bare(EventKind::InjectLatency, 0.0);
            e.links = Some(vec![["tt1".into(), "router".into()], ["tt2".into(), "router".into()]]);
            e.added_latency_min = Some(0.0);
            e.duration_min = Some(120.0);
            ("tec-latency-sweep", vec![e])
        }
    };

    ConfigFile {
        run: RunSection {
            name: name.into(),
            duration_min: 480.0,
            dt_min: 0.1,
            sample_period_min: 1.0,
            seed: 42,
            settle_limit_min: 240.0,
        },
        topology: TopologySection {
            nodes,
            agent_edges: vec![
                AgentEdge { listener: "a_feed".into(), source: "c_feed".into(), weight: 1.0 },
                AgentEdge { listener: "c_feed".into(), source: "a_feed".into(), weight: 1.0 },
            ],
        },
        plant: PlantSection {
            model: PlantKind::TecSurrogate,
            states: None,
            time_constant_min: None,
            nominal_inputs: None,
            initial_state: None,
            tec: Some(TecParams::default()),
            disturbance: vec![DisturbanceStep { start_min: 60.0, values: vec![2.0] }],
            perturbations: vec![],
            limits,
        },
        agents: vec![
            // gains split in proportion to the nominal feed shares
            agent("a_feed", "plc_a", "tt1", "fv_a", "feed_a", 0.0005),
            agent("c_feed", "plc_c", "tt2", "fv_c", "feed_c", 0.0195),
        ],
        network: NetworkSection { scan_period_min: Some(0.1), historian: Some("historian".into()), log_messages: true, links },
        disutilities: Some(DisutilitySection {
            demand: 9.6,
            gamma: 1.0,
            barrier_weight: 1e-6,
            weights: None,
            functions: BTreeMap::from([
                ("a_feed".to_string(), func(0.25, 0.05, 0.0, 1.0)),
                ("c_feed".to_string(), func(9.35, 1.0, 0.0, 20.0)),
            ]),
        }),
        steady_state: SteadySection { metric: "output_yield".into(), window_min: 10.0, band: 0.005, hold_min: 30.0 },
        hypothesis: HypothesisSection { metric: "output_yield".into(), low: 0.90, high: 1.0, horizon_min: 360.0 },
        guard: GuardSection { enabled: true },
        events,
    }
}
