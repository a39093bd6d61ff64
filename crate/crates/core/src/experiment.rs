//! Experiment lifecycle: settle to a steady state, inject the schedule,
//! judge the hypothesis, and measure blast radius and recovery.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{EventLogEntry, EventSchedule};
use crate::error::{Error, Result};
use crate::netsim::MessageRecord;
use crate::plant::ProcessLimits;
use crate::sim::{SimSpec, Simulation, StepOutcome, Trajectory};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSpec {
    pub metric: String,
    /// Evaluation cadence: candidate windows end at multiples of this.
    pub window_min: f64,
    /// Absolute tolerance around the window mean.
    pub band: f64,
    pub hold_min: f64,
}

impl SteadyStateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_min > 0.0 && self.window_min.is_finite()) {
            return Err(Error::Invalid("steady state window must be positive".into()));
        }
        if !(self.band > 0.0 && self.band.is_finite()) {
            return Err(Error::Invalid("steady state band must be positive".into()));
        }
        if !(self.hold_min >= self.window_min && self.hold_min.is_finite()) {
            return Err(Error::Invalid("steady state hold must be at least the window".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub metric: String,
    pub low: f64,
    pub high: f64,
    pub horizon_min: f64,
}

impl Hypothesis {
    pub fn validate(&self) -> Result<()> {
        if !(self.low < self.high) {
            return Err(Error::Invalid("hypothesis band needs low < high".into()));
        }
        if !(self.horizon_min > 0.0 && self.horizon_min.is_finite()) {
            return Err(Error::Invalid("hypothesis horizon must be positive".into()));
        }
        Ok(())
    }

    /// Distance outside the band, 0 inside.
    pub fn excursion(&self, v: f64) -> f64 {
        if v < self.low {
            self.low - v
        } else if v > self.high {
            v - self.high
        } else if v.is_nan() {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

/// Optimal setpoints and their certificate, carried into the result record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointReport {
    pub u_h: Vec<f64>,
    pub nu: f64,
    pub balance_residual: f64,
    pub residual_5a: f64,
    pub residual_5b: f64,
    pub certified: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub sim: SimSpec,
    pub steady: SteadyStateSpec,
    pub hypothesis: Hypothesis,
    pub schedule: EventSchedule,
    /// Run length after the injection instant.
    pub duration_min: f64,
    /// Give up on settling after this many minutes.
    pub settle_limit_min: f64,
    pub config_hash: String,
    pub setpoints: Option<SetpointReport>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.steady.validate()?;
        self.hypothesis.validate()?;
        self.sim.validate()?;
        if !(self.duration_min >= self.hypothesis.horizon_min) {
            return Err(Error::Invalid("duration must cover the hypothesis horizon".into()));
        }
        if !(self.settle_limit_min >= self.steady.hold_min && self.settle_limit_min.is_finite()) {
            return Err(Error::Invalid("settle limit must be at least the steady-state hold".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyWindow {
    pub start: f64,
    pub end: f64,
    pub baseline: f64,
}

/// Mean as `v0 + Σ(v − v0)/n`, exact when all values are equal.
fn mean(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = vals.clone();
    let Some(first) = it.next() else { return f64::NAN };
    let (n, s) = vals.fold((0usize, 0.0), |(n, s), v| (n + 1, s + (v - first)));
    first + s / n as f64
}

/// Window `[end − hold, end]` if its samples stay within `band` of their mean.
pub fn steady_window_at(series: &[(f64, f64)], end: f64, spec: &SteadyStateSpec) -> Option<SteadyWindow> {
    let start = end - spec.hold_min;
    if series.first().is_none_or(|&(t0, _)| t0 > start + TIME_EPS) {
        return None;
    }
    let window = series.iter().filter(|(t, _)| *t >= start - TIME_EPS && *t <= end + TIME_EPS);
    if window.clone().count() < 2 {
        return None;
    }
    let mu = mean(window.clone().map(|p| p.1));
    let dev = window.fold(0.0f64, |m, &(_, v)| if v.is_nan() { f64::INFINITY } else { m.max((v - mu).abs()) });
    (dev <= spec.band).then_some(SteadyWindow { start, end, baseline: mu })
}

/// Earliest window of length `hold` ending on a multiple of the window
/// cadence whose samples stay within the band of their mean.
pub fn detect_steady_state(series: &[(f64, f64)], spec: &SteadyStateSpec) -> Option<SteadyWindow> {
    let (&(t0, _), &(t1, _)) = (series.first()?, series.last()?);
    let w = spec.window_min;
    let mut n = ((t0 + spec.hold_min) / w - TIME_EPS).ceil().max(0.0);
    loop {
        let end = n * w;
        if end > t1 + TIME_EPS {
            return None;
        }
        if let Some(win) = steady_window_at(series, end, spec) {
            return Some(win);
        }
        n += 1.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlastRadius {
    pub fraction_violating: f64,
    pub violation_integral: f64,
    pub shutdown_events: usize,
    pub violating: Vec<String>,
}

impl BlastRadius {
    pub fn zero() -> Self {
        Self { fraction_violating: 0.0, violation_integral: 0.0, shutdown_events: 0, violating: Vec::new() }
    }
}

fn excess_scale(lim: &crate::plant::VariableLimits<f64>) -> f64 {
    match (lim.normal_low, lim.normal_high, lim.shutdown_low, lim.shutdown_high) {
        (Some(lo), Some(hi), _, _) if hi > lo => hi - lo,
        (None, Some(hi), _, Some(sh)) if sh > hi => sh - hi,
        (Some(lo), None, Some(sl), _) if lo > sl => lo - sl,
        _ => 1.0,
    }
}

/// Normalized excess beyond the normal limits, 0 inside them.
fn normalized_excess(lim: &crate::plant::VariableLimits<f64>, v: f64) -> f64 {
    let scale = excess_scale(lim);
    let above = lim.normal_high.map_or(0.0, |h| (v - h) / scale);
    let below = lim.normal_low.map_or(0.0, |l| (l - v) / scale);
    above.max(below).max(0.0)
}

fn at_shutdown(lim: &crate::plant::VariableLimits<f64>, v: f64) -> bool {
    lim.shutdown_high.is_some_and(|h| v >= h) || lim.shutdown_low.is_some_and(|l| v <= l)
}

/// Impact of a run on the monitored variables over `[t_a, t_b]`.
///
/// Integrals use left Riemann sums over the samples. A shutdown event is
/// a sample reaching a shutdown limit whose predecessor (if any) did not.
pub fn blast_radius(traj: &Trajectory, limits: &ProcessLimits<f64>, window: (f64, f64)) -> Result<BlastRadius> {
    let (t_a, t_b) = window;
    let rows: Vec<&Vec<f64>> =
        traj.rows.iter().filter(|r| r[0] >= t_a - TIME_EPS && r[0] <= t_b + TIME_EPS).collect();
    if limits.is_empty() {
        return Ok(BlastRadius::zero());
    }
    let cols = limits
        .entries
        .iter()
        .map(|(name, _)| traj.column(name).ok_or_else(|| Error::UnknownVariable(name.clone())))
        .collect::<Result<Vec<_>>>()?;
    let duration = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => b[0] - a[0],
        _ => 0.0,
    };
    let mut out = BlastRadius::zero();
    let mut integral = 0.0;
    for ((name, lim), &c) in limits.entries.iter().zip(&cols) {
        let mut violated = false;
        let mut prev_shutdown = false;
        for (i, r) in rows.iter().enumerate() {
            let v = r[c];
            let e = normalized_excess(lim, v);
            if e > 0.0 {
                violated = true;
                if let Some(next) = rows.get(i + 1) {
                    integral += e * (next[0] - r[0]);
                }
            }
            let sd = at_shutdown(lim, v);
            if sd && !prev_shutdown {
                out.shutdown_events += 1;
            }
            prev_shutdown = sd;
        }
        if violated {
            out.violating.push(name.clone());
        }
    }
    let n = limits.len() as f64;
    out.fraction_violating = out.violating.len() as f64 / n;
    out.violation_integral = if duration > 0.0 { integral / (duration * n) } else { 0.0 };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DireLandmarks {
    pub injection: f64,
    pub band_exit: Option<f64>,
    pub band_reentry: Option<f64>,
    pub dip: f64,
    pub recovered: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DireMetrics {
    pub p_i: f64,
    pub p_min: f64,
    pub t_dip: f64,
    pub t_recover: Option<f64>,
    pub p_f: f64,
    /// `P_f / P_i`; absent when the baseline is zero.
    pub restoration_ratio: Option<f64>,
    pub landmarks: DireLandmarks,
}

/// Resilience-curve landmarks of a post-injection series around baseline
/// `p_i`, with `band` the tolerated deviation and `hold` the time the
/// metric must stay in band to count as recovered.
pub fn dire_metrics(series: &[(f64, f64)], p_i: f64, band: f64, hold: f64) -> Result<DireMetrics> {
    let (&(t_first, _), &(t_last, _)) = match (series.first(), series.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::EmptyWindow),
    };
    let (mut p_min, mut t_dip) = (p_i, t_first);
    for &(t, v) in series {
        if v < p_min {
            p_min = v;
            t_dip = t;
        }
    }
    let in_band = |v: f64| (v - p_i).abs() <= band;

    let mut t_recover = None;
    let mut run_start: Option<f64> = None;
    for &(t, v) in series.iter().filter(|(t, _)| *t >= t_dip - TIME_EPS) {
        if in_band(v) {
            let s = *run_start.get_or_insert(t);
            if t - s >= hold - TIME_EPS {
                t_recover = Some(s);
                break;
            }
        } else {
            run_start = None;
        }
    }

    let band_exit = series.iter().find(|(_, v)| !in_band(*v)).map(|p| p.0);
    let band_reentry =
        band_exit.and_then(|te| series.iter().find(|(t, v)| *t > te && in_band(*v)).map(|p| p.0));

    let final_start = t_last - hold;
    let p_f = mean(series.iter().filter(|(t, _)| *t >= final_start - TIME_EPS).map(|p| p.1));
    let restoration_ratio = (p_i != 0.0).then(|| p_f / p_i);
    Ok(DireMetrics {
        p_i,
        p_min,
        t_dip,
        t_recover,
        p_f,
        restoration_ratio,
        landmarks: DireLandmarks { injection: t_first, band_exit, band_reentry, dip: t_dip, recovered: t_recover },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    HypothesisHeld,
    Disproved { first_violation_time: f64, max_excursion: f64 },
    Aborted { reason: String, time: f64 },
    NoSteadyState,
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::HypothesisHeld => 0,
            Verdict::Disproved { .. } => 2,
            Verdict::Aborted { .. } => 3,
            Verdict::NoSteadyState => 4,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::HypothesisHeld => "held",
            Verdict::Disproved { .. } => "disproved",
            Verdict::Aborted { .. } => "aborted",
            Verdict::NoSteadyState => "no_steady_state",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub seed: u64,
    pub config_hash: String,
    pub verdict: Verdict,
    pub steady: Option<SteadyWindow>,
    pub injection_time: Option<f64>,
    pub blast: BlastRadius,
    pub dire: Option<DireMetrics>,
    pub setpoints: Option<SetpointReport>,
    #[serde(skip)]
    pub trajectory: Trajectory,
    #[serde(skip)]
    pub events: Vec<EventLogEntry>,
    #[serde(skip)]
    pub messages: Vec<MessageRecord>,
}

impl ExperimentResult {
    /// One JSON line; byte-identical for identical `(spec, seed)`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("result serializes")
    }
}

enum RunEnd {
    Done,
    Aborted { reason: String, time: f64 },
}

fn advance(sim: &mut Simulation, t_end: f64) -> Result<RunEnd> {
    match sim.run_until(t_end) {
        Ok(StepOutcome::Continue) => Ok(RunEnd::Done),
        Ok(StepOutcome::Aborted(a)) => Ok(RunEnd::Aborted {
            reason: format!("{} = {} beyond shutdown limit {}", a.variable, a.value, a.limit),
            time: a.time,
        }),
        Err(Error::NonFiniteState { t }) => Ok(RunEnd::Aborted { reason: "integrator divergence".into(), time: t }),
        Err(e) => Err(e),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let mut sim = Simulation::new(Arc::new(spec.sim.clone()))?;
    for metric in [&spec.steady.metric, &spec.hypothesis.metric] {
        if sim.trajectory().column(metric).is_none() {
            return Err(Error::UnknownVariable(metric.clone()));
        }
    }
    for (name, _) in &spec.sim.guard.limits.entries {
        if sim.trajectory().column(name).is_none() {
            return Err(Error::UnknownVariable(name.clone()));
        }
    }
    // surface bad targets before anything runs
    for (_, e) in spec.schedule.entries() {
        crate::chaos::check_targets(&sim, e)?;
    }

    let w = spec.steady.window_min;
    let mut n = (spec.steady.hold_min / w - TIME_EPS).ceil().max(1.0);
    let mut steady = None;
    let mut end = RunEnd::Done;
    loop {
        let t_end = n * w;
        if t_end > spec.settle_limit_min + TIME_EPS {
            break;
        }
        end = advance(&mut sim, t_end)?;
        if matches!(end, RunEnd::Aborted { .. }) {
            break;
        }
        let series = sim.trajectory().series(&spec.steady.metric)?;
        if let Some(win) = steady_window_at(&series, t_end, &spec.steady) {
            steady = Some(win);
            break;
        }
        n += 1.0;
    }

    let mut injection_time = None;
    if let (Some(win), RunEnd::Done) = (&steady, &end) {
        let t_inj = win.end;
        injection_time = Some(t_inj);
        sim.schedule(&spec.schedule, t_inj)?;
        end = advance(&mut sim, t_inj + spec.duration_min)?;
    }
    sim.finish();

    let traj = sim.trajectory().clone();
    let t_from = injection_time.unwrap_or(0.0);
    let t_to = traj.last_time().unwrap_or(0.0);
    let blast = blast_radius(&traj, &spec.sim.guard.limits, (t_from, t_to))?;

    let verdict = match (&end, &steady) {
        (RunEnd::Aborted { reason, time }, _) => Verdict::Aborted { reason: reason.clone(), time: *time },
        (RunEnd::Done, None) => Verdict::NoSteadyState,
        (RunEnd::Done, Some(_)) => {
            let h = &spec.hypothesis;
            let horizon_end = t_from + h.horizon_min;
            let series = traj.series(&h.metric)?;
            let mut first = None;
            let mut max_exc = 0.0f64;
            for &(t, v) in series.iter().filter(|(t, _)| *t >= t_from - TIME_EPS && *t <= horizon_end + TIME_EPS) {
                let e = h.excursion(v);
                if e > 0.0 {
                    first.get_or_insert(t);
                    max_exc = max_exc.max(e);
                }
            }
            match first {
                Some(t) => Verdict::Disproved { first_violation_time: t, max_excursion: max_exc },
                None => Verdict::HypothesisHeld,
            }
        }
    };

    let dire = match (&steady, injection_time) {
        (Some(win), Some(t_inj)) => {
            let series: Vec<_> = traj
                .series(&spec.hypothesis.metric)?
                .into_iter()
                .filter(|(t, _)| *t >= t_inj - TIME_EPS)
                .collect();
            if spec.hypothesis.metric == spec.steady.metric {
                Some(dire_metrics(&series, win.baseline, spec.steady.band, spec.steady.hold_min)?)
            } else {
                let base = traj.series(&spec.hypothesis.metric)?;
                let p_i = mean(base.iter().filter(|(t, _)| *t >= win.start - TIME_EPS && *t <= win.end + TIME_EPS).map(|p| p.1));
                Some(dire_metrics(&series, p_i, spec.steady.band, spec.steady.hold_min)?)
            }
        }
        _ => None,
    };

    let events = sim.event_log().to_vec();
    let messages = sim.take_messages();
    Ok(ExperimentResult {
        name: spec.name.clone(),
        seed: spec.sim.seed,
        config_hash: spec.config_hash.clone(),
        verdict,
        steady,
        injection_time,
        blast,
        dire,
        setpoints: spec.setpoints.clone(),
        trajectory: traj,
        events,
        messages,
    })
}

/// Runs every spec on a pool of `parallelism` threads. Results come back in
/// spec order and each spec's error stays with that spec.
pub fn batch_run(specs: &[ExperimentSpec], parallelism: usize) -> Vec<Result<ExperimentResult>> {
    let threads = parallelism.max(1);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| specs.par_iter().map(run_experiment).collect()),
        Err(_) => specs.iter().map(run_experiment).collect(),
    }
}
