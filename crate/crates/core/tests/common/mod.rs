#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use icschaos::chaos::AbortGuard;
use icschaos::netsim::{LinkParams, RngStream};
use icschaos::plant::{DisturbanceSignal, LinearIntegratorPlant, ProcessLimits};
use icschaos::sim::{star_network, AgentSpec, SimSpec};
use icschaos::topology::{NodeId, Topology};

pub fn uniform(rng: &mut RngStream, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.next_f64()
}

pub fn below(rng: &mut RngStream, n: u64) -> u64 {
    rng.next_u64() % n
}

/// Digraph where each ordered pair is an edge with probability `p`, weights in [0.1, 5].
pub fn random_digraph(rng: &mut RngStream, m: usize, p: f64) -> Topology<f64> {
    let mut edges = Vec::new();
    for i in 1..=m {
        for j in 1..=m {
            if i != j && rng.next_f64() < p {
                edges.push((NodeId(i), NodeId(j), uniform(rng, 0.1, 5.0)));
            }
        }
    }
    Topology::from_edges(m, &edges).unwrap()
}

/// Connected undirected unit-weight graph: random spanning tree plus extra edges.
pub fn random_connected_undirected(rng: &mut RngStream, m: usize) -> Topology<f64> {
    let mut pairs = BTreeSet::new();
    for j in 2..=m {
        let parent = 1 + below(rng, (j - 1) as u64) as usize;
        pairs.insert((parent.min(j), parent.max(j)));
    }
    for i in 1..=m {
        for j in i + 1..=m {
            if rng.next_f64() < 0.2 {
                pairs.insert((i, j));
            }
        }
    }
    let edges: Vec<(usize, usize)> = pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    Topology::unit(m, &edges).unwrap()
}

/// Globally reachable nodes by brute-force search on a dense weight matrix
/// (0-based): information flows `j → i` whenever `a[i][j] > 0`.
pub fn reachable_oracle(a: &[Vec<f64>]) -> BTreeSet<usize> {
    let m = a.len();
    (0..m)
        .filter(|&root| {
            let mut seen = vec![false; m];
            seen[root] = true;
            let mut stack = vec![root];
            while let Some(cur) = stack.pop() {
                for i in 0..m {
                    if !seen[i] && a[i][cur] > 0.0 {
                        seen[i] = true;
                        stack.push(i);
                    }
                }
            }
            seen.iter().all(|&s| s)
        })
        .collect()
}

pub fn dense(t: &Topology<f64>) -> Vec<Vec<f64>> {
    let a = t.adjacency();
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

/// Linear-plant closed loop over a star network, one agent per graph node.
pub fn linear_spec(topology: Topology<f64>, u0: Vec<f64>, params: LinkParams, dt: f64, tau: f64) -> SimSpec {
    let m = topology.node_count();
    let names: Vec<String> = (0..m).map(|j| format!("a{j}")).collect();
    let layout = star_network(&names, params);
    let agents = (0..m)
        .map(|j| AgentSpec {
            name: names[j].clone(),
            controller: layout.agents[j].1,
            sensor: layout.agents[j].0,
            actuator: layout.agents[j].2,
            input: j,
            output: j,
            u0: u0[j],
            beta: 0.0,
            feedback_gain: 0.0,
            reference: 0.0,
        })
        .collect();
    SimSpec {
        plant: Arc::new(LinearIntegratorPlant::<f64>::with_time_constant(m, tau)),
        x0: vec![0.0; m],
        base_inputs: vec![0.0; m],
        disturbance: DisturbanceSignal::zero(0),
        local_gains: icschaos::control::default_local_gains(&topology),
        topology,
        agents,
        nodes: layout.nodes,
        links: layout.links,
        historian: Some(layout.historian),
        dt,
        sample_period: 1.0,
        scan_period: dt,
        guard: AbortGuard { limits: ProcessLimits::default(), enabled: true },
        perturbations: vec![],
        seed: 1,
        log_messages: false,
    }
}

/// Direct discrete recurrence of the ideal-network loop: controllers see the
/// plant state at the start of each step, the plant integrates under the
/// held inputs, then `u += dt·(−L x)`. For `ẋ = (u − x)/τ` one RK4 step
/// contracts `x − u` by the degree-4 Taylor polynomial of `e^{−h}`.
pub fn zoh_oracle(a: &[Vec<f64>], u0: &[f64], tau: f64, dt: f64, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let m = a.len();
    let mut x = vec![0.0; m];
    let mut u = u0.to_vec();
    let h = dt / tau;
    let decay = 1.0 - h + h * h / 2.0 - h * h * h / 6.0 + h * h * h * h / 24.0;
    for _ in 0..steps {
        let du: Vec<f64> = (0..m)
            .map(|j| (0..m).map(|l| a[j][l] * (x[l] - x[j])).sum::<f64>())
            .collect();
        for j in 0..m {
            x[j] = u[j] + (x[j] - u[j]) * decay;
            u[j] += dt * du[j];
        }
    }
    (x, u)
}

pub const LATENCY_SWEEP: [f64; 4] = [0.0, 1.0, 5.0, 20.0];

pub fn golden_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/latency_sweep.json")
}

/// `(added latency, verdict label, violation integral)` for the TEC latency sweep.
pub fn latency_sweep(parallel: usize) -> Vec<(f64, String, f64)> {
    use icschaos::config::{demo_tec, sweep_configs, DemoScenario};
    let text = demo_tec(DemoScenario::LatencySweep).to_toml_string();
    let cfgs = sweep_configs(&text, "events.0.added_latency_min", &LATENCY_SWEEP).unwrap();
    let specs: Vec<_> = cfgs.iter().map(|c| c.build().unwrap()).collect();
    icschaos::experiment::batch_run(&specs, parallel)
        .into_iter()
        .zip(LATENCY_SWEEP)
        .map(|(r, v)| {
            let r = r.unwrap();
            (v, r.verdict.label().to_string(), r.blast.violation_integral)
        })
        .collect()
}

/// Compares against the stored golden file; `UPDATE_GOLDEN=1` rewrites it.
pub fn check_golden(rows: &[(f64, String, f64)]) -> Result<(), String> {
    let path = golden_path();
    let json = serde_json::to_string_pretty(
        &rows
            .iter()
            .map(|(v, verdict, vi)| serde_json::json!({"added_latency_min": v, "verdict": verdict, "violation_integral": vi}))
            .collect::<Vec<_>>(),
    )
    .unwrap();
    if std::env::var("UPDATE_GOLDEN").as_deref() == Ok("1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, json + "\n").unwrap();
        return Ok(());
    }
    let stored: Vec<serde_json::Value> =
        serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?)
            .map_err(|e| e.to_string())?;
    if stored.len() != rows.len() {
        return Err(format!("golden has {} rows, run has {}", stored.len(), rows.len()));
    }
    for (g, (v, verdict, vi)) in stored.iter().zip(rows) {
        let gv = g["violation_integral"].as_f64().unwrap_or(f64::NAN);
        if g["added_latency_min"].as_f64() != Some(*v) || g["verdict"].as_str() != Some(verdict) {
            return Err(format!("row {v}: golden {g}, got {verdict}"));
        }
        if (gv - vi).abs() > 1e-9 * (1.0 + gv.abs()) {
            return Err(format!("row {v}: golden violation_integral {gv}, got {vi}"));
        }
    }
    Ok(())
}

pub fn non_decreasing(rows: &[(f64, String, f64)]) -> bool {
    rows.windows(2).all(|w| w[1].2 >= w[0].2)
}
