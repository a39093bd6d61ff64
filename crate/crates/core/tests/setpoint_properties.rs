mod common;

use icschaos::control::{solve_setpoints, verify_optimality, DisutilityFunction, SetpointSolution};
use icschaos::netsim::RngStream;
use icschaos::plant::EquilibriumParams;
use icschaos::topology::Topology;
use icschaos::Error;
use proptest::prelude::*;

use common::{random_connected_undirected, uniform};

/// Random boxed instance with a feasible demand.
fn instance(rng: &mut RngStream, m: usize, mu: f64) -> (Vec<DisutilityFunction<f64>>, f64) {
    let z: Vec<_> = (0..m)
        .map(|_| {
            let low = uniform(rng, -5.0, 0.0);
            let high = low + uniform(rng, 0.5, 10.0);
            DisutilityFunction::boxed(uniform(rng, low, high), uniform(rng, 0.1, 5.0), low, high, mu)
        })
        .collect();
    let lo: f64 = z.iter().map(|f| f.low).sum();
    let hi: f64 = z.iter().map(|f| f.high).sum();
    let d = lo + (hi - lo) * uniform(rng, 0.05, 0.95);
    (z, d)
}

fn total(z: &[DisutilityFunction<f64>], u: &[f64]) -> f64 {
    z.iter().zip(u).map(|(f, &v)| f.value(v)).sum()
}

#[test]
fn seeded_instances_balance_and_stationarity() {
    for seed in 0..1000u64 {
        let mut rng = RngStream::new(seed);
        let m = 1 + (rng.next_u64() % 20) as usize;
        let mu = uniform(&mut rng, 1e-6, 1e-2);
        let (z, d) = instance(&mut rng, m, mu);
        let sol = solve_setpoints(&z, d).unwrap();
        let sum: f64 = sol.u_h.iter().sum();
        assert!((sum - d).abs() <= 1e-10, "seed {seed}: balance {}", sum - d);
        for (f, &u) in z.iter().zip(&sol.u_h) {
            assert!(u > f.low && u < f.high, "seed {seed}");
            assert!((f.derivative(u) - sol.nu).abs() <= 1e-8, "seed {seed}");
        }
    }
}

#[test]
fn closed_form_example() {
    let z: Vec<DisutilityFunction<f64>> = [1.0, 1.0, 2.0].iter().map(|&a| DisutilityFunction::quadratic(0.0, a)).collect();
    let sol = solve_setpoints(&z, 4.0).unwrap();
    for (u, want) in sol.u_h.iter().zip([1.0, 1.0, 2.0]) {
        assert!((u - want).abs() <= 1e-8);
    }
    assert!((sol.nu - 1.0).abs() <= 1e-8);
}

#[test]
fn boxed_two_agent_case_matches_grid_search() {
    let z = [
        DisutilityFunction::boxed(0.0, 1.0, 0.0, 1.0, 1e-3),
        DisutilityFunction::boxed(0.0, 1.0, 0.0, 3.0, 1e-3),
    ];
    let d = 3.0;
    let sol = solve_setpoints(&z, d).unwrap();
    // u1 ∈ (max(0, d−3), min(1, d)) on a fine grid
    let (a, b) = (0.0f64.max(d - 3.0), 1.0f64.min(d));
    let n = 200_000;
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..n {
        let u1 = a + (b - a) * k as f64 / n as f64;
        let v = total(&z, &[u1, d - u1]);
        if v < best.0 {
            best = (v, u1);
        }
    }
    assert!((sol.u_h[0] - best.1).abs() <= 1e-3, "{} vs {}", sol.u_h[0], best.1);
    assert!((sol.u_h[1] - (d - best.1)).abs() <= 1e-3);
    // the upper box on agent 1 is active: it sits just below 1
    assert!(sol.u_h[0] > 0.99 && sol.u_h[0] < 1.0);
}

#[test]
fn boxed_three_agent_case_matches_grid_search() {
    let mut rng = RngStream::new(99);
    let (z, d) = instance(&mut rng, 3, 1e-3);
    let sol = solve_setpoints(&z, d).unwrap();
    let mut best = (f64::INFINITY, [0.0; 2]);
    let n = 1200;
    for i in 1..n {
        let u0 = z[0].low + (z[0].high - z[0].low) * i as f64 / n as f64;
        for j in 1..n {
            let u1 = z[1].low + (z[1].high - z[1].low) * j as f64 / n as f64;
            let u2 = d - u0 - u1;
            if u2 <= z[2].low || u2 >= z[2].high {
                continue;
            }
            let v = total(&z, &[u0, u1, u2]);
            if v < best.0 {
                best = (v, [u0, u1]);
            }
        }
    }
    // the grid spacing is below 1e-2; the optimum is no worse than the grid point
    assert!(total(&z, &sol.u_h) <= best.0 + 1e-12);
    let spacing = (z[0].high - z[0].low).max(z[1].high - z[1].low) / n as f64;
    assert!((sol.u_h[0] - best.1[0]).abs() <= 1e-3 + spacing);
    assert!((sol.u_h[1] - best.1[1]).abs() <= 1e-3 + spacing);
}

#[test]
fn demand_outside_box_is_infeasible() {
    let z = [DisutilityFunction::boxed(0.5, 1.0, 0.0, 1.0, 1e-6), DisutilityFunction::boxed(0.5, 1.0, 0.0, 1.0, 1e-6)];
    assert!(matches!(solve_setpoints(&z, 2.0), Err(Error::Infeasible { .. })));
    assert!(matches!(solve_setpoints(&z, -0.1), Err(Error::Infeasible { .. })));
}

fn certificate_case(seed: u64) -> (Topology<f64>, Vec<DisutilityFunction<f64>>, SetpointSolution<f64>, f64) {
    let mut rng = RngStream::new(seed);
    let m = 2 + (rng.next_u64() % 7) as usize;
    let t = random_connected_undirected(&mut rng, m);
    let (z, d) = instance(&mut rng, m, 1e-4);
    let sol = solve_setpoints(&z, d).unwrap();
    (t, z, sol, d)
}

#[test]
fn certificate_passes_then_fails_on_perturbation() {
    for seed in 0..200u64 {
        let (t, z, sol, d) = certificate_case(seed);
        let p = EquilibriumParams { gamma: 1.0, d };
        let ones = vec![1.0; z.len()];
        let c = verify_optimality(&t, &ones, &sol, &p, &z).unwrap();
        assert!(c.passes(), "seed {seed}: {c:?}");
        for j in 0..z.len() {
            for delta in [1e-3, -1e-3] {
                let mut bad = sol.clone();
                bad.u_h[j] += delta;
                let c = verify_optimality(&t, &ones, &bad, &p, &z).unwrap();
                assert!(!c.passes(), "seed {seed} j {j}");
            }
        }
    }
}

#[test]
fn certificate_needs_global_reachability() {
    let t = Topology::<f64>::unit(4, &[(1, 2), (2, 1), (3, 4), (4, 3)]).unwrap();
    let z: Vec<_> = (0..4).map(|_| DisutilityFunction::quadratic(0.0, 1.0)).collect();
    let sol = solve_setpoints(&z, 4.0).unwrap();
    let p = EquilibriumParams { gamma: 1.0, d: 4.0 };
    assert!(matches!(verify_optimality(&t, &[1.0; 4], &sol, &p, &z), Err(Error::ConditionViolated(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn quadratic_solution_is_proportional(
        alphas in prop::collection::vec(0.1f64..10.0, 1..12),
        d in -50.0f64..50.0,
    ) {
        let z: Vec<_> = alphas.iter().map(|&a| DisutilityFunction::quadratic(0.0, a)).collect();
        let sol = solve_setpoints(&z, d).unwrap();
        let nu = d / alphas.iter().sum::<f64>();
        for (u, a) in sol.u_h.iter().zip(&alphas) {
            prop_assert!((u - a * nu).abs() <= 1e-9 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn solution_beats_feasible_perturbations(seed in any::<u64>(), eps in 1e-4f64..1e-2) {
        let mut rng = RngStream::new(seed);
        let m = 2 + (rng.next_u64() % 6) as usize;
        let (z, d) = instance(&mut rng, m, 1e-4);
        let sol = solve_setpoints(&z, d).unwrap();
        let base = total(&z, &sol.u_h);
        // shifting mass between two agents keeps the balance
        let mut u = sol.u_h.clone();
        u[0] += eps;
        u[1] -= eps;
        if u[0] < z[0].high && u[1] > z[1].low {
            prop_assert!(total(&z, &u) >= base - 1e-12);
        }
    }

    #[test]
    fn equal_agents_split_evenly(m in 1usize..16, d in -20.0f64..20.0, r in -3.0f64..3.0) {
        let z = vec![DisutilityFunction::quadratic(r, 2.0); m];
        let sol = solve_setpoints(&z, d).unwrap();
        for u in &sol.u_h {
            prop_assert!((u - d / m as f64).abs() <= 1e-9 * (1.0 + d.abs()));
        }
    }
}
