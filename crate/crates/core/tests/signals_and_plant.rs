use icschaos::chaos::{prbs_taps, PerturbationSequence, PrbsGenerator};
use icschaos::plant::{equilibrium_map, step, DisturbanceSignal, EquilibriumParams, LinearIntegratorPlant, PlantModel, PlantState, TecParams, TecSurrogate};
use proptest::prelude::*;

#[test]
fn four_branch_schedule_with_nominal_feed() {
    let p = PerturbationSequence::new(0.25, 0.05, 100.0, 1440.0).unwrap();
    assert_eq!(p.eval(50.0), 0.25);
    assert_eq!(p.eval(100.0), 0.30);
    assert_eq!(p.eval(1539.9), 0.30);
    assert_eq!(p.eval(1540.0), 0.20);
    assert_eq!(p.eval(2979.0), 0.20);
    assert_eq!(p.eval(2980.0), 0.25);
    assert_eq!(p.deviation_integral(0.0, 5000.0), 0.0);
}

#[test]
fn linear_plant_step_error_is_fourth_order() {
    // ẋ = (u − x)/τ from x0 = 0 with u held: x(h) = u·(1 − e^{−h/τ})
    let plant = LinearIntegratorPlant::<f64>::with_time_constant(1, 2.0);
    let d = DisturbanceSignal::zero(0);
    let err = |h: f64| {
        let s = step(&plant, &PlantState::new(0.0, vec![0.0]), &[1.0], &d, h).unwrap();
        (s.x[0] - (1.0 - (-h / 2.0f64).exp())).abs()
    };
    for h in [0.8, 0.4, 0.2] {
        let ratio = err(h) / err(h / 2.0);
        assert!(ratio >= 16.0, "h {h}: ratio {ratio}");
    }
}

#[test]
fn tec_rests_at_equilibrium() {
    let plant = TecSurrogate::nominal();
    let d = DisturbanceSignal::zero(plant.disturbance_dim());
    let mut s = PlantState::new(0.0, plant.equilibrium_state());
    let u = plant.nominal_inputs();
    for _ in 0..1000 {
        s = step(&plant, &s, &u, &d, 0.1).unwrap();
    }
    for (a, b) in s.x.iter().zip(plant.equilibrium_state()) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }
}

#[test]
fn tec_heats_up_under_heat_load() {
    let plant = TecSurrogate::nominal();
    let d = DisturbanceSignal::new(1, vec![(0.0, vec![2.0])]).unwrap();
    let mut s = PlantState::new(0.0, plant.equilibrium_state());
    let u = plant.nominal_inputs();
    for _ in 0..600 {
        s = step(&plant, &s, &u, &d, 0.1).unwrap();
    }
    assert!(s.x[0] > 125.0);
    assert!(plant.yield_at(s.x[0]) < plant.yield_at(120.0));
}

#[test]
fn f32_instantiation_tracks_f64() {
    let p64 = TecSurrogate::<f64>::nominal();
    let p32 = TecSurrogate::<f32>::new(TecParams::cast_from(&TecParams::default()));
    let d64 = DisturbanceSignal::new(1, vec![(0.0, vec![2.0])]).unwrap();
    let d32 = DisturbanceSignal::new(1, vec![(0.0f32, vec![2.0f32])]).unwrap();
    let mut a = PlantState::new(0.0, p64.equilibrium_state());
    let mut b = PlantState::new(0.0f32, p32.equilibrium_state());
    for _ in 0..100 {
        a = step(&p64, &a, &p64.nominal_inputs(), &d64, 0.1).unwrap();
        b = step(&p32, &b, &p32.nominal_inputs(), &d32, 0.1f32).unwrap();
    }
    assert!((a.x[0] - b.x[0] as f64).abs() < 1e-3);
}

#[test]
fn every_tap_set_is_maximal() {
    for k in 2..=16u32 {
        assert!(prbs_taps(k).is_some());
        let mut g = PrbsGenerator::new(k, 1, 1.0f64).unwrap();
        let start = g.register();
        let mut n = 0u64;
        loop {
            g.next_bit();
            n += 1;
            if g.register() == start {
                break;
            }
        }
        assert_eq!(n, (1u64 << k) - 1, "k {k}");
    }
}

proptest! {
    #[test]
    fn equilibrium_components_identical(u in prop::collection::vec(-1e3f64..1e3, 1..20), d in -1e3f64..1e3, gamma in 0.01f64..100.0) {
        let y = equilibrium_map(&u, &EquilibriumParams { gamma, d }).unwrap();
        for v in &y {
            prop_assert_eq!(v.to_bits(), y[0].to_bits());
        }
    }

    #[test]
    fn equilibrium_vanishes_on_balance(u in prop::collection::vec(-10.0f64..10.0, 1..10)) {
        let d: f64 = u.iter().sum();
        let y = equilibrium_map(&u, &EquilibriumParams { gamma: 1.0, d }).unwrap();
        prop_assert!(y.iter().all(|v| v.abs() <= 1e-12));
        let y = equilibrium_map(&u, &EquilibriumParams { gamma: 1.0, d: d + 1e-6 }).unwrap();
        prop_assert!(y.iter().all(|v| *v != 0.0));
    }

    #[test]
    fn schedule_cancels_over_both_windows(u0 in -10.0f64..10.0, delta in -5.0f64..5.0, t0 in 0.0f64..500.0, w in 1.0f64..2000.0) {
        let p = PerturbationSequence::new(u0, delta, t0, w).unwrap();
        prop_assert_eq!(p.deviation_integral(t0, t0 + w + w), 0.0);
        prop_assert_eq!(p.deviation_integral(-1e4, 1e5), 0.0);
    }

    #[test]
    fn prbs_levels_are_three_valued(k in 2u32..=12, seed in 1u32..4000, delta in 0.01f64..5.0) {
        prop_assume!(seed & ((1u32 << k) - 1) != 0);
        let mut g = PrbsGenerator::new(k, seed, delta).unwrap();
        let mut sum = 0.0;
        for _ in 0..((1u64 << k) - 1) {
            let v = g.next_level();
            prop_assert!(v == 0.0 || v == delta || v == -delta);
            sum += v;
        }
        // rising and falling edges alternate around the cycle
        prop_assert_eq!(sum, 0.0);
    }
}
