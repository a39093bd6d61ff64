mod common;

use icschaos::netsim::RngStream;
use icschaos::topology::{check_lemma1, globally_reachable_nodes, laplacian, row_sums, spectral_summary, Topology, DEFAULT_ZERO_TOL};
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{dense, random_digraph, reachable_oracle};

fn topology_from_mask(mask: u32) -> Topology<f64> {
    let mut a = DMatrix::zeros(4, 4);
    let mut bit = 0;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                if mask & (1 << bit) != 0 {
                    a[(i, j)] = 1.0;
                }
                bit += 1;
            }
        }
    }
    Topology::from_adjacency(a).unwrap()
}

#[test]
fn every_four_node_digraph_agrees_with_search() {
    for mask in 0..4096u32 {
        let t = topology_from_mask(mask);
        let oracle = reachable_oracle(&dense(&t));
        let rep = check_lemma1(&t).unwrap();
        assert!(rep.agrees(), "mask {mask}: {:?}", rep.disagreements);
        let got: Vec<usize> = rep.reachable.iter().map(|n| n.index()).collect();
        assert_eq!(got, oracle.iter().copied().collect::<Vec<_>>(), "mask {mask}");
        assert_eq!(rep.simple_zero, !oracle.is_empty(), "mask {mask}");
        if rep.simple_zero {
            let support: Vec<usize> = rep.support.unwrap().iter().map(|n| n.index()).collect();
            assert_eq!(support, oracle.iter().copied().collect::<Vec<_>>(), "mask {mask}");
            assert!(!rep.negative_entry);
        }
    }
}

#[test]
fn chain_and_star_examples() {
    // 1 listens to 2, 2 listens to 3: only 3 reaches everyone
    let chain = Topology::<f64>::unit(3, &[(1, 2), (2, 3)]).unwrap();
    let r: Vec<usize> = globally_reachable_nodes(&chain).iter().map(|n| n.0).collect();
    assert_eq!(r, vec![3]);
    let s = spectral_summary(&chain, DEFAULT_ZERO_TOL).unwrap();
    assert_eq!(s.zero_multiplicity, 1);
    let x = s.left_null_vector.unwrap();
    assert!(x[0].abs() < 1e-12 && x[1].abs() < 1e-12 && (x[2] - 1.0).abs() < 1e-12);

    // two disconnected pairs
    let split = Topology::<f64>::unit(4, &[(1, 2), (2, 1), (3, 4), (4, 3)]).unwrap();
    assert!(globally_reachable_nodes(&split).is_empty());
    assert_eq!(spectral_summary(&split, DEFAULT_ZERO_TOL).unwrap().zero_multiplicity, 2);
}

#[test]
fn seeded_digraphs_satisfy_laplacian_invariants() {
    for seed in 0..1000u64 {
        let mut rng = RngStream::new(seed);
        let m = 1 + (rng.next_u64() % 12) as usize;
        let t = random_digraph(&mut rng, m, 0.35);
        let l = laplacian(&t);
        for s in row_sums(&l) {
            assert_eq!(s, 0.0, "seed {seed}");
        }
        let ones = DMatrix::from_element(m, 1, 1.0);
        assert!((&l * ones).amax() <= 1e-12, "seed {seed}");
        let summary = spectral_summary(&t, DEFAULT_ZERO_TOL).unwrap();
        for ev in &summary.eigenvalues {
            assert!(ev.re >= -1e-9, "seed {seed}: {ev}");
        }
    }
}

fn adjacency(max_m: usize) -> impl Strategy<Value = Topology<f64>> {
    (1..=max_m).prop_flat_map(|m| {
        prop::collection::vec(prop_oneof![3 => Just(0.0), 1 => 0.01f64..10.0], m * m).prop_map(move |w| {
            let mut a = DMatrix::from_row_slice(m, m, &w);
            a.fill_diagonal(0.0);
            Topology::from_adjacency(a).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn row_sums_vanish_exactly(t in adjacency(10)) {
        for s in row_sums(&laplacian(&t)) {
            prop_assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn spectrum_in_closed_right_half_plane(t in adjacency(8)) {
        let s = spectral_summary(&t, DEFAULT_ZERO_TOL).unwrap();
        prop_assert!(s.zero_multiplicity >= 1);
        for ev in &s.eigenvalues {
            prop_assert!(ev.re >= -1e-9);
        }
    }

    #[test]
    fn reachability_check_matches_search(t in adjacency(7)) {
        let rep = check_lemma1(&t).unwrap();
        prop_assert!(rep.agrees(), "{:?}", rep.disagreements);
        let oracle = reachable_oracle(&dense(&t));
        let got: Vec<usize> = rep.reachable.iter().map(|n| n.index()).collect();
        prop_assert_eq!(got, oracle.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn scaling_weights_keeps_reachability(t in adjacency(6), k in 0.1f64..10.0) {
        let scaled = Topology::from_adjacency(t.adjacency() * k).unwrap();
        prop_assert_eq!(globally_reachable_nodes(&t), globally_reachable_nodes(&scaled));
    }
}
