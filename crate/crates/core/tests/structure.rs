mod common;

use common::*;
use hinf_detect::linalg::{block_diag, Mat};
use hinf_detect::synthesis::{
    assemble_augmented, build_coupling, design, global_feasibility, GainBlocks,
};
use proptest::prelude::*;

#[test]
fn two_node_boundary_matches_closed_form() {
    for &(r, gamma) in &[
        (2.0, 1.0),
        (2.0, 1.2),
        (2.0, 1.1547),
        (2.0, 1.1548),
        (5.0, 2.3),
        (5.0, 2.31),
    ] {
        let s = validated(&two_node_unit_link(r, gamma));
        let rep = global_feasibility(&s, gamma).unwrap();
        let closed = r - 0.75 * gamma * gamma - 1.0;
        assert!(
            (rep.min_eig - closed).abs() < 1e-12,
            "{} vs {closed}",
            rep.min_eig
        );
        assert_eq!(rep.feasible, closed > 1e-9);
    }
}

#[test]
fn e_is_block_diagonal_in_noise_covariances() {
    for seed in 0..10 {
        let s = validated(&random_config(seed, false));
        for i in 0..s.n_nodes() {
            for t in [0.0, 0.37, 1.9] {
                let aug = assemble_augmented(&s, i, t).unwrap();
                let d = s.nodes[i].sensor.d.eval(t);
                let mut blocks = vec![&d * d.transpose()];
                blocks.extend(
                    s.topology
                        .in_links(i)
                        .iter()
                        .map(|&k| s.topology.link(k).u()),
                );
                let refs: Vec<&Mat> = blocks.iter().collect();
                assert!((aug.e - block_diag(&refs)).amax() <= 1e-12);
            }
        }
    }
}

#[test]
fn phi_blocks_follow_the_graph() {
    for seed in 0..20 {
        let s = validated(&random_network(seed));
        let c = build_coupling(&s.topology, s.n()).unwrap();
        for i in 0..s.n_nodes() {
            assert_eq!(c.phi_block(i, i), c.delta[i]);
            let neighbors = s.topology.neighbors(i);
            for j in (0..s.n_nodes()).filter(|&j| j != i) {
                if !neighbors.contains(&j) {
                    assert_eq!(c.phi_block(i, j).amax(), 0.0, "seed {seed} block ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn gain_partition_round_trips_bit_exactly() {
    for seed in [1, 4, 9] {
        let s = validated(&random_config(seed, false));
        let d = design(&s).unwrap();
        for node in &d.nodes {
            for sched in [&node.detector, &node.baseline] {
                for g in &sched.gains {
                    let back = GainBlocks::partition(g, &sched.layout)
                        .unwrap()
                        .reassemble(&sched.layout);
                    assert!(back
                        .iter()
                        .zip(g.iter())
                        .all(|(a, b)| a.to_bits() == b.to_bits()));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lmi_check_agrees_with_dense_eigenvalues(seed in any::<u64>()) {
        let cfg = random_network(seed);
        let s = validated(&cfg);
        let gamma = cfg.design.gamma;
        let rep = global_feasibility(&s, gamma).unwrap();
        let brute = brute_force_lmi(&cfg, gamma);
        prop_assert!((rep.min_eig - brute).abs() <= 1e-9 * (1.0 + brute.abs()), "{} vs {brute}", rep.min_eig);
        prop_assert_eq!(rep.feasible, brute > 1e-9);
    }
}
