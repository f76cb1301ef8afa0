use consensus_core::erasure::{ErasureModel, ScriptedErasures, SeededErasures};
use consensus_core::graph::Graph;
use consensus_core::oracles::{
    check_counter_laws, check_no_wait_loops, dominator_support, find_witness, find_witness_exhaustive,
    wasted_round_dominator, OracleError,
};
use consensus_core::protocols::{run_repetition, run_uncoded, ProtocolRun};
use consensus_core::rng::hash_counters;
use proptest::prelude::*;

fn seeded_run(g: &Graph, p: f64, seed: u64, rounds: usize) -> ProtocolRun {
    let src = SeededErasures::new(ErasureModel::symmetric(p).unwrap(), seed);
    let x0: Vec<f64> = (0..g.n()).map(|i| i as f64).collect();
    run_repetition(g, 0.1, &src, &x0, rounds).unwrap()
}

/// Most erasures on any time-like path ending at `v_t`, by enumeration.
fn brute_force_witness(run: &ProtocolRun, v: usize, t: usize) -> usize {
    if t == 0 {
        return 0;
    }
    let g = &run.graph;
    let mut best = brute_force_witness(run, v, t - 1);
    for &u in g.neighbors(v) {
        let e = g.edge_id(v, u).unwrap();
        let here = usize::from(run.erasures[t - 1][0].edge_erased(e));
        best = best.max(here + brute_force_witness(run, u, t - 1));
    }
    best
}

#[test]
fn two_planted_erasures_cost_two_iterations() {
    let g = Graph::path(2).unwrap();
    let src = ScriptedErasures::symmetric_from_fn(&g, 4, |k, _| k == 2 || k == 3);
    let run = run_repetition(&g, 0.5, &src, &[1.0, 0.0], 4).unwrap();
    assert_eq!(run.n_v[4], vec![2, 2]);
    for v in 0..2 {
        let w = find_witness(&run, v, 4).unwrap();
        assert_eq!(w.erasures, 2);
        assert!(w.is_time_like(&g));
        assert_eq!(find_witness_exhaustive(&run, v, 4).unwrap().erasures, 2);
    }
    check_counter_laws(&run).unwrap();
}

#[test]
fn far_endpoint_erasures_reach_the_node() {
    // Node 0 of path:5 loses round 36 to an erasure of edge (3, 4) in round
    // 32, four hops away through node 4.
    let g = Graph::path(5).unwrap();
    let run = seeded_run(&g, 0.2, hash_counters(901, &[0]), 40);
    let support = dominator_support(&g, 0, 36);
    assert!(support.contains(&(3, 32)) && support.contains(&(3, 33)));
    assert!(support.contains(&(0, 36)) && support.contains(&(0, 35)));
    for v in 0..5 {
        let rows = wasted_round_dominator(&run, v).unwrap();
        assert!(rows.iter().all(|&(_, x, y)| !x || y));
    }
}

#[test]
fn oracles_refuse_other_runs() {
    let g = Graph::path(3).unwrap();
    let src = SeededErasures::new(ErasureModel::symmetric(0.2).unwrap(), 1);
    let run = run_uncoded(&g, 0.3, &src, &[1.0, 0.0, 0.0], 5).unwrap();
    assert_eq!(find_witness(&run, 0, 3), Err(OracleError::WrongRun));
    assert_eq!(wasted_round_dominator(&run, 0), Err(OracleError::WrongRun));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn witness_search_is_exact_on_small_graphs(n in 2usize..=4, q in 0.3f64..1.0, gseed in any::<u64>(), seed in any::<u64>(), p in 0.1f64..0.6) {
        let g = Graph::erdos_renyi(n, q, gseed).unwrap();
        let run = seeded_run(&g, p, seed, 7);
        for v in 0..n {
            for t in 0..=7 {
                let best = brute_force_witness(&run, v, t);
                let exhaustive = find_witness_exhaustive(&run, v, t).unwrap();
                prop_assert_eq!(exhaustive.erasures, best);
                if t > 0 {
                    let w = find_witness(&run, v, t).unwrap();
                    prop_assert!(w.erasures <= best && w.erasures >= t - run.n_v[t][v]);
                }
            }
        }
    }

    #[test]
    fn protocol_invariants_hold(n in 2usize..=7, q in 0.2f64..1.0, gseed in any::<u64>(), seed in any::<u64>(), p in 0.0f64..0.7) {
        let g = Graph::erdos_renyi(n, q, gseed).unwrap();
        let run = seeded_run(&g, p, seed, 40);
        prop_assert!(check_counter_laws(&run).is_ok());
        prop_assert!(check_no_wait_loops(&run).is_ok());
        for v in 0..n {
            prop_assert!(wasted_round_dominator(&run, v).is_ok());
        }
    }
}
