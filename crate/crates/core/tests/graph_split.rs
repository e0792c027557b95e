use std::collections::{BTreeMap, HashSet};

use leap::paths::{assemble, AssemblerConfig};
use leap::{load_edge_list, split_edges, Graph, LoadOptions, Task};
use proptest::prelude::*;

fn arb_graph(directed: bool, weighted: bool) -> impl Strategy<Value = Graph> {
    (3usize..14).prop_flat_map(move |n| {
        prop::collection::vec((0..n, 0..n, -5.0f64..5.0), 1..4 * n).prop_map(move |triples| {
            let mut edges: Vec<_> = triples
                .into_iter()
                .filter(|(a, b, _)| a != b)
                .map(|(a, b, w)| (a, b, weighted.then_some(w)))
                .collect();
            if edges.is_empty() {
                edges.push((0, 1, weighted.then_some(1.0)));
            }
            Graph::from_edges(n, directed, edges).unwrap()
        })
    })
}

fn labelled_edges(g: &Graph) -> BTreeMap<(String, String), Option<u64>> {
    g.edges()
        .iter()
        .map(|e| {
            let (a, b) = (g.label(e.u).to_string(), g.label(e.v).to_string());
            let key = if g.is_directed() || a < b { (a, b) } else { (b, a) };
            (key, e.weight.map(f64::to_bits))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_list_round_trip(g in (any::<bool>(), any::<bool>()).prop_flat_map(|(d, w)| arb_graph(d, w))) {
        let mut text = Vec::new();
        g.write_edge_list(&mut text).unwrap();
        let options = LoadOptions { directed: g.is_directed(), weighted: g.is_weighted(), ..Default::default() };
        let back = load_edge_list(text.as_slice(), options).unwrap();
        prop_assert_eq!(back.edge_count(), g.edge_count());
        prop_assert_eq!(labelled_edges(&back), labelled_edges(&g));
    }

    #[test]
    fn lp_split_partitions_edges(g in arb_graph(false, false), fraction in 0.1f64..0.6, seed in any::<u64>()) {
        prop_assume!(g.edge_count() >= 3);
        let n = g.node_count();
        prop_assume!(n * (n - 1) / 2 >= 2 * g.edge_count());
        let s = split_edges(&g, fraction, seed, Task::LinkPrediction).unwrap();
        let positives = |set: &leap::LabeledPairSet| -> HashSet<(usize, usize)> {
            set.iter().filter(|(_, y)| *y == 1.0).map(|(p, _)| p).collect()
        };
        let (train_pos, test_pos) = (positives(&s.train_set), positives(&s.test_set));
        prop_assert!(train_pos.is_disjoint(&test_pos));
        prop_assert_eq!(train_pos.len() + test_pos.len(), g.edge_count());
        for &(u, v) in &test_pos {
            prop_assert!(g.has_edge(u, v) && !s.train_graph.has_edge(u, v));
        }
        prop_assert_eq!(s.train_graph.edge_count(), train_pos.len());
        let mut negatives = HashSet::new();
        for set in [&s.train_set, &s.test_set] {
            let neg = set.iter().filter(|(_, y)| *y == 0.0).count();
            prop_assert_eq!(neg, set.len() - neg);
            for ((u, v), _) in set.iter().filter(|(_, y)| *y == 0.0) {
                prop_assert!(!g.has_edge(u, v));
                prop_assert!(negatives.insert((u, v)));
            }
        }
        let again = split_edges(&g, fraction, seed, Task::LinkPrediction).unwrap();
        prop_assert_eq!(again.test_set.pairs(), s.test_set.pairs());
    }

    #[test]
    fn assembled_paths_are_simple_and_exact_length(g in arb_graph(false, false), cap in 1usize..6) {
        let cfg = AssemblerConfig { lengths: vec![2, 3, 4], cap, ..Default::default() };
        for (u, v) in [(0, 1), (0, 2), (1, 2)] {
            let sets = assemble(&g, u, v, &cfg).unwrap();
            for set in &sets {
                prop_assert!(set.len() <= cap);
                for p in &set.paths {
                    let nodes = p.nodes();
                    prop_assert_eq!(p.len(), set.length);
                    prop_assert_eq!((nodes[0], *nodes.last().unwrap()), (u, v));
                    prop_assert_eq!(nodes.iter().collect::<HashSet<_>>().len(), nodes.len());
                    prop_assert!(nodes.windows(2).all(|w| g.has_edge(w[0], w[1])));
                }
            }
        }
    }
}
