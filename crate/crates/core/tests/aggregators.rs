mod common;

use common::{check_gradients, random_array, readout, reference_lstm, rng};
use leap::tensor::{Activation, Array, BoundParams, ParamStore, Tape, Var};
use leap::{AggregatorKind, AggregatorParams, AggregatorWidths, Path, PathSet, VectorizedPathSet};
use proptest::prelude::*;

fn pathset(paths: &[Vec<usize>]) -> PathSet {
    PathSet { length: paths[0].len() - 1, paths: paths.iter().cloned().map(Path::new).collect(), truncated: false }
}

fn small_widths(act: Activation) -> AggregatorWidths {
    AggregatorWidths { dense: 3, inner_lstm: 3, outer_lstm: 2, conv_filters: 3, activation: act }
}

fn build(kind: AggregatorKind, length: usize, k: usize, edge: usize, widths: &AggregatorWidths, seed: u64) -> (ParamStore, AggregatorParams) {
    let mut store = ParamStore::new();
    let agg = AggregatorParams::new(kind, length, k, edge, widths, &mut store, "agg", &mut rng(seed)).unwrap();
    (store, agg)
}

fn evaluate(store: &ParamStore, agg: &AggregatorParams, table: &Array, paths: &PathSet) -> Vec<f64> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false).unwrap();
    let t = tape.constant(table.clone()).unwrap();
    let v = VectorizedPathSet::build(&mut tape, t, paths, None, None).unwrap();
    let out = agg.aggregate(&mut tape, &bound, &v).unwrap();
    tape.value(out).data().to_vec()
}

fn rows(table: &Array, nodes: &[usize]) -> Vec<Vec<f64>> {
    let k = table.shape()[1];
    nodes.iter().map(|&i| table.data()[i * k..(i + 1) * k].to_vec()).collect()
}

fn column_max(states: &[Vec<f64>]) -> Vec<f64> {
    (0..states[0].len()).map(|j| states.iter().map(|s| s[j]).fold(f64::NEG_INFINITY, f64::max)).collect()
}

fn lstm_weights(store: &ParamStore, prefix: &str) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let get = |n: &str| store.get(store.find(&format!("{prefix}.{n}")).unwrap()).data().to_vec();
    (get("wx"), get("wh"), get("b"))
}

#[test]
fn seqofseq_matches_scripted_recurrence() {
    let (store, agg) = build(AggregatorKind::SeqOfSeq, 3, 2, 0, &small_widths(Activation::Relu), 5);
    let table = random_array(&[6, 2], 1.0, &mut rng(6));
    let paths = vec![vec![0, 1, 2, 5], vec![0, 3, 4, 5]];
    let got = evaluate(&store, &agg, &table, &pathset(&paths));

    let (iwx, iwh, ib) = lstm_weights(&store, "agg.inner");
    let (owx, owh, ob) = lstm_weights(&store, "agg.outer");
    let inner: Vec<Vec<f64>> =
        paths.iter().map(|p| column_max(&reference_lstm(&rows(&table, p), &iwx, &iwh, &ib, 3))).collect();
    let expected = column_max(&reference_lstm(&inner, &owx, &owh, &ob, 2));
    assert_eq!(got.len(), 2);
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-14, "{got:?} vs {expected:?}");
    }
}

#[test]
fn seqofseq_single_path_is_one_outer_step() {
    let (store, agg) = build(AggregatorKind::SeqOfSeq, 2, 1, 0, &small_widths(Activation::Relu), 9);
    let table = Array::matrix(3, 1, vec![0.4, -0.2, 0.9]).unwrap();
    let got = evaluate(&store, &agg, &table, &pathset(&[vec![0, 1, 2]]));
    let (iwx, iwh, ib) = lstm_weights(&store, "agg.inner");
    let (owx, owh, ob) = lstm_weights(&store, "agg.outer");
    let inner = column_max(&reference_lstm(&rows(&table, &[0, 1, 2]), &iwx, &iwh, &ib, 3));
    let outer = reference_lstm(&[inner], &owx, &owh, &ob, 2);
    assert_eq!(outer.len(), 1);
    for (g, e) in got.iter().zip(&outer[0]) {
        assert!((g - e).abs() < 1e-14);
    }
}

#[test]
fn edgeconv_window_sum_feeds_the_outer_lstm() {
    let widths = AggregatorWidths { conv_filters: 1, outer_lstm: 2, activation: Activation::Identity, ..Default::default() };
    let (mut store, agg) = build(AggregatorKind::EdgeConv, 2, 1, 0, &widths, 3);
    let k = store.find("agg.conv.k").unwrap();
    *store.get_mut(k) = Array::matrix(1, 2, vec![1.0, 1.0]).unwrap();
    let table = Array::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
    let got = evaluate(&store, &agg, &table, &pathset(&[vec![0, 1, 2]]));
    // windows (1,2) and (2,3) give 3 and 5; the max, 5, is the only outer input
    let (owx, owh, ob) = lstm_weights(&store, "agg.outer");
    let expected = reference_lstm(&[vec![5.0]], &owx, &owh, &ob, 2);
    for (g, e) in got.iter().zip(&expected[0]) {
        assert!((g - e).abs() < 1e-14);
    }
}

#[test]
fn edgeconv_edge_features_extend_the_window() {
    let widths = AggregatorWidths { conv_filters: 1, outer_lstm: 1, activation: Activation::Identity, ..Default::default() };
    let (mut store, agg) = build(AggregatorKind::EdgeConv, 2, 1, 1, &widths, 3);
    let k = store.find("agg.conv.k").unwrap();
    *store.get_mut(k) = Array::matrix(1, 3, vec![1.0, 1.0, 10.0]).unwrap();
    let table = Array::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
    let ps = pathset(&[vec![0, 1, 2]]);

    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false).unwrap();
    let t = tape.constant(table).unwrap();
    let feature = |a: usize, b: usize| vec![(a + b) as f64 * 0.1];
    let v = VectorizedPathSet::build(&mut tape, t, &ps, None, Some((&feature, 1))).unwrap();
    assert_eq!(tape.value(v.edges.unwrap()).data(), &[0.1, 0.30000000000000004]);
    let out = agg.aggregate(&mut tape, &bound, &v).unwrap();
    let got = tape.value(out).data().to_vec();
    // windows: 1+2+10*0.1 = 4, 2+3+10*0.3 = 8
    let (owx, owh, ob) = lstm_weights(&store, "agg.outer");
    let expected = reference_lstm(&[vec![8.0]], &owx, &owh, &ob, 1);
    assert!((got[0] - expected[0][0]).abs() < 1e-12);

    // configured for edge features but given none
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape, false).unwrap();
    let t = tape.constant(Array::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
    let v = VectorizedPathSet::build(&mut tape, t, &ps, None, None).unwrap();
    assert!(agg.aggregate(&mut tape, &bound, &v).is_err());
}

#[test]
fn output_widths_follow_the_config() {
    let widths = AggregatorWidths::default();
    for kind in AggregatorKind::ALL {
        let (store, agg) = build(kind, 3, 4, 0, &widths, 1);
        let table = random_array(&[8, 4], 1.0, &mut rng(2));
        let out = evaluate(&store, &agg, &table, &pathset(&[vec![0, 1, 2, 7], vec![0, 3, 4, 7]]));
        let expected = match kind {
            AggregatorKind::AvgPool => 16,
            AggregatorKind::DenseMax => widths.dense,
            _ => widths.outer_lstm,
        };
        assert_eq!(out.len(), expected, "{kind:?}");
        assert_eq!(agg.output_width(), expected);
    }
}

#[test]
fn padding_does_not_change_any_aggregator() {
    for kind in AggregatorKind::ALL {
        let (store, agg) = build(kind, 3, 2, 0, &small_widths(Activation::Tanh), 4);
        let table = random_array(&[6, 2], 1.0, &mut rng(8));
        let ps = pathset(&[vec![0, 1, 2, 5], vec![0, 3, 4, 5]]);
        let run = |pad: Option<usize>| {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape, false).unwrap();
            let t = tape.constant(table.clone()).unwrap();
            let v = VectorizedPathSet::build(&mut tape, t, &ps, pad, None).unwrap();
            let out = agg.aggregate(&mut tape, &bound, &v).unwrap();
            tape.value(out).data().to_vec()
        };
        assert_eq!(run(None), run(Some(6)), "{kind:?}");
    }
}

#[test]
fn sequential_aggregators_are_reproducible_bit_for_bit() {
    for kind in [AggregatorKind::SeqOfSeq, AggregatorKind::EdgeConv] {
        let table = random_array(&[6, 2], 1.0, &mut rng(8));
        let ps = pathset(&[vec![0, 1, 2, 5], vec![0, 3, 4, 5]]);
        let (s1, a1) = build(kind, 3, 2, 0, &small_widths(Activation::Relu), 4);
        let (s2, a2) = build(kind, 3, 2, 0, &small_widths(Activation::Relu), 4);
        let x: Vec<u64> = evaluate(&s1, &a1, &table, &ps).iter().map(|v| v.to_bits()).collect();
        let y: Vec<u64> = evaluate(&s2, &a2, &table, &ps).iter().map(|v| v.to_bits()).collect();
        assert_eq!(x, y);
    }
}

/// Finite differences over the embedding table and every aggregator weight.
fn gradcheck(kind: AggregatorKind, edge_width: usize) {
    let widths = small_widths(Activation::Tanh);
    let (store, agg) = build(kind, 3, 2, edge_width, &widths, 21);
    let table = random_array(&[6, 2], 1.0, &mut rng(22));
    let ps = pathset(&[vec![0, 1, 2, 5], vec![0, 3, 4, 5], vec![0, 4, 3, 5]]);
    let mut inputs = vec![table];
    inputs.extend(store.ids().map(|id| store.get(id).clone()));
    let feature = |a: usize, b: usize| vec![0.3 * a as f64 - 0.2 * b as f64];

    let worst = check_gradients(&inputs, |tape: &mut Tape, vars: &[Var]| {
        let bound = BoundParams::from_vars(vars[1..].to_vec());
        let features = (edge_width > 0).then_some((&feature as &dyn Fn(usize, usize) -> Vec<f64>, edge_width));
        let v = VectorizedPathSet::build(tape, vars[0], &ps, Some(4), features).unwrap();
        let out = agg.aggregate(tape, &bound, &v).unwrap();
        readout(tape, out, 99)
    });
    assert!(worst < common::FD_REL_TOL);
}

#[test]
fn gradcheck_avgpool() {
    gradcheck(AggregatorKind::AvgPool, 0);
}

#[test]
fn gradcheck_densemax() {
    gradcheck(AggregatorKind::DenseMax, 0);
}

#[test]
fn gradcheck_seqofseq() {
    gradcheck(AggregatorKind::SeqOfSeq, 0);
}

#[test]
fn gradcheck_edgeconv() {
    gradcheck(AggregatorKind::EdgeConv, 0);
}

#[test]
fn gradcheck_edgeconv_with_edge_features() {
    gradcheck(AggregatorKind::EdgeConv, 1);
}

fn arb_paths() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<usize>, u64)> {
    (1usize..7, 2usize..5).prop_flat_map(|(n, l)| {
        let path = prop::collection::vec(0usize..10, l + 1);
        (prop::collection::vec(path, n), Just(n), any::<u64>())
            .prop_flat_map(|(paths, n, seed)| (Just(paths), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), Just(seed)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unordered_aggregators_ignore_path_order((paths, perm, seed) in arb_paths()) {
        let table = random_array(&[10, 2], 1.0, &mut rng(seed));
        let shuffled: Vec<Vec<usize>> = perm.iter().map(|&i| paths[i].clone()).collect();
        let l = paths[0].len() - 1;
        for kind in [AggregatorKind::AvgPool, AggregatorKind::DenseMax] {
            let (store, agg) = build(kind, l, 2, 0, &small_widths(Activation::Relu), seed);
            let a = evaluate(&store, &agg, &table, &pathset(&paths));
            let b = evaluate(&store, &agg, &table, &pathset(&shuffled));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{kind:?}: {a:?} vs {b:?}");
            }
        }
    }
}
