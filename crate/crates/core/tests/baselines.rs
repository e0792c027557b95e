use leap::baselines::{adamic_adar, katz, katz_from, pagerank, pagerank_with};
use leap::metrics::{auc, pcc, rmse};
use leap::Graph;
use proptest::prelude::*;

fn arb_graph(directed: bool) -> impl Strategy<Value = Graph> {
    (2usize..12).prop_flat_map(move |n| {
        prop::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |pairs| {
            let edges = pairs.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a, b, None));
            Graph::from_edges(n, directed, edges).unwrap()
        })
    })
}

fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut hits = 0.0;
    let mut total = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1.0 && labels[j] == 0.0 {
                total += 1.0;
                if scores[i] > scores[j] {
                    hits += 1.0;
                } else if scores[i] == scores[j] {
                    hits += 0.5;
                }
            }
        }
    }
    hits / total
}

fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for x in 0..n {
        for &y in g.out_neighbors(x) {
            a[x][y] = 1.0;
        }
    }
    a
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

/// Solves `(I - d M) s = (1 - d) / n` by Gaussian elimination, where `M`
/// is the column-stochastic transition matrix with uniform dangling columns.
fn dense_pagerank(g: &Graph, d: f64) -> Vec<f64> {
    let n = g.node_count();
    let mut m = vec![vec![0.0; n]; n];
    for x in 0..n {
        let out = g.out_neighbors(x);
        if out.is_empty() {
            (0..n).for_each(|w| m[w][x] = 1.0 / n as f64);
        } else {
            out.iter().for_each(|&w| m[w][x] = 1.0 / out.len() as f64);
        }
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| f64::from(u8::from(i == j)) - d * m[i][j]).collect();
            row.push((1.0 - d) / n as f64);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn auc_matches_pairwise_oracle(points in prop::collection::vec((0u8..20, any::<bool>()), 2..200)) {
        let scores: Vec<f64> = points.iter().map(|(s, _)| f64::from(*s) / 7.0).collect();
        let labels: Vec<f64> = points.iter().map(|(_, y)| f64::from(u8::from(*y))).collect();
        let both = labels.contains(&0.0) && labels.contains(&1.0);
        match auc(&scores, &labels) {
            Ok(a) => prop_assert_eq!(a, brute_auc(&scores, &labels)),
            Err(_) => prop_assert!(!both),
        }
    }

    #[test]
    fn rmse_and_pcc_match_textbook_formulas(values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..100)) {
        let (p, t): (Vec<f64>, Vec<f64>) = values.into_iter().unzip();
        let n = p.len() as f64;
        let mse = p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        prop_assert!((rmse(&p, &t).unwrap() - mse.sqrt()).abs() < 1e-12);

        let (sx, sy) = (p.iter().sum::<f64>(), t.iter().sum::<f64>());
        let sxy: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
        let sxx: f64 = p.iter().map(|a| a * a).sum();
        let syy: f64 = t.iter().map(|b| b * b).sum();
        let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        prop_assert!((pcc(&p, &t).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn heuristics_are_symmetric_on_undirected_graphs(g in arb_graph(false)) {
        let n = g.node_count();
        for u in 0..n {
            for v in u + 1..n {
                prop_assert_eq!(adamic_adar(&g, u, v), adamic_adar(&g, v, u));
                let (a, b) = (katz(&g, u, v, 0.05, 4), katz(&g, v, u, 0.05, 4));
                prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn katz_matches_adjacency_powers_and_grows_with_length(g in arb_graph(true), beta in 0.01f64..0.3) {
        let a = dense_adjacency(&g);
        let mut power = a.clone();
        let mut oracle = vec![vec![0.0; g.node_count()]; g.node_count()];
        let mut factor = 1.0;
        let mut previous = vec![0.0; g.node_count()];
        for l in 1..=5 {
            factor *= beta;
            for i in 0..oracle.len() {
                for j in 0..oracle.len() {
                    oracle[i][j] += factor * power[i][j];
                }
            }
            let row = katz_from(&g, 0, beta, l);
            for v in 0..row.len() {
                prop_assert!((row[v] - oracle[0][v]).abs() <= 1e-12 * oracle[0][v].max(1.0));
                prop_assert!(row[v] >= previous[v]);
            }
            previous = row;
            power = matmul(&power, &a);
        }
    }

    #[test]
    fn pagerank_is_a_distribution_matching_the_linear_solve(g in arb_graph(true)) {
        let s = pagerank(&g, 0.85, 1e-12).unwrap();
        prop_assert!(s.iter().all(|&x| x >= 0.0));
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        for (a, b) in s.iter().zip(dense_pagerank(&g, 0.85)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let rooted = pagerank_with(&g, 0.85, 1e-12, 2000, Some(0)).unwrap();
        prop_assert!((rooted.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}
