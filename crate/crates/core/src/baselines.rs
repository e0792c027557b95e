//! Classical pair scores used as comparison points.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::split::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AdamicAdar,
    Katz,
    #[serde(rename = "pagerank")]
    PageRank,
    Reciprocal,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::AdamicAdar, Method::Katz, Method::PageRank, Method::Reciprocal];

    pub fn name(self) -> &'static str {
        match self {
            Method::AdamicAdar => "adamic-adar",
            Method::Katz => "katz",
            Method::PageRank => "pagerank",
            Method::Reciprocal => "reciprocal",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|m| m.name() == key).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|m| m.name()).collect();
            Error::InvalidArgument(format!("unknown baseline {s:?}; available: {}", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub methods: Vec<Method>,
    pub katz_beta: f64,
    pub katz_max_length: usize,
    pub pagerank_damping: f64,
    pub pagerank_tol: f64,
    pub pagerank_max_iter: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            methods: Vec::new(),
            katz_beta: 0.005,
            katz_max_length: 5,
            pagerank_damping: 0.85,
            pagerank_tol: 1e-10,
            pagerank_max_iter: 1000,
        }
    }
}

/// Sum of `1 / ln(deg w)` over common neighbours `w`.
pub fn adamic_adar(g: &Graph, u: NodeId, v: NodeId) -> f64 {
    let (a, b) = (g.neighbors(u), g.neighbors(v));
    let (mut i, mut j, mut total) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let d = g.degree(a[i]);
                // a common neighbour of two distinct nodes has degree >= 2
                if d >= 2 {
                    total += 1.0 / (d as f64).ln();
                }
                i += 1;
                j += 1;
            }
        }
    }
    total
}

/// Truncated Katz index from `u` to every node: `sum_{l=1..l_max} beta^l
/// walks_l(u, .)`, by repeated sparse propagation along out-edges.
pub fn katz_from(g: &Graph, u: NodeId, beta: f64, l_max: usize) -> Vec<f64> {
    let n = g.node_count();
    let mut walks = vec![0.0; n];
    walks[u] = 1.0;
    let mut score = vec![0.0; n];
    let mut factor = 1.0;
    for _ in 0..l_max {
        let mut next = vec![0.0; n];
        for (z, &c) in walks.iter().enumerate() {
            if c != 0.0 {
                for &w in g.out_neighbors(z) {
                    next[w] += c;
                }
            }
        }
        factor *= beta;
        score.iter_mut().zip(&next).for_each(|(s, c)| *s += factor * c);
        walks = next;
    }
    score
}

pub fn katz(g: &Graph, u: NodeId, v: NodeId, beta: f64, l_max: usize) -> f64 {
    katz_from(g, u, beta, l_max)[v]
}

/// Power iteration until the L1 change drops below `tol`. With a `root`,
/// teleports and dangling mass return to it (personalised PageRank);
/// otherwise both spread uniformly.
pub fn pagerank_with(g: &Graph, damping: f64, tol: f64, max_iter: usize, root: Option<NodeId>) -> Result<Vec<f64>> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::InvalidGraph("PageRank of an empty graph".into()));
    }
    if !(0.0..1.0).contains(&damping) {
        return Err(Error::InvalidArgument(format!("damping {damping} not in [0, 1)")));
    }
    let base = |x: NodeId| match root {
        Some(r) => f64::from(u8::from(x == r)),
        None => 1.0 / n as f64,
    };
    let mut s: Vec<f64> = (0..n).map(base).collect();
    for _ in 0..max_iter {
        let mut next = vec![0.0; n];
        let mut dangling = 0.0;
        for (x, &sx) in s.iter().enumerate() {
            let out = g.out_neighbors(x);
            if out.is_empty() {
                dangling += sx;
            } else {
                let share = sx / out.len() as f64;
                for &w in out {
                    next[w] += share;
                }
            }
        }
        for (x, v) in next.iter_mut().enumerate() {
            *v = damping * (*v + dangling * base(x)) + (1.0 - damping) * base(x);
        }
        let change: f64 = next.iter().zip(&s).map(|(a, b)| (a - b).abs()).sum();
        s = next;
        if change < tol {
            return Ok(s);
        }
    }
    Err(Error::NoConvergence(max_iter))
}

pub fn pagerank(g: &Graph, damping: f64, tol: f64) -> Result<Vec<f64>> {
    pagerank_with(g, damping, tol, 1000, None)
}

/// Weight of the reverse edge `v -> u`, or 0.
pub fn reciprocal(g: &Graph, u: NodeId, v: NodeId) -> f64 {
    g.weight(v, u).unwrap_or(0.0)
}

/// Scores every pair with `method`. Link prediction uses the heuristic value
/// as a ranking score; for weight regression PageRank predicts
/// `(s_u - s_v) / (max s - min s)`.
pub fn score_pairs(method: Method, g: &Graph, pairs: &[(NodeId, NodeId)], task: Task, cfg: &BaselineConfig) -> Result<Vec<f64>> {
    for &(u, v) in pairs {
        if u >= g.node_count() || v >= g.node_count() {
            return Err(Error::InvalidArgument(format!("pair ({u}, {v}) outside graph")));
        }
    }
    match method {
        Method::AdamicAdar => Ok(pairs.par_iter().map(|&(u, v)| adamic_adar(g, u, v)).collect()),
        Method::Reciprocal => Ok(pairs.iter().map(|&(u, v)| reciprocal(g, u, v)).collect()),
        Method::Katz => {
            let rows = per_source(pairs.iter().map(|p| p.0), |u| Ok(katz_from(g, u, cfg.katz_beta, cfg.katz_max_length)))?;
            Ok(pairs.iter().map(|&(u, v)| rows[&u][v]).collect())
        }
        Method::PageRank => match task {
            Task::WeightRegression => {
                let s = pagerank_with(g, cfg.pagerank_damping, cfg.pagerank_tol, cfg.pagerank_max_iter, None)?;
                let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                let range = if hi > lo { hi - lo } else { 1.0 };
                Ok(pairs.iter().map(|&(u, v)| (s[u] - s[v]) / range).collect())
            }
            Task::LinkPrediction => {
                let nodes = pairs.iter().flat_map(|&(u, v)| [u, v]);
                let rows = per_source(nodes, |x| {
                    pagerank_with(g, cfg.pagerank_damping, cfg.pagerank_tol, cfg.pagerank_max_iter, Some(x))
                })?;
                Ok(pairs.iter().map(|&(u, v)| rows[&u][v] + rows[&v][u]).collect())
            }
        },
    }
}

fn per_source<I, F>(sources: I, f: F) -> Result<HashMap<NodeId, Vec<f64>>>
where
    I: Iterator<Item = NodeId>,
    F: Fn(NodeId) -> Result<Vec<f64>> + Sync,
{
    let unique: BTreeSet<NodeId> = sources.collect();
    unique.into_par_iter().map(|x| f(x).map(|row| (x, row))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::from_edges(3, false, [(0, 1, None), (1, 2, None), (0, 2, None)]).unwrap()
    }

    #[test]
    fn adamic_adar_examples() {
        let g = triangle();
        assert!((adamic_adar(&g, 0, 1) - 1.0 / 2f64.ln()).abs() < 1e-15);
        // square 0-1-2-3-0: 0 and 2 share 1 and 3, both of degree 2
        let sq = Graph::from_edges(4, false, [(0, 1, None), (1, 2, None), (2, 3, None), (3, 0, None)]).unwrap();
        assert!((adamic_adar(&sq, 0, 2) - 2.0 / 2f64.ln()).abs() < 1e-15);
        assert_eq!(adamic_adar(&sq, 0, 1), 0.0);
    }

    #[test]
    fn katz_examples() {
        let edge = Graph::from_edges(2, false, [(0, 1, None)]).unwrap();
        assert_eq!(katz(&edge, 0, 1, 0.1, 1), 0.1);
        assert!((katz(&triangle(), 0, 1, 0.1, 3) - 0.113).abs() < 1e-15);
        assert_eq!(katz(&triangle(), 0, 1, 0.0, 3), 0.0);
    }

    #[test]
    fn pagerank_examples() {
        let cycle = Graph::from_edges(5, false, (0..5).map(|i| (i, (i + 1) % 5, None))).unwrap();
        let s = pagerank(&cycle, 0.85, 1e-12).unwrap();
        assert!(s.iter().all(|x| (x - 0.2).abs() < 1e-12));
        let star = Graph::from_edges(5, false, (1..5).map(|i| (0, i, None))).unwrap();
        let s = pagerank(&star, 0.85, 1e-12).unwrap();
        assert!(s[1..].iter().all(|&x| x < s[0]));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        // directed chain with a dangling end
        let chain = Graph::from_edges(3, true, [(0, 1, None), (1, 2, None)]).unwrap();
        let s = pagerank(&chain, 0.85, 1e-12).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(s[2] > s[1] && s[1] > s[0]);
        assert!(matches!(pagerank_with(&chain, 0.85, 0.0, 5, None), Err(Error::NoConvergence(5))));
    }

    #[test]
    fn reciprocal_examples() {
        let g = Graph::from_edges(3, true, [(1, 0, Some(0.5)), (1, 2, Some(-0.3))]).unwrap();
        assert_eq!(reciprocal(&g, 0, 1), 0.5);
        assert_eq!(reciprocal(&g, 1, 2), 0.0);
        let u = Graph::from_edges(2, false, [(0, 1, Some(0.7))]).unwrap();
        assert_eq!(reciprocal(&u, 0, 1), 0.7);
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let cfg: BaselineConfig = toml::from_str(&format!("methods = [\"{}\"]", m.name())).unwrap();
            assert_eq!(cfg.methods, vec![m]);
        }
        let err = "simrank".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("adamic-adar") && err.contains("reciprocal"));
    }

    #[test]
    fn wsn_pagerank_is_a_scaled_difference() {
        let g = Graph::from_edges(4, true, [(0, 1, Some(0.5)), (2, 1, Some(0.2)), (1, 3, Some(-1.0))]).unwrap();
        let p = score_pairs(Method::PageRank, &g, &[(0, 3), (3, 0), (1, 1)], Task::WeightRegression, &BaselineConfig::default()).unwrap();
        assert!(p.iter().all(|x| x.abs() <= 1.0));
        assert_eq!(p[0], -p[1]);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn rooted_pagerank_prefers_close_nodes() {
        let path = Graph::from_edges(5, false, (0..4).map(|i| (i, i + 1, None))).unwrap();
        let s = score_pairs(Method::PageRank, &path, &[(0, 1), (0, 4)], Task::LinkPrediction, &BaselineConfig::default()).unwrap();
        assert!(s[0] > s[1]);
    }
}
