//! Train/test partitioning and negative pair sampling.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// Binary link existence; labels in {0, 1}.
    #[serde(rename = "lp")]
    LinkPrediction,
    /// Signed edge weight regression; labels in [-1, 1].
    #[serde(rename = "wsn")]
    WeightRegression,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::LinkPrediction => "lp",
            Task::WeightRegression => "wsn",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp" | "link_prediction" => Ok(Task::LinkPrediction),
            "wsn" | "wsn_regression" => Ok(Task::WeightRegression),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?} (expected lp|wsn)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledPairSet {
    pairs: Vec<(NodeId, NodeId)>,
    labels: Vec<f64>,
}

impl LabeledPairSet {
    pub fn new(pairs: Vec<(NodeId, NodeId)>, labels: Vec<f64>) -> Result<Self> {
        if pairs.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} pairs but {} labels",
                pairs.len(),
                labels.len()
            )));
        }
        let mut seen = HashSet::with_capacity(pairs.len());
        for p in &pairs {
            if !seen.insert(*p) {
                return Err(Error::InvalidArgument(format!("pair {p:?} appears twice")));
            }
        }
        Ok(Self { pairs, labels })
    }

    pub fn pairs(&self) -> &[(NodeId, NodeId)] {
        &self.pairs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, NodeId), f64)> + '_ {
        self.pairs.iter().copied().zip(self.labels.iter().copied())
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            pairs: indices.iter().map(|&i| self.pairs[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Randomly moves `fraction` of the pairs into a second set.
    pub fn holdout(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!("holdout fraction {fraction} not in [0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seed::rng(seed, &[0x401d]));
        let n_hold = (fraction * self.len() as f64).round() as usize;
        let (held, kept) = order.split_at(n_hold);
        let mut kept = kept.to_vec();
        let mut held = held.to_vec();
        kept.sort_unstable();
        held.sort_unstable();
        Ok((self.subset(&kept), self.subset(&held)))
    }

    /// `u,v,label` lines in the graph's original ids.
    pub fn write_csv<W: Write>(&self, g: &Graph, mut out: W) -> Result<()> {
        writeln!(out, "u,v,label")?;
        for ((u, v), y) in self.iter() {
            writeln!(out, "{},{},{}", g.label(u), g.label(v), y)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(g: &Graph, source: R) -> Result<Self> {
        let ids = g.lookup_label();
        let mut pairs = Vec::new();
        let mut labels = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("u,")) {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("expected `u,v,label`, got {line:?}")));
            }
            let node = |tok: &str| {
                ids.get(tok).copied().ok_or_else(|| err(format!("unknown node {tok:?}")))
            };
            let u = node(fields[0])?;
            let v = node(fields[1])?;
            let y = fields[2].parse::<f64>().map_err(|_| err(format!("bad label {:?}", fields[2])))?;
            pairs.push((u, v));
            labels.push(y);
        }
        Self::new(pairs, labels)
    }
}

#[derive(Clone, Debug)]
pub struct SplitResult {
    pub train_graph: Graph,
    pub train_set: LabeledPairSet,
    pub test_set: LabeledPairSet,
    pub seed: u64,
}

fn canonical(g: &Graph, (u, v): (NodeId, NodeId)) -> (NodeId, NodeId) {
    if g.is_directed() {
        (u, v)
    } else {
        (u.min(v), u.max(v))
    }
}

/// Removes a seeded uniform `test_fraction` of the edges from the graph.
///
/// Link prediction sets get an equal number of negative pairs per side,
/// drawn once from the non-edges of the full graph. Weight regression sets
/// hold only true edges, labelled with their weights.
pub fn split_edges(g: &Graph, test_fraction: f64, seed: u64, task: Task) -> Result<SplitResult> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    if task == Task::WeightRegression && !g.is_weighted() {
        return Err(Error::InvalidArgument("weight regression needs a weighted graph".into()));
    }
    let m = g.edge_count();
    let n_test = (test_fraction * m as f64).round() as usize;
    if n_test >= m {
        return Err(Error::InvalidArgument(format!(
            "removing {n_test} of {m} edges leaves no training edges"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seed::rng(seed, &[0x5b1e]));
    let (test_idx, train_idx) = order.split_at(n_test);
    let mut test_idx = test_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();

    let edges = g.edges();
    let train_graph = g.with_edges(train_idx.iter().map(|&i| (edges[i].u, edges[i].v, edges[i].weight)))?;
    let positives = |idx: &[usize]| -> Vec<(NodeId, NodeId)> {
        idx.iter().map(|&i| (edges[i].u, edges[i].v)).collect()
    };

    let (train_set, test_set) = match task {
        Task::LinkPrediction => {
            let negatives = sample_negative_pairs(g, m, seed::derive(seed, &[0x4e67]), &HashSet::new())?;
            let (test_neg, train_neg) = negatives.split_at(n_test);
            let build = |pos: Vec<(NodeId, NodeId)>, neg: &[(NodeId, NodeId)]| {
                let mut labels = vec![1.0; pos.len()];
                labels.extend(std::iter::repeat_n(0.0, neg.len()));
                let mut pairs = pos;
                pairs.extend_from_slice(neg);
                LabeledPairSet::new(pairs, labels)
            };
            (build(positives(&train_idx), train_neg)?, build(positives(&test_idx), test_neg)?)
        }
        Task::WeightRegression => {
            let weights = |idx: &[usize]| -> Vec<f64> {
                idx.iter().map(|&i| edges[i].weight.unwrap_or(0.0)).collect()
            };
            (
                LabeledPairSet::new(positives(&train_idx), weights(&train_idx))?,
                LabeledPairSet::new(positives(&test_idx), weights(&test_idx))?,
            )
        }
    };
    Ok(SplitResult { train_graph, train_set, test_set, seed })
}

/// Draws `count` distinct node pairs that are not edges of `g` and not in
/// `exclude`. Pairs are unordered (`u < v`) for undirected graphs.
///
/// Uses rejection sampling, falling back to enumerating every admissible
/// pair once `1000 * count` draws have been spent.
pub fn sample_negative_pairs(
    g: &Graph,
    count: usize,
    seed: u64,
    exclude: &HashSet<(NodeId, NodeId)>,
) -> Result<Vec<(NodeId, NodeId)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = g.node_count();
    let total_pairs = if g.is_directed() { n * n.saturating_sub(1) } else { n * n.saturating_sub(1) / 2 };
    let excluded: HashSet<(NodeId, NodeId)> = exclude
        .iter()
        .filter(|&&(u, v)| u != v && u < n && v < n)
        .map(|&p| canonical(g, p))
        .filter(|&(u, v)| !g.has_edge(u, v))
        .collect();
    let available = total_pairs - g.edge_count() - excluded.len();
    if count > available {
        return Err(Error::InsufficientNonEdges { requested: count, available });
    }

    let admissible = |p: (NodeId, NodeId)| p.0 != p.1 && !g.has_edge(p.0, p.1) && !excluded.contains(&p);
    let mut rng = seed::rng(seed, &[0x4e65]);
    let mut chosen: Vec<(NodeId, NodeId)> = Vec::with_capacity(count);
    let mut seen: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(count);
    let budget = 1000usize.saturating_mul(count);
    let mut attempts = 0usize;
    while chosen.len() < count && attempts < budget {
        attempts += 1;
        let p = canonical(g, (rng.gen_range(0..n), rng.gen_range(0..n)));
        if admissible(p) && seen.insert(p) {
            chosen.push(p);
        }
    }
    if chosen.len() < count {
        let mut rest: Vec<(NodeId, NodeId)> = Vec::new();
        for u in 0..n {
            let lo = if g.is_directed() { 0 } else { u + 1 };
            for v in lo..n {
                let p = (u, v);
                if admissible(p) && !seen.contains(&p) {
                    rest.push(p);
                }
            }
        }
        rest.shuffle(&mut rng);
        chosen.extend(rest.into_iter().take(count - chosen.len()));
    }
    Ok(chosen)
}
