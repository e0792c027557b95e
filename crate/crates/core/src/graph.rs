//! Immutable graph store with dense node ids.
//!
//! Nodes are re-indexed to `0..n` on load; the original tokens are kept so
//! that edge lists, splits and embeddings can be written back in the source
//! id space. Undirected graphs store every edge once as `(min, max)`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub weight: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Whitespace,
    Char(char),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub directed: bool,
    pub weighted: bool,
    pub delimiter: Delimiter,
}

#[derive(Clone, Debug)]
pub struct Graph {
    node_count: usize,
    directed: bool,
    edges: Vec<Edge>,
    index: HashMap<(NodeId, NodeId), usize>,
    out_adj: Vec<Vec<NodeId>>,
    in_adj: Vec<Vec<NodeId>>,
    // union of in- and out-neighbours; equals out_adj for undirected graphs
    adj: Vec<Vec<NodeId>>,
    labels: Vec<String>,
}

impl Graph {
    /// Builds a graph from `(u, v, weight)` triples over nodes `0..node_count`.
    ///
    /// Later duplicates replace earlier ones. Self-loops, out-of-range ids and
    /// mixed weighted/unweighted edges are rejected.
    pub fn from_edges<I>(node_count: usize, directed: bool, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId, Option<f64>)>,
    {
        let labels = (0..node_count).map(|i| i.to_string()).collect();
        Self::with_labels(labels, directed, edges)
    }

    pub fn with_labels<I>(labels: Vec<String>, directed: bool, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId, Option<f64>)>,
    {
        let node_count = labels.len();
        let mut index: HashMap<(NodeId, NodeId), usize> = HashMap::new();
        let mut list: Vec<Edge> = Vec::new();
        let mut weighted: Option<bool> = None;
        for (u, v, w) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) references a node outside 0..{node_count}"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            if let Some(w) = w {
                if !w.is_finite() {
                    return Err(Error::InvalidGraph(format!("non-finite weight on ({u}, {v})")));
                }
            }
            match weighted {
                None => weighted = Some(w.is_some()),
                Some(flag) if flag != w.is_some() => {
                    return Err(Error::InvalidGraph(
                        "either every edge carries a weight or none does".into(),
                    ))
                }
                _ => {}
            }
            let key = if directed { (u, v) } else { (u.min(v), u.max(v)) };
            match index.get(&key) {
                Some(&i) => list[i].weight = w,
                None => {
                    index.insert(key, list.len());
                    list.push(Edge { u: key.0, v: key.1, weight: w });
                }
            }
        }
        list.sort_by_key(|e| (e.u, e.v));
        let index = list.iter().enumerate().map(|(i, e)| ((e.u, e.v), i)).collect();

        let mut out_adj = vec![Vec::new(); node_count];
        let mut in_adj = vec![Vec::new(); node_count];
        for e in &list {
            out_adj[e.u].push(e.v);
            in_adj[e.v].push(e.u);
            if !directed {
                out_adj[e.v].push(e.u);
                in_adj[e.u].push(e.v);
            }
        }
        let mut adj = Vec::with_capacity(node_count);
        for x in 0..node_count {
            out_adj[x].sort_unstable();
            in_adj[x].sort_unstable();
            if directed {
                let mut both: Vec<NodeId> = out_adj[x].iter().chain(&in_adj[x]).copied().collect();
                both.sort_unstable();
                both.dedup();
                adj.push(both);
            } else {
                adj.push(out_adj[x].clone());
            }
        }

        Ok(Self { node_count, directed, edges: list, index, out_adj, in_adj, adj, labels })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn is_weighted(&self) -> bool {
        self.edges.first().is_some_and(|e| e.weight.is_some())
    }

    /// Edges sorted by `(u, v)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Whether the edge `u -> v` exists (either orientation when undirected).
    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_index(u, v).is_some()
    }

    fn edge_index(&self, u: NodeId, v: NodeId) -> Option<usize> {
        let key = if self.directed { (u, v) } else { (u.min(v), u.max(v)) };
        self.index.get(&key).copied()
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.edge_index(u, v).and_then(|i| self.edges[i].weight)
    }

    /// Weight of the connection between `a` and `b` ignoring direction:
    /// the `a -> b` edge when present, otherwise `b -> a`.
    pub fn link_weight(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.weight(a, b).or_else(|| self.weight(b, a))
    }

    pub fn out_neighbors(&self, x: NodeId) -> &[NodeId] {
        &self.out_adj[x]
    }

    pub fn in_neighbors(&self, x: NodeId) -> &[NodeId] {
        &self.in_adj[x]
    }

    /// Neighbours in the underlying undirected graph, sorted.
    pub fn neighbors(&self, x: NodeId) -> &[NodeId] {
        &self.adj[x]
    }

    pub fn degree(&self, x: NodeId) -> usize {
        self.adj[x].len()
    }

    pub fn out_degree(&self, x: NodeId) -> usize {
        self.out_adj[x].len()
    }

    pub fn label(&self, x: NodeId) -> &str {
        &self.labels[x]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn lookup_label(&self) -> HashMap<&str, NodeId> {
        self.labels.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    /// Same node set and labels, different edges.
    pub fn with_edges<I>(&self, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId, Option<f64>)>,
    {
        Self::with_labels(self.labels.clone(), self.directed, edges)
    }

    /// Scales every weight by the largest absolute weight so all weights lie
    /// in `[-1, 1]`.
    pub fn normalize_weights(&self) -> Result<Self> {
        if !self.is_weighted() {
            return Err(Error::InvalidArgument("normalize_weights needs a weighted graph".into()));
        }
        let max_abs = self
            .edges
            .iter()
            .filter_map(|e| e.weight)
            .fold(0.0_f64, |m, w| m.max(w.abs()));
        if max_abs == 0.0 {
            return Err(Error::InvalidArgument("all edge weights are zero".into()));
        }
        self.with_edges(self.edges.iter().map(|e| (e.u, e.v, e.weight.map(|w| w / max_abs))))
    }

    /// Writes the edge list in original ids, one edge per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.edges {
            match e.weight {
                Some(w) => writeln!(out, "{} {} {}", self.labels[e.u], self.labels[e.v], w)?,
                None => writeln!(out, "{} {}", self.labels[e.u], self.labels[e.v])?,
            }
        }
        Ok(())
    }

    /// Two-column `original internal` mapping.
    pub fn write_id_map<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, label) in self.labels.iter().enumerate() {
            writeln!(out, "{label} {i}")?;
        }
        Ok(())
    }
}

fn split_fields(line: &str, delimiter: Delimiter) -> Vec<&str> {
    match delimiter {
        Delimiter::Whitespace => line.split_whitespace().collect(),
        Delimiter::Char(c) => line.split(c).map(str::trim).collect(),
    }
}

/// Parses an edge list. Node tokens are assigned dense ids in order of first
/// appearance. Weighted files may carry trailing columns after the weight
/// (e.g. timestamps), which are ignored.
pub fn load_edge_list<R: BufRead>(source: R, options: LoadOptions) -> Result<Graph> {
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut raw: Vec<(NodeId, NodeId, Option<f64>)> = Vec::new();

    for (lineno, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = split_fields(trimmed, options.delimiter);
        let parse_err = |message: String| Error::Parse { line: lineno, message };
        if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(format!("expected `src dst [weight]`, got {trimmed:?}")));
        }
        let weight = if options.weighted {
            let token = fields
                .get(2)
                .ok_or_else(|| parse_err("missing weight column".into()))?;
            Some(
                token
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad weight {token:?}")))?,
            )
        } else {
            if fields.len() > 2 {
                return Err(parse_err("weight present but graph declared unweighted".into()));
            }
            None
        };
        let mut intern = |tok: &str| -> NodeId {
            if let Some(&id) = ids.get(tok) {
                return id;
            }
            let id = labels.len();
            ids.insert(tok.to_string(), id);
            labels.push(tok.to_string());
            id
        };
        let u = intern(fields[0]);
        let v = intern(fields[1]);
        if u == v {
            return Err(parse_err(format!("self-loop on {}", fields[0])));
        }
        raw.push((u, v, weight));
    }
    Graph::with_labels(labels, options.directed, raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str, options: LoadOptions) -> Result<Graph> {
        load_edge_list(text.as_bytes(), options)
    }

    #[test]
    fn triangle_from_three_lines() {
        let g = load("1 2\n2 3\n1 3\n", LoadOptions::default()).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
        assert!(g.has_edge(1, 0));
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    #[test]
    fn comments_blank_lines_and_duplicates() {
        let text = "# header\n\na b 1\nb a 2\nb c 3\na b 5\n";
        let g = load(text, LoadOptions { weighted: true, ..Default::default() }).unwrap();
        assert_eq!(g.edge_count(), 2);
        // last occurrence wins
        assert_eq!(g.weight(0, 1), Some(5.0));

        let d = load(text, LoadOptions { weighted: true, directed: true, ..Default::default() })
            .unwrap();
        assert_eq!(d.edge_count(), 3);
        assert_eq!(d.weight(0, 1), Some(5.0));
        assert_eq!(d.weight(1, 0), Some(2.0));
        assert_eq!(d.link_weight(2, 1), Some(3.0));
    }

    #[test]
    fn csv_with_trailing_columns() {
        let text = "7,188,-1,1407470400\n188,7,10,1407470401\n";
        let g = load(
            text,
            LoadOptions { directed: true, weighted: true, delimiter: Delimiter::Char(',') },
        )
        .unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.weight(0, 1), Some(-1.0));
        assert_eq!(g.label(1), "188");
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = load("1 2\n3\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let err = load("1 2 0.5\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");

        let err = load("1 2\n4 4\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let err = load("1 2 x\n", LoadOptions { weighted: true, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn mixed_weights_rejected() {
        let err = Graph::from_edges(3, false, [(0, 1, Some(1.0)), (1, 2, None)]).unwrap_err();
        assert!(matches!(err, Error::InvalidGraph(_)));
    }

    #[test]
    fn normalize_weights_by_max_abs() {
        let g = Graph::from_edges(3, true, [(0, 1, Some(2.0)), (1, 2, Some(-4.0))]).unwrap();
        let n = g.normalize_weights().unwrap();
        assert_eq!(n.weight(0, 1), Some(0.5));
        assert_eq!(n.weight(1, 2), Some(-1.0));

        let ratings = Graph::from_edges(3, true, [(0, 1, Some(10.0)), (1, 2, Some(-3.0))]).unwrap();
        let n = ratings.normalize_weights().unwrap();
        assert_eq!(n.weight(0, 1), Some(1.0));
        assert_eq!(n.weight(1, 2), Some(-0.3));

        let unit = Graph::from_edges(3, true, [(0, 1, Some(1.0)), (1, 2, Some(-0.25))]).unwrap();
        let again = unit.normalize_weights().unwrap();
        assert_eq!(again.edges(), unit.edges());
    }

    #[test]
    fn normalize_rejects_degenerate_weights() {
        let zero = Graph::from_edges(2, true, [(0, 1, Some(0.0))]).unwrap();
        assert!(zero.normalize_weights().is_err());
        let plain = Graph::from_edges(2, false, [(0, 1, None)]).unwrap();
        assert!(plain.normalize_weights().is_err());
    }

    #[test]
    fn degree_sums() {
        let g = load("a b\nb c\nc d\nd a\na c\n", LoadOptions::default()).unwrap();
        let total: usize = (0..g.node_count()).map(|x| g.degree(x)).sum();
        assert_eq!(total, 2 * g.edge_count());

        let d = load("a b\nb a\nb c\n", LoadOptions { directed: true, ..Default::default() })
            .unwrap();
        let total: usize = (0..d.node_count()).map(|x| d.out_degree(x)).sum();
        assert_eq!(total, d.edge_count());
    }

    #[test]
    fn id_map_lists_original_tokens() {
        let g = load("x y\n", LoadOptions::default()).unwrap();
        let mut buf = Vec::new();
        g.write_id_map(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x 0\ny 1\n");
    }
}
