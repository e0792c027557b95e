//! Bounded-length simple path enumeration between node pairs.
//!
//! Small path sets are enumerated exhaustively by a depth-bounded DFS with a
//! reservoir, so a capped result is a uniform sample of all simple paths.
//! When the DFS exceeds its expansion budget (dense neighbourhoods of hub
//! nodes) the assembler switches to drawing walks with probability
//! proportional to their completion counts and rejecting non-simple or
//! repeated ones, which is again uniform over simple paths.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::seed;

const DFS_EXPANSION_BUDGET: usize = 200_000;
const SAMPLER_ATTEMPTS_PER_PATH: usize = 200;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    nodes: Vec<NodeId>,
}

impl Path {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of edge weights along the path; zero on unweighted graphs.
    pub fn weight(&self, g: &Graph) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| g.link_weight(w[0], w[1]).unwrap_or(0.0))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSet {
    pub length: usize,
    pub paths: Vec<Path>,
    /// True when more paths exist than were kept.
    pub truncated: bool,
}

impl PathSet {
    pub fn empty(length: usize) -> Self {
        Self { length, paths: Vec::new(), truncated: false }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssemblerConfig {
    pub lengths: Vec<usize>,
    pub cap: usize,
    pub seed: u64,
    pub exclude_direct_edge: bool,
    pub respect_direction: bool,
}

impl Default for AssemblerConfig {
    fn default() -> Self {
        Self { lengths: vec![3, 4], cap: 50, seed: 0, exclude_direct_edge: true, respect_direction: false }
    }
}

impl AssemblerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() {
            return Err(Error::InvalidArgument("at least one path length is required".into()));
        }
        if let Some(l) = self.lengths.iter().find(|&&l| l < 2) {
            return Err(Error::InvalidArgument(format!(
                "path length {l} not allowed; lengths start at 2 (the direct edge is never a path)"
            )));
        }
        let distinct: HashSet<_> = self.lengths.iter().collect();
        if distinct.len() != self.lengths.len() {
            return Err(Error::InvalidArgument("path lengths must be distinct".into()));
        }
        if self.cap == 0 {
            return Err(Error::InvalidArgument("path cap must be at least 1".into()));
        }
        Ok(())
    }
}

struct Traversal<'a> {
    g: &'a Graph,
    source: NodeId,
    target: NodeId,
    directed: bool,
    exclude_direct: bool,
}

impl<'a> Traversal<'a> {
    fn new(g: &'a Graph, source: NodeId, target: NodeId, cfg: &AssemblerConfig) -> Self {
        Self {
            g,
            source,
            target,
            directed: cfg.respect_direction && g.is_directed(),
            exclude_direct: cfg.exclude_direct_edge,
        }
    }

    fn forward(&self, x: NodeId) -> &'a [NodeId] {
        if self.directed {
            self.g.out_neighbors(x)
        } else {
            self.g.neighbors(x)
        }
    }

    fn backward(&self, x: NodeId) -> &'a [NodeId] {
        if self.directed {
            self.g.in_neighbors(x)
        } else {
            self.g.neighbors(x)
        }
    }

    fn blocked(&self, a: NodeId, b: NodeId) -> bool {
        self.exclude_direct
            && ((a == self.source && b == self.target) || (!self.directed && a == self.target && b == self.source))
    }

    fn steps(&self, x: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.forward(x).iter().copied().filter(move |&y| !self.blocked(x, y))
    }

    /// Nodes one and two steps away from the target, for pruning the last
    /// two levels of the search.
    fn target_balls(&self) -> (Vec<bool>, Vec<bool>) {
        let n = self.g.node_count();
        let mut one = vec![false; n];
        let mut two = vec![false; n];
        for &y in self.backward(self.target) {
            if !self.blocked(y, self.target) {
                one[y] = true;
            }
        }
        for y in (0..n).filter(|&y| one[y]) {
            for &z in self.backward(y) {
                if !self.blocked(z, y) {
                    two[z] = true;
                }
            }
        }
        (one, two)
    }
}

enum Dfs {
    Complete { found: usize },
    OverBudget,
}

struct Reservoir<'r> {
    cap: usize,
    kept: Vec<Vec<NodeId>>,
    seen: usize,
    rng: &'r mut ChaCha8Rng,
}

impl Reservoir<'_> {
    fn offer(&mut self, path: &[NodeId]) {
        if self.kept.len() < self.cap {
            self.kept.push(path.to_vec());
        } else {
            let j = self.rng.gen_range(0..=self.seen);
            if j < self.cap {
                self.kept[j] = path.to_vec();
            }
        }
        self.seen += 1;
    }
}

fn dfs(t: &Traversal<'_>, l: usize, reservoir: &mut Reservoir<'_>) -> Dfs {
    let (one, two) = t.target_balls();
    let mut on_path = vec![false; t.g.node_count()];
    let mut stack_path = vec![t.source];
    on_path[t.source] = true;
    let mut expansions = 0usize;

    #[allow(clippy::too_many_arguments)]
    fn walk(
        t: &Traversal<'_>,
        l: usize,
        one: &[bool],
        two: &[bool],
        on_path: &mut [bool],
        path: &mut Vec<NodeId>,
        expansions: &mut usize,
        reservoir: &mut Reservoir<'_>,
    ) -> bool {
        let x = *path.last().unwrap();
        let remaining = l + 1 - path.len();
        if remaining == 1 {
            if one[x] {
                path.push(t.target);
                reservoir.offer(path);
                path.pop();
            }
            return true;
        }
        for y in t.steps(x) {
            if on_path[y] || y == t.target {
                continue;
            }
            let left = remaining - 1;
            if (left == 1 && !one[y]) || (left == 2 && !two[y]) {
                continue;
            }
            *expansions += 1;
            if *expansions > DFS_EXPANSION_BUDGET {
                return false;
            }
            on_path[y] = true;
            path.push(y);
            let ok = walk(t, l, one, two, on_path, path, expansions, reservoir);
            path.pop();
            on_path[y] = false;
            if !ok {
                return false;
            }
        }
        true
    }

    if walk(t, l, &one, &two, &mut on_path, &mut stack_path, &mut expansions, reservoir) {
        Dfs::Complete { found: reservoir.seen }
    } else {
        Dfs::OverBudget
    }
}

/// Number of walks of each remaining length from a node to the target,
/// computed lazily.
struct WalkCounts<'t, 'g> {
    t: &'t Traversal<'g>,
    memo: Vec<HashMap<NodeId, f64>>,
}

impl<'t, 'g> WalkCounts<'t, 'g> {
    fn new(t: &'t Traversal<'g>, l: usize) -> Self {
        Self { t, memo: vec![HashMap::new(); l + 1] }
    }

    fn get(&mut self, x: NodeId, r: usize) -> f64 {
        if r == 0 {
            return if x == self.t.target { 1.0 } else { 0.0 };
        }
        if let Some(&c) = self.memo[r].get(&x) {
            return c;
        }
        let next: Vec<NodeId> = self.t.steps(x).collect();
        let c = next.into_iter().map(|y| self.get(y, r - 1)).sum();
        self.memo[r].insert(x, c);
        c
    }
}

fn sample_walks(t: &Traversal<'_>, l: usize, cap: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<NodeId>> {
    let mut counts = WalkCounts::new(t, l);
    if counts.get(t.source, l) == 0.0 {
        return Vec::new();
    }
    let mut kept: Vec<Vec<NodeId>> = Vec::with_capacity(cap);
    let mut seen: HashSet<Vec<NodeId>> = HashSet::with_capacity(cap);
    let attempts = SAMPLER_ATTEMPTS_PER_PATH * cap;
    let mut choices: Vec<(NodeId, f64)> = Vec::new();
    for _ in 0..attempts {
        if kept.len() == cap {
            break;
        }
        let mut walk = vec![t.source];
        let mut x = t.source;
        for r in (0..l).rev() {
            choices.clear();
            let mut total = 0.0;
            for y in t.steps(x).collect::<Vec<_>>() {
                let c = counts.get(y, r);
                if c > 0.0 {
                    total += c;
                    choices.push((y, c));
                }
            }
            let mut pick = rng.gen_range(0.0..total);
            let mut next = choices.last().map(|c| c.0).unwrap_or(t.target);
            for &(y, c) in &choices {
                if pick < c {
                    next = y;
                    break;
                }
                pick -= c;
            }
            walk.push(next);
            x = next;
        }
        let mut nodes = walk.clone();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.len() == walk.len() && seen.insert(walk.clone()) {
            kept.push(walk);
        }
    }
    kept
}

fn check_pair(g: &Graph, u: NodeId, v: NodeId) -> Result<()> {
    let n = g.node_count();
    if u >= n || v >= n {
        return Err(Error::InvalidArgument(format!("pair ({u}, {v}) outside 0..{n}")));
    }
    if u == v {
        return Err(Error::InvalidArgument(format!("pair endpoints must differ (got {u} twice)")));
    }
    Ok(())
}

/// Simple `u -> v` paths with exactly `l` edges, at most `cfg.cap` of them.
pub fn enumerate_paths(g: &Graph, u: NodeId, v: NodeId, l: usize, cfg: &AssemblerConfig) -> Result<PathSet> {
    check_pair(g, u, v)?;
    if !cfg.lengths.contains(&l) {
        return Err(Error::InvalidArgument(format!("length {l} is not among {:?}", cfg.lengths)));
    }
    cfg.validate()?;
    Ok(collect_paths(g, u, v, l, cfg))
}

fn collect_paths(g: &Graph, u: NodeId, v: NodeId, l: usize, cfg: &AssemblerConfig) -> PathSet {
    let t = Traversal::new(g, u, v, cfg);
    let mut rng = seed::rng(cfg.seed, &[u as u64, v as u64, l as u64]);
    let mut reservoir = Reservoir { cap: cfg.cap, kept: Vec::new(), seen: 0, rng: &mut rng };
    let (mut kept, truncated) = match dfs(&t, l, &mut reservoir) {
        Dfs::Complete { found } => (reservoir.kept, found > cfg.cap),
        Dfs::OverBudget => {
            let mut rng = seed::rng(cfg.seed, &[u as u64, v as u64, l as u64, 0x5a3e]);
            (sample_walks(&t, l, cfg.cap, &mut rng), true)
        }
    };
    kept.sort_unstable();
    PathSet { length: l, paths: kept.into_iter().map(Path::new).collect(), truncated }
}

/// One path set per configured length, in configuration order.
pub fn assemble(g: &Graph, u: NodeId, v: NodeId, cfg: &AssemblerConfig) -> Result<Vec<PathSet>> {
    check_pair(g, u, v)?;
    cfg.validate()?;
    Ok(cfg.lengths.iter().map(|&l| collect_paths(g, u, v, l, cfg)).collect())
}

/// Canonical order: heaviest total weight first on weighted graphs, then
/// lexicographic by node sequence.
pub fn order_paths(ps: &PathSet, g: &Graph) -> PathSet {
    let mut keyed: Vec<(f64, &Path)> = ps.paths.iter().map(|p| (p.weight(g), p)).collect();
    if g.is_weighted() {
        keyed.sort_by(|a, b| match b.0.total_cmp(&a.0) {
            Ordering::Equal => a.1.cmp(b.1),
            other => other,
        });
    } else {
        keyed.sort_by(|a, b| a.1.cmp(b.1));
    }
    PathSet {
        length: ps.length,
        paths: keyed.into_iter().map(|(_, p)| p.clone()).collect(),
        truncated: ps.truncated,
    }
}

/// Debug dump: `# length l` headers followed by one space-separated path per line.
pub fn write_paths<W: Write>(sets: &[PathSet], g: &Graph, mut out: W) -> Result<()> {
    for set in sets {
        writeln!(out, "# length {}", set.length)?;
        for p in &set.paths {
            let labels: Vec<&str> = p.nodes().iter().map(|&x| g.label(x)).collect();
            writeln!(out, "{}", labels.join(" "))?;
        }
    }
    Ok(())
}
