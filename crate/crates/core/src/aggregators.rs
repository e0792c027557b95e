//! Path-set aggregators: each maps the vectorized paths of one length to a
//! single vector.
//!
//! | kind     | per path                      | across paths         |
//! |----------|-------------------------------|----------------------|
//! | AvgPool  | flatten                       | average              |
//! | DenseMax | flatten, dense layer          | max                  |
//! | SeqOfSeq | LSTM over nodes, max          | LSTM over paths, max |
//! | EdgeConv | width-2 conv over edges, max  | LSTM over paths, max |

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::paths::PathSet;
use crate::tensor::{Activation, Array, BoundParams, ParamId, ParamStore, PoolMode, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    AvgPool,
    DenseMax,
    SeqOfSeq,
    EdgeConv,
}

impl AggregatorKind {
    pub const ALL: [AggregatorKind; 4] =
        [AggregatorKind::AvgPool, AggregatorKind::DenseMax, AggregatorKind::SeqOfSeq, AggregatorKind::EdgeConv];

    pub fn name(self) -> &'static str {
        match self {
            AggregatorKind::AvgPool => "avgpool",
            AggregatorKind::DenseMax => "densemax",
            AggregatorKind::SeqOfSeq => "seqofseq",
            AggregatorKind::EdgeConv => "edgeconv",
        }
    }

    /// Whether the aggregator reads paths in order.
    pub fn is_sequential(self) -> bool {
        matches!(self, AggregatorKind::SeqOfSeq | AggregatorKind::EdgeConv)
    }
}

impl std::str::FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown aggregator {s:?} (avgpool|densemax|seqofseq|edgeconv)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregatorWidths {
    pub dense: usize,
    pub inner_lstm: usize,
    pub outer_lstm: usize,
    pub conv_filters: usize,
    /// Activation of the DenseMax layer and of the EdgeConv filters.
    pub activation: Activation,
}

impl Default for AggregatorWidths {
    fn default() -> Self {
        Self { dense: 64, inner_lstm: 32, outer_lstm: 32, conv_filters: 32, activation: Activation::Relu }
    }
}

/// Feature function for the edge `(a, b)` and its output width.
pub type EdgeFeatures<'a> = (&'a dyn Fn(NodeId, NodeId) -> Vec<f64>, usize);

/// Paths of one length laid out as `[n_paths, length + 1, width]` on a tape.
/// Masked-out rows are zero padding.
#[derive(Clone, Debug)]
pub struct VectorizedPathSet {
    pub length: usize,
    pub nodes: Var,
    pub mask: Vec<bool>,
    /// Optional per-edge features `[n_paths, length, edge_width]`.
    pub edges: Option<Var>,
}

impl VectorizedPathSet {
    /// Looks up every node of every path in `table` (`[N, width]`), padding
    /// with zero paths up to `pad_to`. `edge_features` maps a traversed link
    /// to its feature vector.
    pub fn build(
        tape: &mut Tape,
        table: Var,
        paths: &PathSet,
        pad_to: Option<usize>,
        edge_features: Option<EdgeFeatures<'_>>,
    ) -> Result<Self> {
        Self::build_mapped(tape, table, paths, pad_to, edge_features, &|x| x)
    }

    /// Like [`build`](Self::build), but node `x` reads row `row(x)` of
    /// `table`, so the table may hold only the nodes a sample touches.
    pub fn build_mapped(
        tape: &mut Tape,
        table: Var,
        paths: &PathSet,
        pad_to: Option<usize>,
        edge_features: Option<EdgeFeatures<'_>>,
        row: &dyn Fn(NodeId) -> usize,
    ) -> Result<Self> {
        let l = paths.length;
        let real = paths.len();
        if real == 0 {
            return Err(Error::InvalidArgument("cannot vectorize an empty path set".into()));
        }
        let total = pad_to.unwrap_or(real).max(real);
        let width = tape.shape(table)[1];
        let indices: Vec<usize> = paths.paths.iter().flat_map(|p| p.nodes().iter().map(|&x| row(x))).collect();
        if indices.len() != real * (l + 1) {
            return Err(Error::Shape { op: "vectorize", detail: format!("paths are not all of length {l}") });
        }
        let gathered = tape.gather_rows(table, &indices)?;
        let flat = if total > real {
            let pad = tape.constant(Array::zeros(&[(total - real) * (l + 1) * width]))?;
            tape.concat(&[gathered, pad])?
        } else {
            gathered
        };
        let nodes = tape.reshape(flat, &[total, l + 1, width])?;
        let mut mask = vec![true; real];
        mask.resize(total, false);

        let edges = match edge_features {
            None => None,
            Some((f, de)) => {
                let mut data = Vec::with_capacity(total * l * de);
                for p in &paths.paths {
                    for w in p.nodes().windows(2) {
                        let feat = f(w[0], w[1]);
                        if feat.len() != de {
                            return Err(Error::Shape { op: "vectorize", detail: format!("edge feature width {} != {de}", feat.len()) });
                        }
                        data.extend(feat);
                    }
                }
                data.resize(total * l * de, 0.0);
                Some(tape.constant(Array::new(&[total, l, de], data)?)?)
            }
        };
        Ok(Self { length: l, nodes, mask, edges })
    }

    pub fn real_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    fn all_real(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LstmParams {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

impl LstmParams {
    fn register(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let wx = store.add_glorot(&format!("{prefix}.wx"), 4 * hidden, input, rng)?;
        let wh = store.add_glorot(&format!("{prefix}.wh"), 4 * hidden, hidden, rng)?;
        // forget gate starts open
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = store.add(format!("{prefix}.b"), Array::vector(bias), true)?;
        Ok(Self { wx, wh, b })
    }

    fn run(&self, tape: &mut Tape, bound: &BoundParams, x: Var) -> Result<Var> {
        tape.lstm(x, bound.get(self.wx), bound.get(self.wh), bound.get(self.b))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Weights {
    AvgPool,
    DenseMax { w: ParamId, b: ParamId, act: Activation },
    SeqOfSeq { inner: LstmParams, outer: LstmParams },
    EdgeConv { k: ParamId, b: ParamId, act: Activation, outer: LstmParams },
}

/// One aggregator instance, bound to a single path length.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorParams {
    kind: AggregatorKind,
    length: usize,
    input_width: usize,
    edge_width: usize,
    output_width: usize,
    weights: Weights,
}

impl AggregatorParams {
    /// Registers the aggregator's weights in `store` under `prefix`.
    /// `edge_width` is only used by EdgeConv.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: AggregatorKind,
        length: usize,
        input_width: usize,
        edge_width: usize,
        widths: &AggregatorWidths,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if length < 1 || input_width == 0 {
            return Err(Error::InvalidArgument(format!("aggregator for length {length}, width {input_width}")));
        }
        let flat = (length + 1) * input_width;
        let edge_width = if kind == AggregatorKind::EdgeConv { edge_width } else { 0 };
        let (weights, output_width) = match kind {
            AggregatorKind::AvgPool => (Weights::AvgPool, flat),
            AggregatorKind::DenseMax => {
                let w = store.add_glorot(&format!("{prefix}.dense.w"), widths.dense, flat, rng)?;
                let b = store.add_filled(&format!("{prefix}.dense.b"), &[widths.dense], 0.0)?;
                (Weights::DenseMax { w, b, act: widths.activation }, widths.dense)
            }
            AggregatorKind::SeqOfSeq => {
                let inner = LstmParams::register(store, &format!("{prefix}.inner"), input_width, widths.inner_lstm, rng)?;
                let outer = LstmParams::register(store, &format!("{prefix}.outer"), widths.inner_lstm, widths.outer_lstm, rng)?;
                (Weights::SeqOfSeq { inner, outer }, widths.outer_lstm)
            }
            AggregatorKind::EdgeConv => {
                let window = 2 * input_width + edge_width;
                let k = store.add_glorot(&format!("{prefix}.conv.k"), widths.conv_filters, window, rng)?;
                let b = store.add_filled(&format!("{prefix}.conv.b"), &[widths.conv_filters], 0.0)?;
                let outer = LstmParams::register(store, &format!("{prefix}.outer"), widths.conv_filters, widths.outer_lstm, rng)?;
                (Weights::EdgeConv { k, b, act: widths.activation, outer }, widths.outer_lstm)
            }
        };
        Ok(Self { kind, length, input_width, edge_width, output_width, weights })
    }

    pub fn kind(&self) -> AggregatorKind {
        self.kind
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn edge_width(&self) -> usize {
        self.edge_width
    }

    /// Aggregates one vectorized path set into `[output_width]`.
    pub fn aggregate(&self, tape: &mut Tape, bound: &BoundParams, ps: &VectorizedPathSet) -> Result<Var> {
        let shape = tape.shape(ps.nodes).to_vec();
        if shape.len() != 3 || shape[1] != self.length + 1 || shape[2] != self.input_width {
            return Err(Error::Shape {
                op: "aggregate",
                detail: format!(
                    "expected [n, {}, {}] for a length-{} aggregator, got {shape:?}",
                    self.length + 1,
                    self.input_width,
                    self.length
                ),
            });
        }
        if ps.real_count() == 0 {
            return Err(Error::InvalidArgument("aggregate needs at least one real path".into()));
        }
        let n = shape[0];
        let mask = if ps.all_real() { None } else { Some(ps.mask.as_slice()) };
        match &self.weights {
            Weights::AvgPool => {
                let flat = tape.reshape(ps.nodes, &[n, (self.length + 1) * self.input_width])?;
                tape.pool(flat, PoolMode::Avg, mask)
            }
            Weights::DenseMax { w, b, act } => {
                let flat = tape.reshape(ps.nodes, &[n, (self.length + 1) * self.input_width])?;
                let h = tape.affine(flat, bound.get(*w), bound.get(*b), *act)?;
                tape.pool(h, PoolMode::Max, mask)
            }
            Weights::SeqOfSeq { inner, outer } => {
                let states = inner.run(tape, bound, ps.nodes)?;
                let per_path = tape.pool(states, PoolMode::Max, None)?;
                self.across_paths(tape, bound, outer, per_path, ps)
            }
            Weights::EdgeConv { k, b, act, outer } => {
                let edges = if self.edge_width > 0 {
                    let e = ps.edges.ok_or_else(|| {
                        Error::InvalidArgument("EdgeConv configured with edge features but none supplied".into())
                    })?;
                    Some(e)
                } else {
                    None
                };
                let conv = tape.conv1d_k2(ps.nodes, edges, bound.get(*k), bound.get(*b))?;
                let conv = tape.activate(conv, *act)?;
                let per_path = tape.pool(conv, PoolMode::Max, None)?;
                self.across_paths(tape, bound, outer, per_path, ps)
            }
        }
    }

    /// Runs the outer LSTM over the real paths in order and max-pools its states.
    fn across_paths(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        outer: &LstmParams,
        per_path: Var,
        ps: &VectorizedPathSet,
    ) -> Result<Var> {
        let seq = if ps.all_real() {
            per_path
        } else {
            let keep: Vec<usize> = ps.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
            tape.gather_rows(per_path, &keep)?
        };
        let states = outer.run(tape, bound, seq)?;
        tape.pool(states, PoolMode::Max, None)
    }
}
