//! The end-to-end pipeline: node vectors, one aggregator per path length and
//! a feed-forward edge learner on top of their concatenation.

mod io;
mod train;

pub use io::{load_model, load_pretrained_embeddings, read_node_vectors, save_model, write_node_vectors};
pub use train::{fit, train, EpochRecord, History, TrainConfig};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregators::{AggregatorKind, AggregatorParams, AggregatorWidths, VectorizedPathSet};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::paths::{assemble, order_paths, AssemblerConfig, PathSet};
use crate::seed;
use crate::split::Task;
use crate::tensor::{Activation, Array, BoundParams, LossKind, ParamId, ParamStore, Tape, Var};

/// Range of the uniform initialisation of learned embeddings.
pub const EMBEDDING_INIT: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub aggregator: AggregatorKind,
    pub widths: AggregatorWidths,
    /// Hidden layers of the edge learner.
    pub learner_layers: usize,
    pub learner_width: usize,
    pub learner_activation: Activation,
    /// Feed link weights to EdgeConv windows when the graph is weighted.
    pub edge_features: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 32,
            aggregator: AggregatorKind::EdgeConv,
            widths: AggregatorWidths::default(),
            learner_layers: 2,
            learner_width: 64,
            learner_activation: Activation::Relu,
            edge_features: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let w = &self.widths;
        if self.embedding_dim == 0 || self.learner_width == 0 || w.dense == 0 || w.inner_lstm == 0 || w.outer_lstm == 0 || w.conv_filters == 0 {
            return Err(Error::Config("model widths must be positive".into()));
        }
        Ok(())
    }
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub task: Task,
    pub node_count: usize,
    pub feature_width: usize,
    /// Divisor applied to link weights used as edge features; absent when
    /// edge features are off.
    pub edge_scale: Option<f64>,
    pub frozen_embeddings: bool,
    pub assembler: AssemblerConfig,
    pub model: ModelConfig,
}

/// Optional node inputs supplied from files.
#[derive(Clone, Debug, Default)]
pub struct NodeInputs {
    /// Pretrained `[N, K]` embeddings.
    pub embeddings: Option<Array>,
    /// Keep training pretrained embeddings instead of freezing them.
    pub fine_tune: bool,
    /// Engineered `[N, F]` node features, concatenated after the embedding.
    pub features: Option<Array>,
}

#[derive(Clone, Debug)]
pub struct LeapModel {
    header: ModelHeader,
    store: ParamStore,
    embedding: ParamId,
    features: Option<ParamId>,
    aggregators: Vec<AggregatorParams>,
    hidden: Vec<(ParamId, ParamId)>,
    output: (ParamId, ParamId),
}

/// Gradients of one sample: dense for every small parameter, row-wise for
/// the embedding table.
pub(crate) struct SampleGrads {
    pub params: Vec<Option<Vec<f64>>>,
    pub embedding_rows: Vec<(NodeId, Vec<f64>)>,
}

pub(crate) struct SampleResult {
    pub score: f64,
    pub loss: f64,
    pub grads: Option<SampleGrads>,
}

impl LeapModel {
    /// Fresh model for `g`, initialised from `seed`.
    pub fn new(
        task: Task,
        assembler: &AssemblerConfig,
        config: &ModelConfig,
        g: &Graph,
        inputs: NodeInputs,
        seed: u64,
    ) -> Result<Self> {
        assembler.validate()?;
        config.validate()?;
        let n = g.node_count();
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if let Some(e) = &inputs.embeddings {
            if e.shape() != [n, config.embedding_dim] {
                return Err(Error::Config(format!(
                    "pretrained embeddings have shape {:?}, model expects [{n}, {}]",
                    e.shape(),
                    config.embedding_dim
                )));
            }
        }
        let feature_width = match &inputs.features {
            Some(f) if f.shape().len() == 2 && f.shape()[0] == n => f.shape()[1],
            Some(f) => {
                return Err(Error::Config(format!("node features have shape {:?} for {n} nodes", f.shape())));
            }
            None => 0,
        };
        let edge_scale = if config.edge_features && config.aggregator == AggregatorKind::EdgeConv && g.is_weighted() {
            let max = g.edges().iter().filter_map(|e| e.weight).fold(0.0_f64, |m, w| m.max(w.abs()));
            (max > 0.0).then_some(max)
        } else {
            None
        };
        let header = ModelHeader {
            task,
            node_count: n,
            feature_width,
            edge_scale,
            frozen_embeddings: inputs.embeddings.is_some() && !inputs.fine_tune,
            assembler: assembler.clone(),
            model: config.clone(),
        };
        let mut model = Self::from_header(header, seed)?;
        if let Some(e) = inputs.embeddings {
            *model.store.get_mut(model.embedding) = e;
        }
        if let (Some(f), Some(id)) = (inputs.features, model.features) {
            *model.store.get_mut(id) = f;
        }
        Ok(model)
    }

    /// Lays out and randomly initialises every parameter described by `header`.
    pub fn from_header(header: ModelHeader, seed: u64) -> Result<Self> {
        let mut rng = seed::rng(seed, &[0x1417]);
        let cfg = &header.model;
        let mut store = ParamStore::new();
        let n = header.node_count;
        let embedding = store.add_uniform("embedding", &[n, cfg.embedding_dim], EMBEDDING_INIT, &mut rng)?;
        store.set_trainable(embedding, !header.frozen_embeddings);
        let features = if header.feature_width > 0 {
            Some(store.add("features", Array::zeros(&[n, header.feature_width]), false)?)
        } else {
            None
        };
        let k_eff = cfg.embedding_dim + header.feature_width;
        let edge_width = usize::from(header.edge_scale.is_some());
        let mut aggregators = Vec::new();
        for &l in &header.assembler.lengths {
            aggregators.push(AggregatorParams::new(
                cfg.aggregator,
                l,
                k_eff,
                edge_width,
                &cfg.widths,
                &mut store,
                &format!("agg{l}"),
                &mut rng,
            )?);
        }
        let mut width = 2 * k_eff + aggregators.iter().map(AggregatorParams::output_width).sum::<usize>();
        let mut hidden = Vec::new();
        for c in 0..cfg.learner_layers {
            let w = store.add_glorot(&format!("learner.{c}.w"), cfg.learner_width, width, &mut rng)?;
            let b = store.add_filled(&format!("learner.{c}.b"), &[cfg.learner_width], 0.0)?;
            hidden.push((w, b));
            width = cfg.learner_width;
        }
        let w = store.add_glorot("learner.out.w", 1, width, &mut rng)?;
        let b = store.add_filled("learner.out.b", &[1], 0.0)?;
        Ok(Self { header, store, embedding, features, aggregators, hidden, output: (w, b) })
    }

    pub fn header(&self) -> &ModelHeader {
        &self.header
    }

    pub fn task(&self) -> Task {
        self.header.task
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn embedding_id(&self) -> ParamId {
        self.embedding
    }

    pub fn assembler(&self) -> &AssemblerConfig {
        &self.header.assembler
    }

    /// Width of the path vector fed to the edge learner.
    pub fn path_vector_width(&self) -> usize {
        let k_eff = self.header.model.embedding_dim + self.header.feature_width;
        2 * k_eff + self.aggregators.iter().map(AggregatorParams::output_width).sum::<usize>()
    }

    pub(crate) fn loss_kind(&self) -> LossKind {
        match self.header.task {
            Task::LinkPrediction => LossKind::Bce,
            Task::WeightRegression => LossKind::Mse,
        }
    }

    fn output_activation(&self) -> Activation {
        match self.header.task {
            Task::LinkPrediction => Activation::Sigmoid,
            Task::WeightRegression => Activation::Tanh,
        }
    }

    /// Path sets for `(u, v)` in canonical order, one per configured length.
    pub fn pair_paths(&self, g: &Graph, u: NodeId, v: NodeId) -> Result<Vec<PathSet>> {
        Ok(assemble(g, u, v, &self.header.assembler)?.iter().map(|ps| order_paths(ps, g)).collect())
    }

    /// Path sets for many pairs, assembled in parallel.
    pub fn all_pair_paths(&self, g: &Graph, pairs: &[(NodeId, NodeId)]) -> Result<Vec<Vec<PathSet>>> {
        pairs.par_iter().map(|&(u, v)| self.pair_paths(g, u, v)).collect()
    }

    /// Path vector `[u | v | h^l1 | h^l2 ...]`. Node `x` is row `row(x)` of
    /// `table`. Empty path sets contribute zeros.
    #[allow(clippy::too_many_arguments)]
    fn path_vector(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        table: Var,
        row: &dyn Fn(NodeId) -> usize,
        g: &Graph,
        u: NodeId,
        v: NodeId,
        paths: &[PathSet],
    ) -> Result<Var> {
        if paths.len() != self.aggregators.len() {
            return Err(Error::InvalidArgument(format!(
                "{} path sets for {} configured lengths",
                paths.len(),
                self.aggregators.len()
            )));
        }
        let mut parts = vec![tape.gather_rows(table, &[row(u)])?, tape.gather_rows(table, &[row(v)])?];
        let scale = self.header.edge_scale;
        let feature = move |a: NodeId, b: NodeId| vec![g.link_weight(a, b).unwrap_or(0.0) / scale.unwrap_or(1.0)];
        for (agg, ps) in self.aggregators.iter().zip(paths) {
            if ps.length != agg.length() {
                return Err(Error::InvalidArgument(format!("path set of length {} for aggregator {}", ps.length, agg.length())));
            }
            let h = if ps.is_empty() {
                tape.constant(Array::zeros(&[agg.output_width()]))?
            } else {
                let edges = (agg.edge_width() > 0).then_some((&feature as &dyn Fn(NodeId, NodeId) -> Vec<f64>, 1));
                let vps = VectorizedPathSet::build_mapped(tape, table, ps, None, edges, row)?;
                agg.aggregate(tape, bound, &vps)?
            };
            parts.push(h);
        }
        tape.concat(&parts)
    }

    fn edge_learn(&self, tape: &mut Tape, bound: &BoundParams, mut h: Var) -> Result<Var> {
        for &(w, b) in &self.hidden {
            h = tape.affine(h, bound.get(w), bound.get(b), self.header.model.learner_activation)?;
        }
        let (w, b) = self.output;
        tape.affine(h, bound.get(w), bound.get(b), self.output_activation())
    }

    /// Score `[1]` for `(u, v)` with every parameter, including the full
    /// embedding table, bound on `tape` (see [`ParamStore::bind`]).
    pub fn score_on_tape(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        g: &Graph,
        u: NodeId,
        v: NodeId,
        paths: &[PathSet],
    ) -> Result<Var> {
        let mut table = bound.get(self.embedding);
        if let Some(f) = self.features {
            table = tape.concat_cols(table, bound.get(f))?;
        }
        let h = self.path_vector(tape, bound, table, &|x| x, g, u, v, paths)?;
        self.edge_learn(tape, bound, h)
    }

    /// Path vector for `(u, v)` under the current parameters.
    pub fn path_vectorize(&self, g: &Graph, u: NodeId, v: NodeId, paths: &[PathSet]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape, false)?;
        let mut table = bound.get(self.embedding);
        if let Some(f) = self.features {
            table = tape.concat_cols(table, bound.get(f))?;
        }
        let h = self.path_vector(&mut tape, &bound, table, &|x| x, g, u, v, paths)?;
        Ok(tape.value(h).data().to_vec())
    }

    /// Forward (and optionally backward) pass for one pair on its own tape.
    /// Only the embedding rows the pair touches are put on the tape.
    pub(crate) fn run_sample(
        &self,
        g: &Graph,
        u: NodeId,
        v: NodeId,
        paths: &[PathSet],
        target: Option<f64>,
        track: bool,
    ) -> Result<SampleResult> {
        check_node(u, self.header.node_count)?;
        check_node(v, self.header.node_count)?;
        let mut local: Vec<NodeId> = vec![u];
        let mut slot: HashMap<NodeId, usize> = HashMap::from([(u, 0)]);
        for x in std::iter::once(v).chain(paths.iter().flat_map(|ps| ps.paths.iter().flat_map(|p| p.nodes().iter().copied()))) {
            check_node(x, self.header.node_count)?;
            slot.entry(x).or_insert_with(|| {
                local.push(x);
                local.len() - 1
            });
        }

        let mut tape = Tape::new();
        let placeholder = tape.constant(Array::zeros(&[1]))?;
        let mut vars = Vec::with_capacity(self.store.len());
        for id in self.store.ids() {
            if id == self.embedding || Some(id) == self.features {
                vars.push(placeholder);
            } else {
                vars.push(tape.leaf(self.store.get(id).clone(), track && self.store.is_trainable(id))?);
            }
        }
        let bound = BoundParams::from_vars(vars);
        let emb_rows = gather(self.store.get(self.embedding), &local);
        let emb = tape.leaf(emb_rows, track && self.store.is_trainable(self.embedding))?;
        let table = match self.features {
            Some(f) => {
                let feats = tape.constant(gather(self.store.get(f), &local))?;
                tape.concat_cols(emb, feats)?
            }
            None => emb,
        };
        let row = |x: NodeId| slot[&x];
        let h = self.path_vector(&mut tape, &bound, table, &row, g, u, v, paths)?;
        let out = self.edge_learn(&mut tape, &bound, h)?;
        let score = tape.value(out).data()[0];

        let Some(y) = target else {
            return Ok(SampleResult { score, loss: f64::NAN, grads: None });
        };
        let loss_var = tape.loss(out, &[y], self.loss_kind())?;
        let loss = tape.value(loss_var).data()[0];
        if !track {
            return Ok(SampleResult { score, loss, grads: None });
        }
        let grads = tape.backward(loss_var)?;
        let params = self
            .store
            .ids()
            .map(|id| {
                if id == self.embedding || Some(id) == self.features || !self.store.is_trainable(id) {
                    None
                } else {
                    grads.get(bound.get(id)).map(<[f64]>::to_vec)
                }
            })
            .collect();
        let k = self.header.model.embedding_dim;
        let embedding_rows = match grads.get(emb) {
            Some(g) => local.iter().enumerate().map(|(i, &x)| (x, g[i * k..(i + 1) * k].to_vec())).collect(),
            None => Vec::new(),
        };
        Ok(SampleResult { score, loss, grads: Some(SampleGrads { params, embedding_rows }) })
    }

    /// Score for one pair from precomputed path sets.
    pub fn score_with_paths(&self, g: &Graph, u: NodeId, v: NodeId, paths: &[PathSet]) -> Result<f64> {
        Ok(self.run_sample(g, u, v, paths, None, false)?.score)
    }

    /// Assembles paths and scores `(u, v)`.
    pub fn forward(&self, g: &Graph, u: NodeId, v: NodeId) -> Result<f64> {
        let paths = self.pair_paths(g, u, v)?;
        self.score_with_paths(g, u, v, &paths)
    }

    /// Scores in input order, from precomputed path sets.
    pub fn predict_with_paths(&self, g: &Graph, pairs: &[(NodeId, NodeId)], paths: &[Vec<PathSet>]) -> Result<Vec<f64>> {
        if pairs.len() != paths.len() {
            return Err(Error::InvalidArgument("one path list per pair required".into()));
        }
        pairs.par_iter().zip(paths).map(|(&(u, v), p)| self.score_with_paths(g, u, v, p)).collect()
    }

    /// Scores in input order.
    pub fn predict_batch(&self, g: &Graph, pairs: &[(NodeId, NodeId)]) -> Result<Vec<f64>> {
        pairs.par_iter().map(|&(u, v)| self.forward(g, u, v)).collect()
    }

    /// Mean loss over labelled pairs.
    pub(crate) fn mean_loss(&self, g: &Graph, pairs: &[(NodeId, NodeId)], labels: &[f64], paths: &[Vec<PathSet>]) -> Result<f64> {
        let losses: Vec<f64> = pairs
            .par_iter()
            .zip(labels)
            .zip(paths)
            .map(|((&(u, v), &y), p)| self.run_sample(g, u, v, p, Some(y), false).map(|r| r.loss))
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
    }
}

fn check_node(x: NodeId, n: usize) -> Result<()> {
    if x >= n {
        return Err(Error::InvalidArgument(format!("node {x} outside model with {n} nodes")));
    }
    Ok(())
}

fn gather(table: &Array, rows: &[usize]) -> Array {
    let k = table.shape()[1];
    let data = rows.iter().flat_map(|&r| table.data()[r * k..(r + 1) * k].iter().copied()).collect();
    Array::new(&[rows.len(), k], data).expect("row gather keeps the shape consistent")
}
