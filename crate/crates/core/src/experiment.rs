//! Experiment plumbing shared by the command line and the acceptance suite:
//! dataset loading, split files, one-seed runs, and report files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::baselines::{score_pairs, Method};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::graph::{load_edge_list, Graph};
use crate::metrics::{auc, mean_std, pcc, rmse, ScoredPairs};
use crate::model::{fit, read_node_vectors, History, LeapModel, NodeInputs};
use crate::seed;
use crate::split::{split_edges, LabeledPairSet, SplitResult, Task};

/// Metrics for one evaluation. Link prediction fills `auc`, weight
/// regression fills `rmse` and `pcc`. An undefined correlation (constant
/// predictions) is reported as NaN.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: Option<f64>,
    pub rmse: Option<f64>,
    pub pcc: Option<f64>,
}

impl Metrics {
    pub fn evaluate(task: Task, scores: &[f64], labels: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Metric("no pairs to evaluate".into()));
        }
        Ok(match task {
            Task::LinkPrediction => Metrics { auc: Some(auc(scores, labels)?), ..Default::default() },
            Task::WeightRegression => Metrics {
                rmse: Some(rmse(scores, labels)?),
                pcc: Some(pcc(scores, labels).unwrap_or(f64::NAN)),
                ..Default::default()
            },
        })
    }

    /// `(name, value)` for every filled metric.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        [("auc", self.auc), ("rmse", self.rmse), ("pcc", self.pcc)]
            .into_iter()
            .filter_map(|(n, v)| v.map(|v| (n, v)))
            .collect()
    }

    pub fn describe(&self) -> String {
        self.entries().iter().map(|(n, v)| format!("{n}={v:.4}")).collect::<Vec<_>>().join(" ")
    }
}

/// Which predictor a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Predictor {
    Leap,
    Baseline(Method),
}

impl Predictor {
    pub fn name(&self, cfg: &ExperimentConfig) -> String {
        match self {
            Predictor::Leap => format!("leap-{}", cfg.model.aggregator.name()),
            Predictor::Baseline(m) => m.name().to_string(),
        }
    }
}

/// Reads the configured dataset. Weighted graphs are rescaled into
/// `[-1, 1]` when `normalize_weights` is set.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Graph, Vec<u8>)> {
    let path = cfg.dataset.as_ref().ok_or_else(|| Error::Config("no dataset configured".into()))?;
    let bytes = fs::read(path).map_err(|e| Error::Config(format!("reading dataset {}: {e}", path.display())))?;
    let g = load_edge_list(bytes.as_slice(), cfg.load_options()?)?;
    let g = if cfg.weighted && cfg.normalize_weights { g.normalize_weights()? } else { g };
    Ok((g, bytes))
}

pub fn node_inputs(cfg: &ExperimentConfig, g: &Graph) -> Result<NodeInputs> {
    let read = |p: &Path| -> Result<_> { read_node_vectors(g, BufReader::new(File::open(p)?)) };
    Ok(NodeInputs {
        embeddings: cfg.pretrained_embeddings.as_deref().map(read).transpose()?,
        fine_tune: cfg.fine_tune_embeddings,
        features: cfg.node_features.as_deref().map(read).transpose()?,
    })
}

pub struct RunOutcome {
    pub predictor: Predictor,
    pub seed: u64,
    pub test_fraction: f64,
    pub split: SplitResult,
    pub scored: ScoredPairs,
    pub metrics: Metrics,
    pub model: Option<LeapModel>,
    pub history: Option<History>,
    pub seconds: f64,
}

/// Trains LEAP on a split and scores its test pairs.
pub fn train_leap(cfg: &ExperimentConfig, split: &SplitResult, seed: u64) -> Result<(LeapModel, History)> {
    let g = &split.train_graph;
    let mut asm = cfg.assembler.clone();
    asm.seed = seed::derive(cfg.assembler.seed, &[seed]);
    let mut model = LeapModel::new(cfg.task, &asm, &cfg.model, g, node_inputs(cfg, g)?, seed)?;
    let history = fit(&mut model, g, &split.train_set, &cfg.train, seed)?;
    Ok((model, history))
}

pub fn score_model(model: &LeapModel, g: &Graph, set: &LabeledPairSet) -> Result<(ScoredPairs, Metrics)> {
    let scores = model.predict_batch(g, set.pairs())?;
    let metrics = Metrics::evaluate(model.task(), &scores, set.labels())?;
    Ok((ScoredPairs::new(set.pairs().to_vec(), scores, set.labels().to_vec())?, metrics))
}

pub fn score_baseline(method: Method, cfg: &ExperimentConfig, split: &SplitResult) -> Result<(ScoredPairs, Metrics)> {
    let set = &split.test_set;
    let scores = score_pairs(method, &split.train_graph, set.pairs(), cfg.task, &cfg.baselines)?;
    let metrics = Metrics::evaluate(cfg.task, &scores, set.labels())?;
    Ok((ScoredPairs::new(set.pairs().to_vec(), scores, set.labels().to_vec())?, metrics))
}

/// Runs one predictor on one freshly drawn split.
pub fn run_once(cfg: &ExperimentConfig, g: &Graph, predictor: Predictor, test_fraction: f64, seed: u64) -> Result<RunOutcome> {
    let start = Instant::now();
    let split = split_edges(g, test_fraction, seed, cfg.task)?;
    run_on_split(cfg, split, predictor, test_fraction, seed, start)
}

fn run_on_split(
    cfg: &ExperimentConfig,
    split: SplitResult,
    predictor: Predictor,
    test_fraction: f64,
    seed: u64,
    start: Instant,
) -> Result<RunOutcome> {
    let (scored, metrics, model, history) = match predictor {
        Predictor::Leap => {
            let (model, history) = train_leap(cfg, &split, seed)?;
            let (scored, metrics) = score_model(&model, &split.train_graph, &split.test_set)?;
            (scored, metrics, Some(model), Some(history))
        }
        Predictor::Baseline(m) => {
            let (scored, metrics) = score_baseline(m, cfg, &split)?;
            (scored, metrics, None, None)
        }
    };
    Ok(RunOutcome { predictor, seed, test_fraction, split, scored, metrics, model, history, seconds: start.elapsed().as_secs_f64() })
}

/// Runs a predictor on a split that was loaded from disk.
pub fn run_on_loaded_split(cfg: &ExperimentConfig, files: SplitFiles, predictor: Predictor) -> Result<RunOutcome> {
    let start = Instant::now();
    let (seed, fraction) = (files.meta.seed, files.meta.test_fraction);
    run_on_split(cfg, files.into_split(), predictor, fraction, seed, start)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitMeta {
    pub task: Task,
    pub seed: u64,
    pub test_fraction: f64,
    pub directed: bool,
    pub weighted: bool,
}

/// A split as stored on disk: `meta.toml`, `nodes.txt` (label and id per
/// line), `train_graph.txt`, `train_pairs.csv` and `test_pairs.csv`.
pub struct SplitFiles {
    pub meta: SplitMeta,
    pub train_graph: Graph,
    pub train_set: LabeledPairSet,
    pub test_set: LabeledPairSet,
}

impl SplitFiles {
    pub fn new(split: &SplitResult, task: Task, test_fraction: f64) -> Self {
        let g = &split.train_graph;
        Self {
            meta: SplitMeta { task, seed: split.seed, test_fraction, directed: g.is_directed(), weighted: g.is_weighted() },
            train_graph: g.clone(),
            train_set: split.train_set.clone(),
            test_set: split.test_set.clone(),
        }
    }

    pub fn into_split(self) -> SplitResult {
        SplitResult { train_graph: self.train_graph, train_set: self.train_set, test_set: self.test_set, seed: self.meta.seed }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = toml::to_string(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(dir.join("meta.toml"), meta)?;
        let g = &self.train_graph;
        let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        g.write_id_map(create("nodes.txt")?)?;
        g.write_edge_list(create("train_graph.txt")?)?;
        self.train_set.write_csv(g, create("train_pairs.csv")?)?;
        self.test_set.write_csv(g, create("test_pairs.csv")?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta: SplitMeta = toml::from_str(&fs::read_to_string(dir.join("meta.toml"))?)
            .map_err(|e| Error::Config(format!("{}: {e}", dir.join("meta.toml").display())))?;
        let open = |name: &str| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(dir.join(name))?)) };

        let mut labels = Vec::new();
        for (i, line) in open("nodes.txt")?.lines().enumerate() {
            let line = line?;
            let mut f = line.split_whitespace();
            let (Some(label), Some(id)) = (f.next(), f.next()) else { continue };
            if id.parse::<usize>().ok() != Some(labels.len()) {
                return Err(Error::Parse { line: i + 1, message: format!("node ids must be 0, 1, 2 ... in order; got {id:?}") });
            }
            labels.push(label.to_string());
        }
        let ids: std::collections::HashMap<&str, usize> = labels.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut edges = Vec::new();
        for (i, line) in open("train_graph.txt")?.lines().enumerate() {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse { line: i + 1, message: m };
            let node = |t: &str| ids.get(t).copied().ok_or_else(|| err(format!("unknown node {t:?}")));
            let w = match (meta.weighted, f.get(2)) {
                (true, Some(w)) => Some(w.parse::<f64>().map_err(|_| err(format!("bad weight {w:?}")))?),
                (false, None) => None,
                _ => return Err(err("weight column does not match meta.toml".into())),
            };
            edges.push((node(f[0])?, node(f[1])?, w));
        }
        let train_graph = Graph::with_labels(labels.clone(), meta.directed, edges)?;
        let train_set = LabeledPairSet::read_csv(&train_graph, open("train_pairs.csv")?)?;
        let test_set = LabeledPairSet::read_csv(&train_graph, open("test_pairs.csv")?)?;
        Ok(Self { meta, train_graph, train_set, test_set })
    }
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Appends a human-readable block to `report.txt` in `dir`.
pub fn append_report(dir: &Path, command: &str, config_hash: &str, cfg: &ExperimentConfig, runs: &[RunOutcome]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = OpenOptions::new().create(true).append(true).open(dir.join("report.txt"))?;
    writeln!(out, "== {command} (unix time {})", unix_time())?;
    writeln!(out, "config_hash = {config_hash}")?;
    writeln!(out, "task = {}", cfg.task.name())?;
    if let Some(d) = &cfg.dataset {
        writeln!(out, "dataset = {}", d.display())?;
    }
    let mut groups: Vec<(String, f64)> = Vec::new();
    for r in runs {
        let key = (r.predictor.name(cfg), r.test_fraction);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (name, fraction) in groups {
        let members: Vec<&RunOutcome> =
            runs.iter().filter(|r| r.predictor.name(cfg) == name && r.test_fraction == fraction).collect();
        writeln!(out, "[{name} test_fraction={fraction}]")?;
        for r in &members {
            let epochs = r.history.as_ref().map(|h| format!(" epochs={}", h.epochs.len())).unwrap_or_default();
            writeln!(out, "  seed {}: {}{epochs} time={:.1}s", r.seed, r.metrics.describe(), r.seconds)?;
        }
        for metric in ["auc", "rmse", "pcc"] {
            let values: Vec<f64> = members
                .iter()
                .filter_map(|r| r.metrics.entries().into_iter().find(|(n, _)| *n == metric).map(|(_, v)| v))
                .collect();
            if !values.is_empty() {
                let (m, s) = mean_std(&values);
                writeln!(out, "  {metric} mean = {m:.4} +- {s:.4} (n={})", values.len())?;
            }
        }
    }
    writeln!(out)?;
    Ok(())
}

/// Appends one line per run and metric to `metrics.csv`
/// (`config_hash,method,test_fraction,seed,metric,value`).
pub fn append_metrics_csv(dir: &Path, config_hash: &str, cfg: &ExperimentConfig, runs: &[RunOutcome]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join("metrics.csv");
    let fresh = !path.exists();
    let mut out = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(out, "config_hash,method,test_fraction,seed,metric,value")?;
    }
    for r in runs {
        for (metric, value) in r.metrics.entries() {
            writeln!(out, "{config_hash},{},{},{},{metric},{value}", r.predictor.name(cfg), r.test_fraction, r.seed)?;
        }
    }
    Ok(())
}

/// Writes `plot.csv`: one row per method, x value and metric with mean and
/// standard deviation over seeds. `x` is the test fraction.
pub fn write_plot_csv(dir: &Path, cfg: &ExperimentConfig, runs: &[RunOutcome]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join("plot.csv"))?);
    writeln!(out, "x,method,metric,mean,std,n")?;
    let mut keys: Vec<(f64, String, &'static str)> = Vec::new();
    for r in runs {
        for (metric, _) in r.metrics.entries() {
            let key = (r.test_fraction, r.predictor.name(cfg), metric);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    for (x, method, metric) in keys {
        let values: Vec<f64> = runs
            .iter()
            .filter(|r| r.test_fraction == x && r.predictor.name(cfg) == method)
            .filter_map(|r| r.metrics.entries().into_iter().find(|(n, _)| *n == metric).map(|(_, v)| v))
            .collect();
        let (m, s) = mean_std(&values);
        writeln!(out, "{x},{method},{metric},{m},{s},{}", values.len())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_per_task() {
        let m = Metrics::evaluate(Task::LinkPrediction, &[0.1, 0.9], &[0.0, 1.0]).unwrap();
        assert_eq!(m.entries(), vec![("auc", 1.0)]);
        let m = Metrics::evaluate(Task::WeightRegression, &[0.0, 0.0], &[0.5, -0.5]).unwrap();
        assert_eq!(m.rmse, Some(0.5));
        assert!(m.pcc.unwrap().is_nan());
        assert!(Metrics::evaluate(Task::LinkPrediction, &[], &[]).is_err());
    }

    #[test]
    fn split_files_round_trip() {
        let g = Graph::with_labels(
            ["a", "b", "c", "d", "e"].map(String::from).to_vec(),
            true,
            [(0, 1, Some(0.5)), (1, 2, Some(-0.25)), (2, 3, Some(1.0)), (3, 0, Some(0.125)), (1, 3, Some(0.75))],
        )
        .unwrap();
        let split = split_edges(&g, 0.4, 3, Task::WeightRegression).unwrap();
        let dir = tempfile::tempdir().unwrap();
        SplitFiles::new(&split, Task::WeightRegression, 0.4).write(dir.path()).unwrap();
        let back = SplitFiles::read(dir.path()).unwrap();
        assert_eq!(back.train_graph.labels(), g.labels());
        assert_eq!(back.train_graph.edges(), split.train_graph.edges());
        assert_eq!(back.train_set, split.train_set);
        assert_eq!(back.test_set, split.test_set);
        assert_eq!(back.meta.seed, 3);
    }
}
