use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use leap::baselines::Method;
use leap::config::content_hash;
use leap::experiment::{
    append_metrics_csv, append_report, load_dataset, run_on_loaded_split, run_once, score_model, write_plot_csv,
    Predictor, RunOutcome, SplitFiles,
};
use leap::{split_edges, AggregatorKind, ExperimentConfig, LabeledPairSet, LeapModel, Task};

#[derive(Parser)]
#[command(name = "leap", version, about = "Edge property prediction from aggregated paths")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a dataset into a training graph, training pairs and test pairs.
    Split {
        #[command(flatten)]
        common: Common,
        /// Test fraction, overriding `split.test_fraction`.
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Train and evaluate LEAP for every configured seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Use an existing split directory instead of splitting the dataset.
        #[arg(long)]
        split_dir: Option<PathBuf>,
    },
    /// Evaluate a saved model on a split's test pairs or a pair file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        split_dir: PathBuf,
        /// `u,v,label` CSV; defaults to the split's test pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        out_dir: PathBuf,
    },
    /// Score test pairs with a classical heuristic.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// adamic-adar, katz, pagerank or reciprocal.
        #[arg(long)]
        method: String,
        #[arg(long)]
        split_dir: Option<PathBuf>,
    },
    /// Repeat training and baselines over the configured test fractions.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Edge list, overriding the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    #[arg(long, value_parser = ["avgpool", "densemax", "seqofseq", "edgeconv"])]
    aggregator: Option<String>,
    #[arg(long, value_parser = ["lp", "wsn"])]
    task: Option<String>,
}

impl Common {
    /// Loads the config and applies command-line overrides.
    fn config(&self) -> Result<ExperimentConfig> {
        let (mut cfg, _) =
            ExperimentConfig::load(&self.config).with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(a) = &self.aggregator {
            cfg.model.aggregator = a.parse::<AggregatorKind>()?;
        }
        if let Some(t) = &self.task {
            cfg.task = t.parse::<Task>()?;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Split { common, fraction } => split(&common, fraction),
        Command::Train { common, split_dir } => train(&common, split_dir.as_deref()),
        Command::Eval { model, split_dir, pairs, out_dir } => eval(&model, &split_dir, pairs.as_deref(), &out_dir),
        Command::Baseline { common, method, split_dir } => baseline(&common, &method, split_dir.as_deref()),
        Command::Sweep { common } => sweep(&common),
    }
}

fn split(common: &Common, fraction: Option<f64>) -> Result<()> {
    let cfg = common.config()?;
    let (g, _) = load_dataset(&cfg)?;
    let fraction = fraction.unwrap_or(cfg.split.test_fraction);
    let seed = cfg.seeds[0];
    let split = split_edges(&g, fraction, seed, cfg.task)?;
    SplitFiles::new(&split, cfg.task, fraction).write(&common.out_dir)?;
    println!(
        "split seed {seed}: {} training edges, {} training pairs, {} test pairs -> {}",
        split.train_graph.edge_count(),
        split.train_set.len(),
        split.test_set.len(),
        common.out_dir.display()
    );
    Ok(())
}

fn print_run(cfg: &ExperimentConfig, r: &RunOutcome) {
    println!(
        "{} seed {} test_fraction {}: {} ({:.1}s)",
        r.predictor.name(cfg),
        r.seed,
        r.test_fraction,
        r.metrics.describe(),
        r.seconds
    );
}

fn save_artifacts(dir: &Path, cfg: &ExperimentConfig, r: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tag = format!("{}-f{}-seed{}", r.predictor.name(cfg), r.test_fraction, r.seed);
    if let Some(m) = &r.model {
        m.save(&dir.join(format!("model-{tag}.ckpt")))?;
    }
    if let Some(h) = &r.history {
        h.write_csv(BufWriter::new(File::create(dir.join(format!("history-{tag}.csv")))?))?;
    }
    r.scored.write_csv(&r.split.train_graph, BufWriter::new(File::create(dir.join(format!("scores-{tag}.csv")))?))?;
    Ok(())
}

fn finish(command: &str, common: &Common, cfg: &ExperimentConfig, hash: &str, runs: &[RunOutcome]) -> Result<()> {
    append_report(&common.out_dir, command, hash, cfg, runs)?;
    append_metrics_csv(&common.out_dir, hash, cfg, runs)?;
    write_plot_csv(&common.out_dir, cfg, runs)?;
    println!("config hash {hash}; report in {}", common.out_dir.join("report.txt").display());
    Ok(())
}

/// Hash of the effective config plus the dataset, or the split files when
/// a split directory is used.
fn run_hash(cfg: &ExperimentConfig, split_dir: Option<&Path>) -> Result<String> {
    let data = match split_dir {
        Some(d) => ["meta.toml", "train_graph.txt", "train_pairs.csv", "test_pairs.csv"]
            .iter()
            .map(|f| fs::read(d.join(f)))
            .collect::<std::io::Result<Vec<_>>>()?
            .concat(),
        None => load_dataset(cfg)?.1,
    };
    Ok(content_hash(cfg, &data)?)
}

fn run_predictor(common: &Common, cfg: &ExperimentConfig, predictor: Predictor, split_dir: Option<&Path>) -> Result<Vec<RunOutcome>> {
    let mut runs = Vec::new();
    match split_dir {
        Some(dir) => {
            let files = SplitFiles::read(dir).with_context(|| format!("reading split {}", dir.display()))?;
            if files.meta.task != cfg.task {
                bail!("split was made for task {} but the config says {}", files.meta.task.name(), cfg.task.name());
            }
            runs.push(run_on_loaded_split(cfg, files, predictor)?);
        }
        None => {
            let (g, _) = load_dataset(cfg)?;
            for &seed in &cfg.seeds {
                runs.push(run_once(cfg, &g, predictor, cfg.split.test_fraction, seed)?);
            }
        }
    }
    for r in &runs {
        print_run(cfg, r);
        save_artifacts(&common.out_dir, cfg, r)?;
    }
    Ok(runs)
}

fn train(common: &Common, split_dir: Option<&Path>) -> Result<()> {
    let cfg = common.config()?;
    let hash = run_hash(&cfg, split_dir)?;
    let runs = run_predictor(common, &cfg, Predictor::Leap, split_dir)?;
    finish("train", common, &cfg, &hash, &runs)
}

fn baseline(common: &Common, method: &str, split_dir: Option<&Path>) -> Result<()> {
    let cfg = common.config()?;
    let method: Method = method.parse()?;
    let hash = run_hash(&cfg, split_dir)?;
    let runs = run_predictor(common, &cfg, Predictor::Baseline(method), split_dir)?;
    finish("baseline", common, &cfg, &hash, &runs)
}

fn default_methods(task: Task) -> Vec<Method> {
    match task {
        Task::LinkPrediction => vec![Method::AdamicAdar, Method::Katz, Method::PageRank],
        Task::WeightRegression => vec![Method::Reciprocal, Method::PageRank],
    }
}

fn sweep(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let (g, bytes) = load_dataset(&cfg)?;
    let hash = content_hash(&cfg, &bytes)?;
    let methods = if cfg.baselines.methods.is_empty() { default_methods(cfg.task) } else { cfg.baselines.methods.clone() };
    let predictors: Vec<Predictor> =
        std::iter::once(Predictor::Leap).chain(methods.into_iter().map(Predictor::Baseline)).collect();
    let mut runs = Vec::new();
    for &fraction in &cfg.split.sweep {
        for &seed in &cfg.seeds {
            for &p in &predictors {
                let r = run_once(&cfg, &g, p, fraction, seed)?;
                print_run(&cfg, &r);
                save_artifacts(&common.out_dir, &cfg, &r)?;
                runs.push(r);
            }
        }
    }
    finish("sweep", common, &cfg, &hash, &runs)
}

fn eval(model_path: &Path, split_dir: &Path, pairs: Option<&Path>, out_dir: &Path) -> Result<()> {
    let model = LeapModel::load(model_path).with_context(|| format!("loading {}", model_path.display()))?;
    let files = SplitFiles::read(split_dir).with_context(|| format!("reading split {}", split_dir.display()))?;
    let g = &files.train_graph;
    if g.node_count() != model.header().node_count {
        bail!("model has {} nodes, split graph has {}", model.header().node_count, g.node_count());
    }
    let set = match pairs {
        Some(p) => LabeledPairSet::read_csv(g, BufReader::new(File::open(p)?))?,
        None => files.test_set.clone(),
    };
    if set.is_empty() {
        bail!("no pairs to evaluate");
    }
    let (scored, metrics) = score_model(&model, g, &set)?;
    println!("{}", metrics.describe());

    fs::create_dir_all(out_dir)?;
    scored.write_csv(g, BufWriter::new(File::create(out_dir.join("eval_scores.csv"))?))?;
    let mut cfg = ExperimentConfig { task: model.task(), ..Default::default() };
    cfg.model = model.header().model.clone();
    cfg.assembler = model.header().assembler.clone();
    let mut evidence = fs::read(model_path)?;
    evidence.extend(fs::read(pairs.map(Path::to_path_buf).unwrap_or_else(|| split_dir.join("test_pairs.csv")))?);
    let hash = content_hash(&cfg, &evidence)?;
    let run = RunOutcome {
        predictor: Predictor::Leap,
        seed: files.meta.seed,
        test_fraction: files.meta.test_fraction,
        split: files.into_split(),
        scored,
        metrics,
        model: None,
        history: None,
        seconds: 0.0,
    };
    append_report(out_dir, "eval", &hash, &cfg, std::slice::from_ref(&run))?;
    append_metrics_csv(out_dir, &hash, &cfg, std::slice::from_ref(&run))?;
    write_plot_csv(out_dir, &cfg, std::slice::from_ref(&run))?;
    Ok(())
}
