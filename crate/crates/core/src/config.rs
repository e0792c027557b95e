//! Experiment configuration files (TOML).
//!
//! ```toml
//! task = "lp"
//! dataset = "usair.txt"
//! seeds = [0, 1, 2]
//!
//! [split]
//! test_fraction = 0.1
//!
//! [assembler]
//! lengths = [3, 4]
//! cap = 50
//!
//! [model]
//! aggregator = "edgeconv"
//!
//! [train]
//! max_epochs = 30
//! ```
//!
//! Every section and key is optional; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::graph::{Delimiter, LoadOptions};
use crate::model::{ModelConfig, TrainConfig};
use crate::paths::AssemblerConfig;
use crate::split::Task;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Fraction of edges moved to the test side (`δ` for weight regression).
    pub test_fraction: f64,
    /// Fractions visited by the sweep command.
    pub sweep: Vec<f64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { test_fraction: 0.1, sweep: (1..=8).map(|i| f64::from(i) / 10.0).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Edge list, relative to the config file's directory.
    pub dataset: Option<PathBuf>,
    pub directed: bool,
    pub weighted: bool,
    /// `"whitespace"` or a single character such as `","`.
    pub delimiter: String,
    /// Divide weights by the largest magnitude before splitting.
    pub normalize_weights: bool,
    pub seeds: Vec<u64>,
    pub pretrained_embeddings: Option<PathBuf>,
    pub fine_tune_embeddings: bool,
    pub node_features: Option<PathBuf>,
    pub split: SplitConfig,
    pub assembler: AssemblerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub baselines: BaselineConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::LinkPrediction,
            dataset: None,
            directed: false,
            weighted: false,
            delimiter: "whitespace".into(),
            normalize_weights: true,
            seeds: vec![0, 1, 2],
            pretrained_embeddings: None,
            fine_tune_embeddings: false,
            node_features: None,
            split: SplitConfig::default(),
            assembler: AssemblerConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            baselines: BaselineConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative file references are resolved against its directory.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.pretrained_embeddings, &mut cfg.node_features].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok((cfg, text))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            return Err(Error::Config(format!("split.test_fraction {} not in (0, 1)", self.split.test_fraction)));
        }
        if let Some(f) = self.split.sweep.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(Error::Config(format!("split.sweep value {f} not in (0, 1)")));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if self.task == Task::WeightRegression && !self.weighted {
            return Err(Error::Config("task \"wsn\" needs weighted = true".into()));
        }
        self.delimiter()?;
        self.assembler.validate().map_err(|e| Error::Config(format!("assembler: {e}")))?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn delimiter(&self) -> Result<Delimiter> {
        let mut chars = self.delimiter.chars();
        match (self.delimiter.as_str(), chars.next(), chars.next()) {
            ("whitespace", _, _) => Ok(Delimiter::Whitespace),
            (_, Some(c), None) => Ok(Delimiter::Char(c)),
            _ => Err(Error::Config(format!("delimiter {:?} must be \"whitespace\" or one character", self.delimiter))),
        }
    }

    pub fn load_options(&self) -> Result<LoadOptions> {
        Ok(LoadOptions { directed: self.directed, weighted: self.weighted, delimiter: self.delimiter()? })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Hex SHA-256 over the effective configuration and the dataset bytes.
pub fn content_hash(config: &ExperimentConfig, dataset: &[u8]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(config.to_toml()?.as_bytes());
    h.update([0u8]);
    h.update(dataset);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregators::AggregatorKind;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.assembler.lengths, vec![3, 4]);
        assert_eq!(cfg.assembler.cap, 50);
        assert_eq!(cfg.train.max_epochs, 30);
        assert_eq!(cfg.train.adam.lr, 0.001);
        assert_eq!(cfg.split.sweep.len(), 8);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = ExperimentConfig::parse(
            r#"
task = "wsn"
weighted = true
directed = true
delimiter = ","
seeds = [7]

[split]
test_fraction = 0.3

[assembler]
lengths = [2, 3, 4]

[model]
aggregator = "seqofseq"
embedding_dim = 16

[model.widths]
outer_lstm = 8

[train.adam]
lr = 0.01
"#,
        )
        .unwrap();
        assert_eq!(cfg.task, Task::WeightRegression);
        assert_eq!(cfg.delimiter().unwrap(), Delimiter::Char(','));
        assert_eq!(cfg.model.aggregator, AggregatorKind::SeqOfSeq);
        assert_eq!(cfg.model.widths.outer_lstm, 8);
        assert_eq!(cfg.model.widths.inner_lstm, 32);
        assert_eq!(cfg.train.adam.lr, 0.01);
        assert_eq!(cfg.assembler.lengths, vec![2, 3, 4]);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::parse("[train]\nlearning_rat = 0.1\n").unwrap_err().to_string();
        assert!(err.contains("learning_rat"), "{err}");
        let err = ExperimentConfig::parse("colour = 1\n").unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "[split]\ntest_fraction = 1.5",
            "seeds = []",
            "task = \"wsn\"",
            "delimiter = \"ab\"",
            "[assembler]\nlengths = [1]",
            "[train]\nbatch_size = 0",
        ] {
            assert!(ExperimentConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_tracks_config_and_data() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { seeds: vec![1], ..Default::default() };
        let h = content_hash(&a, b"1 2\n").unwrap();
        assert_eq!(h.len(), 64);
        assert_eq!(h, content_hash(&a, b"1 2\n").unwrap());
        assert_ne!(h, content_hash(&b, b"1 2\n").unwrap());
        assert_ne!(h, content_hash(&a, b"1 3\n").unwrap());
    }
}
