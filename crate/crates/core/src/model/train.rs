use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LeapModel;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::paths::PathSet;
use crate::seed;
use crate::split::LabeledPairSet;
use crate::tensor::{Adam, AdamConfig, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { batch_size: 32, max_epochs: 30, patience: 5, validation_fraction: 0.1, adam: AdamConfig::default() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config("batch_size and patience must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!("validation_fraction {} not in [0, 1)", self.validation_fraction)));
        }
        if self.adam.lr.is_nan() || self.adam.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate {} must be positive", self.adam.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Loss on the monitored set (the training set when no validation pairs exist).
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.epochs.iter().find(|r| r.epoch == e))
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_loss,val_loss")?;
        for r in &self.epochs {
            writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_loss)?;
        }
        Ok(())
    }
}

/// Holds out `cfg.validation_fraction` of `train_set` for early stopping and
/// trains on the rest.
pub fn fit(model: &mut LeapModel, g: &Graph, train_set: &LabeledPairSet, cfg: &TrainConfig, seed: u64) -> Result<History> {
    let (kept, held) = train_set.holdout(cfg.validation_fraction, seed::derive(seed, &[0x7a1]))?;
    train(model, g, &kept, &held, cfg, seed)
}

/// Mini-batch Adam with early stopping on `val_set`; the parameters of the
/// best epoch are restored at the end.
pub fn train(
    model: &mut LeapModel,
    g: &Graph,
    train_set: &LabeledPairSet,
    val_set: &LabeledPairSet,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<History> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut history = History::default();
    if cfg.max_epochs == 0 {
        return Ok(history);
    }
    let train_paths = model.all_pair_paths(g, train_set.pairs())?;
    let val_paths = model.all_pair_paths(g, val_set.pairs())?;
    let (monitor, monitor_paths) =
        if val_set.is_empty() { (train_set, &train_paths) } else { (val_set, &val_paths) };

    let mut adam = Adam::new(cfg.adam, model.params());
    let mut best: Option<(f64, ParamStore)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut seed::rng(seed, &[0xe90c, epoch as u64]));
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let loss = step(model, &mut adam, g, train_set, &train_paths, batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss {loss} at epoch {epoch}, batch {b}")));
            }
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = model.mean_loss(g, monitor.pairs(), monitor.labels(), monitor_paths)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFinite(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss });
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params().clone()));
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(history)
}

/// One Adam update on the mean loss of `batch`; returns that loss.
fn step(
    model: &mut LeapModel,
    adam: &mut Adam,
    g: &Graph,
    set: &LabeledPairSet,
    paths: &[Vec<PathSet>],
    batch: &[usize],
) -> Result<f64> {
    let m: &LeapModel = model;
    let results = batch
        .par_iter()
        .map(|&i| {
            let (u, v) = set.pairs()[i];
            m.run_sample(g, u, v, &paths[i], Some(set.labels()[i]), true)
        })
        .collect::<Result<Vec<_>>>()?;

    let store = model.params();
    let scale = 1.0 / batch.len() as f64;
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; store.len()];
    let emb = model.embedding_id();
    let k = store.get(emb).shape()[1];
    let mut loss = 0.0;
    // summed in batch order so results do not depend on thread scheduling
    for r in &results {
        loss += r.loss * scale;
        let Some(sg) = &r.grads else { continue };
        for (slot, g) in grads.iter_mut().zip(&sg.params) {
            if let Some(g) = g {
                let acc = slot.get_or_insert_with(|| vec![0.0; g.len()]);
                acc.iter_mut().zip(g).for_each(|(a, x)| *a += x * scale);
            }
        }
        if !sg.embedding_rows.is_empty() {
            let acc = grads[emb.index()].get_or_insert_with(|| vec![0.0; store.get(emb).len()]);
            for (x, row) in &sg.embedding_rows {
                acc[x * k..(x + 1) * k].iter_mut().zip(row).for_each(|(a, g)| *a += g * scale);
            }
        }
    }
    adam.step(model.params_mut(), &grads);
    Ok(loss)
}
