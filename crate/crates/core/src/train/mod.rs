//! Supervised data from an optimal planner, minibatch training, checkpoints.

mod checkpoint;
mod dataset;

use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::PlanningGraph;
use crate::model::{Model, ModelConfig, ModelError, SupervisionTarget};
use crate::pddl::{applicable, ground_actions, Domain};
use crate::tensor::{AdamState, TensorError};

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{
    domain_sha, generate_dataset, meta_path, parse_atom, trajectory_examples, Dataset, DatasetError, ExampleRecord,
    Provenance, SkipRecord, Split, TrainingExample,
};

pub const DEFAULT_LR: f64 = 0.0005;
pub const DEFAULT_BATCH: usize = 16;
pub const DEFAULT_EPOCHS: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("dataset domain {found} does not match {expected}")]
    DomainMismatch { expected: String, found: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("example {index} ({instance}): {msg}")]
    InvalidExample { index: usize, instance: String, msg: String },
    #[error("loss became non-finite ({loss}) in epoch {epoch}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: DEFAULT_LR, batch: DEFAULT_BATCH, max_epochs: DEFAULT_EPOCHS, seed: 0, model: ModelConfig::default() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if self.model.hidden == 0 {
            return bad("hidden must be at least 1");
        }
        Ok(())
    }
}

/// Per-epoch metrics. Training figures are averaged over the epoch's
/// minibatches (before each update); validation figures use the weights at
/// the end of the epoch. Accuracy is the fraction of examples whose greedy
/// decoding is exactly the target grounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
}

/// An example ready for the model: its graph and its target.
pub struct Prepared {
    pub graph: PlanningGraph,
    pub target: SupervisionTarget,
}

/// Builds graphs under `model`'s ablation and checks every target is one of
/// the example's applicable actions.
pub fn prepare(domain: &Domain, model: &Model, examples: &[TrainingExample]) -> Result<Vec<Prepared>, TrainError> {
    examples
        .par_iter()
        .enumerate()
        .map(|(index, ex)| {
            let bad = |msg: String| TrainError::InvalidExample { index, instance: ex.instance_id.clone(), msg };
            let all = ground_actions(domain, &ex.instance);
            let acts: Vec<_> = all.iter().filter(|a| applicable(ex.state(), a)).collect();
            if !acts.iter().any(|a| a.same_grounding(ex.target.schema, &ex.target.args)) {
                return Err(bad("target is not applicable in its state".into()));
            }
            let graph = model.graph(domain, &ex.instance, ex.state(), &acts)?;
            Ok(Prepared { graph, target: ex.target.clone() })
        })
        .collect()
}

/// Mean loss and greedy accuracy over `data`.
pub fn evaluate_loss(model: &Model, data: &[Prepared]) -> Result<(f64, f64), TrainError> {
    let results: Vec<(f64, bool)> =
        data.par_iter().map(|p| model.loss_and_hit(&p.graph, &p.target)).collect::<Result<_, _>>()?;
    Ok(mean_metrics(results.iter().copied()))
}

fn mean_metrics(it: impl Iterator<Item = (f64, bool)>) -> (f64, f64) {
    let (mut loss, mut hits, mut n) = (0.0, 0usize, 0usize);
    for (l, h) in it {
        loss += l;
        hits += h as usize;
        n += 1;
    }
    (loss / n.max(1) as f64, hits as f64 / n.max(1) as f64)
}

pub fn train(domain: &Domain, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(domain, train, val, cfg, |_| ControlFlow::Continue(()))
}

/// Minibatch Adam on the summed schema and object cross entropies.
///
/// Examples are reshuffled every epoch from a stream seeded by
/// `(cfg.seed, epoch)`. Per-example gradients are computed on the current
/// rayon pool but reduced in batch order, so results do not depend on the
/// thread count. The returned checkpoint holds the weights with the lowest
/// validation loss seen at the end of any epoch (earliest on ties).
/// `on_epoch` sees each log entry and may stop training early.
pub fn train_with(
    domain: &Domain,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let sha = domain_sha(domain);
    for ds in [train, val] {
        if ds.domain_sha != sha {
            return Err(TrainError::DomainMismatch { expected: sha, found: ds.domain_sha.clone() });
        }
    }
    let mut model = Model::new(domain, cfg.model, cfg.seed)?;
    let train_data = prepare(domain, &model, &train.examples)?;
    let val_data = prepare(domain, &model, &val.examples)?;
    let mut adam = AdamState::new(cfg.lr);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut seen = Vec::with_capacity(order.len());
        for chunk in order.chunks(cfg.batch) {
            let m = &model;
            let results: Vec<_> = chunk
                .par_iter()
                .map(|&i| m.loss_and_grad(&train_data[i].graph, &train_data[i].target))
                .collect::<Result<_, _>>()?;
            model.params.zero_grad();
            let scale = 1.0 / chunk.len() as f64;
            for (loss, hit, grads) in &results {
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { epoch, loss: *loss });
                }
                model.params.accumulate(grads, scale)?;
                seen.push((*loss, *hit));
            }
            adam.step(&mut model.params)?;
        }
        model.params.clear_grad();
        let (train_loss, train_acc) = mean_metrics(seen.into_iter());
        let (val_loss, val_acc) = evaluate_loss(&model, &val_data)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss: val_loss });
        }
        let entry = EpochLog { epoch, train_loss, train_acc, val_loss, val_acc };
        log.push(entry);
        if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
        }
        if on_epoch(&entry).is_break() {
            break;
        }
    }
    let (best_val_loss, epoch, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint { model, best_val_loss: Some(best_val_loss), epoch, domain_sha: sha, train: Some(*cfg) },
        log,
    })
}

#[cfg(test)]
mod tests;
