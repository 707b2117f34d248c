//! Mini-batch training loop.
//!
//! Each epoch visits the samples in a permutation drawn from the seed and the
//! epoch index. Per-sample gradients are computed in parallel and summed in
//! batch order, so results do not depend on the thread count.

use std::fmt::Write as _;

use lsd2_core::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::model::{Model, ModelKind, TrainSample};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub initial_lr: f64,
    /// The learning rate halves every this many epochs.
    pub lr_halving_period: Option<usize>,
    pub batch_size: usize,
    pub seed: u64,
    /// Stops once this many optimizer steps have been taken in total.
    #[serde(default)]
    pub max_steps: Option<u64>,
}

impl TrainConfig {
    pub fn lsd2() -> Self {
        TrainConfig {
            epochs: 30,
            initial_lr: 5e-5,
            lr_halving_period: Some(10),
            batch_size: 1,
            seed: 0,
            max_steps: None,
        }
    }

    pub fn fusion() -> Self {
        TrainConfig {
            epochs: 5,
            initial_lr: 2e-5,
            lr_halving_period: None,
            ..Self::lsd2()
        }
    }

    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lsd2 => Self::lsd2(),
            ModelKind::Fusion => Self::fusion(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!(
                "initial learning rate must be positive, got {}",
                self.initial_lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.lr_halving_period == Some(0) {
            return Err(Error::Config("learning rate halving period must be at least 1".into()));
        }
        Ok(())
    }

    /// Learning rate used during (0-based) `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_halving_period {
            Some(p) => self.initial_lr * 0.5f64.powi((epoch / p) as i32),
            None => self.initial_lr,
        }
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub model: Model<T>,
    pub adam: AdamState<T>,
    pub epochs_done: usize,
    /// Mean training loss of each finished epoch.
    pub losses: Vec<f64>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(model: Model<T>, config: &TrainConfig) -> Self {
        let adam = AdamState::new(model.params(), config.initial_lr);
        TrainState {
            model,
            adam,
            epochs_done: 0,
            losses: Vec::new(),
        }
    }

    fn steps_exhausted(&self, config: &TrainConfig) -> bool {
        config.max_steps.is_some_and(|m| self.adam.step >= m)
    }
}

/// Trains until `config.epochs` epochs are done (or the step budget runs
/// out), calling `on_epoch` after every epoch.
pub fn train<T: Scalar>(
    state: &mut TrainState<T>,
    data: &[TrainSample<T>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&TrainState<T>) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Training {
            epoch: state.epochs_done,
            batch: 0,
            reason: "dataset is empty".into(),
        });
    }
    while state.epochs_done < config.epochs && !state.steps_exhausted(config) {
        let loss = run_epoch(state, data, config)?;
        state.losses.push(loss);
        state.epochs_done += 1;
        on_epoch(state)?;
    }
    Ok(())
}

fn run_epoch<T: Scalar>(state: &mut TrainState<T>, data: &[TrainSample<T>], config: &TrainConfig) -> Result<f64> {
    let epoch = state.epochs_done;
    state.adam.lr = config.lr_at(epoch);
    let order = Rng::stream(config.seed, epoch as u64 + 1).permutation(data.len());
    let mut total = 0.0;
    let mut batches = 0usize;
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        if state.steps_exhausted(config) {
            break;
        }
        let model = &state.model;
        let results: Vec<Result<(T, Vec<Tensor<T>>)>> =
            chunk.par_iter().map(|&i| model.loss_and_grads(&data[i])).collect();
        let mut loss_sum = 0.0;
        let mut grads: Option<Vec<Tensor<T>>> = None;
        for r in results {
            let (loss, g) = r?;
            loss_sum += loss.to_f64().unwrap();
            match grads.as_mut() {
                None => grads = Some(g),
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, x)| a.add_assign(x)),
            }
        }
        let mut grads = grads.expect("non-empty batch");
        let batch_loss = loss_sum / chunk.len() as f64;
        if !batch_loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::Training {
                epoch,
                batch: b,
                reason: diagnose(batch_loss, chunk, &grads, state),
            });
        }
        let inv = T::from_f64_lossy(1.0 / chunk.len() as f64);
        grads.iter_mut().for_each(|g| g.scale(inv));
        let TrainState { model, adam, .. } = state;
        adam.step(model.params_mut(), &grads);
        total += batch_loss;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

fn diagnose<T: Scalar>(loss: f64, samples: &[usize], grads: &[Tensor<T>], state: &TrainState<T>) -> String {
    let mut msg = format!("non-finite loss or gradient (loss {loss}, samples {samples:?}, lr {})", state.adam.lr);
    for (p, g) in state.model.params().iter().zip(grads) {
        if !g.all_finite() {
            let _ = write!(msg, "; gradient of {} is non-finite", p.name);
            break;
        }
    }
    msg
}

/// Loss record as CSV with header `epoch,loss` (epochs numbered from 1).
pub fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l}", i + 1);
    }
    s
}
