use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::backprop::{backward_with_masks, DropoutMasks};
use super::loss::{loss, LossKind};
use super::matrix::Matrix;
use super::network::LstmNetwork;
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// One training sequence.
///
/// `reference` is subtracted from both target and prediction before the loss
/// is taken. It cancels for MSE/MAE; for MADL it turns levels into the
/// directional move relative to the last observed value.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Matrix,
    pub target: f64,
    pub reference: f64,
}

impl Sample {
    pub fn new(input: Matrix, target: f64) -> Self {
        Self {
            input,
            target,
            reference: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            patience: 5,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// One-based; `val_loss_curve[best_epoch - 1] == best_val_loss`.
    pub best_epoch: usize,
    pub train_loss_curve: Vec<f64>,
    pub val_loss_curve: Vec<f64>,
    pub best_val_loss: f64,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss` with one-based epochs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for (i, (t, v)) in self.train_loss_curve.iter().zip(&self.val_loss_curve).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, t, v));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.waited = 0;
            StopDecision::Improved
        } else {
            self.waited += 1;
            if self.waited >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

/// `w <- w - learning_rate * grad`, elementwise.
pub fn sgd_step(net: &mut LstmNetwork, grads: &LstmNetwork, learning_rate: f64) {
    for (w, g) in net.params_mut().into_iter().zip(grads.params()) {
        for (wi, gi) in w.iter_mut().zip(g) {
            *wi -= learning_rate * gi;
        }
    }
}

/// Exact configured loss of the network over a sample set.
pub fn evaluate(net: &LstmNetwork, samples: &[Sample], kind: LossKind) -> Result<f64> {
    let preds = samples
        .iter()
        .map(|s| net.forward(&s.input).map(|p| p - s.reference))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = samples.iter().map(|s| s.target - s.reference).collect();
    loss(kind, &targets, &preds)
}

/// Mini-batch SGD with per-epoch validation and early stopping. On return the
/// network holds the weights of the best validation epoch.
pub fn train(
    net: &mut LstmNetwork,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainReport> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    if config.batch_size == 0 || config.max_epochs == 0 || !(config.learning_rate >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid training config {config:?}")));
    }
    net.validate()?;

    let mut rng = rng_from(seed);
    let dropout = DropoutMasks::uses_dropout(net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience.max(1));
    let mut best_weights = net.clone();
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let masks: Option<Vec<DropoutMasks>> =
                dropout.then(|| batch.iter().map(|_| DropoutMasks::sample(net, &mut rng)).collect());
            let (batch_loss, grads) = backward_with_masks(net, &batch, masks.as_deref())?;
            epoch_loss += batch_loss * batch.len() as f64;
            sgd_step(net, &grads, config.learning_rate);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = evaluate(net, val_set, net.loss)?;
        if !train_loss.is_finite() || !val_loss.is_finite() || !net.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        train_curve.push(train_loss);
        val_curve.push(val_loss);
        match stopper.update(epoch + 1, val_loss) {
            StopDecision::Improved => best_weights.clone_from(net),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    *net = best_weights;
    let (best_epoch, best_val_loss) = stopper.best();
    Ok(TrainReport {
        epochs_run: val_curve.len(),
        best_epoch,
        train_loss_curve: train_curve,
        val_loss_curve: val_curve,
        best_val_loss,
    })
}
