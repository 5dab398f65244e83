//! Random hyperparameter search with repeated executions per trial.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::network::{Activation, DenseSpec, LstmNetwork, LstmSpec};
use super::train::{evaluate, train, Sample, TrainConfig};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};

/// Candidate values for every tuned field. Units, activation and recurrent
/// dropout are drawn independently for each layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSpace {
    pub lstm_layers: Vec<usize>,
    pub dense_layers: Vec<usize>,
    pub units: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub activations: Vec<Activation>,
    pub recurrent_dropouts: Vec<f64>,
    pub dropouts: Vec<f64>,
    pub losses: Vec<LossKind>,
}

impl Default for HyperSpace {
    fn default() -> Self {
        let rates = vec![0.0, 0.05, 0.1, 0.15, 0.2];
        Self {
            lstm_layers: vec![1, 2, 3],
            dense_layers: vec![0, 1, 2, 3],
            units: vec![32, 64, 128],
            learning_rates: vec![1e-4, 5e-4, 1e-3, 5e-3, 1e-2],
            activations: vec![Activation::Tanh, Activation::Relu, Activation::Sigmoid],
            recurrent_dropouts: rates.clone(),
            dropouts: rates,
            losses: vec![LossKind::Mse, LossKind::Mae],
        }
    }
}

impl HyperSpace {
    /// A space containing exactly `hp`.
    pub fn single(hp: &HyperParams) -> Self {
        let first = hp.lstm.first();
        Self {
            lstm_layers: vec![hp.lstm.len()],
            dense_layers: vec![hp.dense.len()],
            units: unique(hp.lstm.iter().map(|l| l.units).chain(hp.dense.iter().map(|d| d.units))),
            learning_rates: vec![hp.learning_rate],
            activations: unique(
                hp.lstm.iter().map(|l| l.activation).chain(hp.dense.iter().map(|d| d.activation)),
            ),
            recurrent_dropouts: first.map_or(vec![0.0], |l| vec![l.recurrent_dropout]),
            dropouts: vec![hp.dropout],
            losses: vec![hp.loss],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = [
            ("lstm_layers", self.lstm_layers.is_empty()),
            ("dense_layers", self.dense_layers.is_empty()),
            ("units", self.units.is_empty()),
            ("learning_rates", self.learning_rates.is_empty()),
            ("activations", self.activations.is_empty()),
            ("recurrent_dropouts", self.recurrent_dropouts.is_empty()),
            ("dropouts", self.dropouts.is_empty()),
            ("losses", self.losses.is_empty()),
        ];
        let mut problems: Vec<String> = empty
            .iter()
            .filter(|(_, e)| *e)
            .map(|(name, _)| format!("search space field {name} is empty"))
            .collect();
        if self.lstm_layers.iter().any(|&n| !(1..=3).contains(&n)) {
            problems.push("lstm_layers must lie in 1..=3".into());
        }
        if self.dense_layers.iter().any(|&n| n > 3) {
            problems.push("dense_layers must lie in 0..=3".into());
        }
        if self.units.contains(&0) {
            problems.push("units must be positive".into());
        }
        if self.learning_rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            problems.push("learning rates must be positive".into());
        }
        let bad_rate = |r: &f64| !(0.0..1.0).contains(r);
        if self.recurrent_dropouts.iter().any(bad_rate) || self.dropouts.iter().any(bad_rate) {
            problems.push("dropout rates must lie in [0, 1)".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Number of distinct configurations, as a float to survive overflow.
    pub fn cardinality(&self) -> f64 {
        let per_lstm = (self.units.len() * self.activations.len() * self.recurrent_dropouts.len()) as f64;
        let per_dense = (self.units.len() * self.activations.len()) as f64;
        let shapes: f64 = self
            .lstm_layers
            .iter()
            .flat_map(|&nl| {
                self.dense_layers
                    .iter()
                    .map(move |&nd| per_lstm.powi(nl as i32) * per_dense.powi(nd as i32))
            })
            .sum();
        shapes * (self.learning_rates.len() * self.dropouts.len() * self.losses.len()) as f64
    }

    pub fn sample(&self, rng: &mut impl Rng) -> HyperParams {
        let pick = |v: &[usize], rng: &mut _| *v.choose(rng).expect("validated non-empty");
        let n_lstm = pick(&self.lstm_layers, rng);
        let n_dense = pick(&self.dense_layers, rng);
        let lstm = (0..n_lstm)
            .map(|_| LstmSpec {
                units: pick(&self.units, rng),
                activation: *self.activations.choose(rng).unwrap(),
                recurrent_dropout: *self.recurrent_dropouts.choose(rng).unwrap(),
            })
            .collect();
        let dense = (0..n_dense)
            .map(|_| DenseSpec {
                units: pick(&self.units, rng),
                activation: *self.activations.choose(rng).unwrap(),
            })
            .collect();
        HyperParams {
            lstm,
            dense,
            dropout: *self.dropouts.choose(rng).unwrap(),
            learning_rate: *self.learning_rates.choose(rng).unwrap(),
            loss: *self.losses.choose(rng).unwrap(),
        }
    }
}

fn unique<T: PartialEq>(it: impl Iterator<Item = T>) -> Vec<T> {
    let mut out = Vec::new();
    for x in it {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// One architecture and optimiser setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub lstm: Vec<LstmSpec>,
    pub dense: Vec<DenseSpec>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub loss: LossKind,
}

impl HyperParams {
    pub fn build(&self, input_dim: usize, rng: &mut impl Rng) -> Result<LstmNetwork> {
        LstmNetwork::new(input_dim, &self.lstm, &self.dense, self.loss, self.dropout, rng)
    }

    fn key(&self) -> String {
        format!("{self:?}")
    }
}

/// How trials are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Each execution's best validation value of its own training loss.
    TrainingLoss,
    /// Validation MSE at the restored weights, so trials trained on
    /// different losses stay comparable.
    ValMse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub n_trials: usize,
    pub executions_per_trial: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub objective: Objective,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_trials: 25,
            executions_per_trial: 3,
            max_epochs: 50,
            patience: 5,
            batch_size: 32,
            objective: Objective::ValMse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub hyperparams: HyperParams,
    /// One score per execution; failed executions score `+inf`.
    pub scores: Vec<f64>,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: HyperParams,
    pub best_trial: usize,
    pub trials: Vec<TrialResult>,
}

impl SearchResult {
    pub fn mean_scores(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.mean_score).collect()
    }
}

/// Draws the trial configurations: without replacement when the space is at
/// least as large as `n_trials`.
pub fn draw_trials(space: &HyperSpace, n_trials: usize, rng: &mut impl Rng) -> Vec<HyperParams> {
    let distinct = space.cardinality() >= n_trials as f64;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n_trials);
    while out.len() < n_trials {
        let hp = space.sample(rng);
        if !distinct || seen.insert(hp.key()) {
            out.push(hp);
        }
    }
    out
}

fn run_execution(
    hp: &HyperParams,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &SearchConfig,
    seed: u64,
) -> Result<f64> {
    let input_dim = train_set.first().map_or(0, |s| s.input.cols());
    let mut net = hp.build(input_dim, &mut rng_from(derive_seed(seed, &[0])))?;
    let train_config = TrainConfig {
        max_epochs: config.max_epochs,
        patience: config.patience,
        batch_size: config.batch_size,
        learning_rate: hp.learning_rate,
    };
    let report = train(&mut net, train_set, val_set, &train_config, derive_seed(seed, &[1]))?;
    match config.objective {
        Objective::TrainingLoss => Ok(report.best_val_loss),
        Objective::ValMse => evaluate(&net, val_set, LossKind::Mse),
    }
}

/// Random search over `space`. Execution `e` of trial `t` is seeded from
/// `(seed, t, e)`, so results do not depend on scheduling.
pub fn random_search(
    space: &HyperSpace,
    config: &SearchConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    seed: u64,
) -> Result<SearchResult> {
    space.validate()?;
    if config.n_trials == 0 || config.executions_per_trial == 0 {
        return Err(Error::InvalidArgument(
            "n_trials and executions_per_trial must be at least 1".into(),
        ));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    let mut rng = rng_from(derive_seed(seed, &[u64::MAX]));
    let configs = draw_trials(space, config.n_trials, &mut rng);

    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|t| (0..config.executions_per_trial).map(move |e| (t, e)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(t, e)| {
            let s = derive_seed(seed, &[t as u64, e as u64]);
            match run_execution(&configs[t], train_set, val_set, config, s) {
                Ok(v) if v.is_finite() => v,
                _ => f64::INFINITY,
            }
        })
        .collect();

    let trials: Vec<TrialResult> = configs
        .into_iter()
        .zip(scores.chunks(config.executions_per_trial))
        .map(|(hyperparams, s)| TrialResult {
            hyperparams,
            scores: s.to_vec(),
            mean_score: s.iter().sum::<f64>() / s.len() as f64,
        })
        .collect();
    // first minimum wins; all-infinite keeps trial 0
    let best_trial = trials
        .iter()
        .enumerate()
        .fold(0, |b, (i, t)| if t.mean_score < trials[b].mean_score { i } else { b });
    Ok(SearchResult {
        best: trials[best_trial].hyperparams.clone(),
        best_trial,
        trials,
    })
}
