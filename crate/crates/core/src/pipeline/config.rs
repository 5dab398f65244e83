//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scaler::ScalerKind;
use super::windows::WindowPlan;
use crate::error::{Error, Result};
use crate::marketdata::PriceColumns;
use crate::neuralnet::{HyperParams, HyperSpace, LossKind, Objective, SearchConfig};
use crate::svmodel::{RollingSvConfig, MIN_RETURNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Sv,
    Lstm,
    Hybrid,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Sv => "sv",
            ModelKind::Lstm => "lstm",
            ModelKind::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sv" => Ok(ModelKind::Sv),
            "lstm" => Ok(ModelKind::Lstm),
            "hybrid" => Ok(ModelKind::Hybrid),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub prices: PathBuf,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_close_column")]
    pub close_column: String,
    /// Precomputed rolling SV forecasts to reuse instead of refitting.
    #[serde(default)]
    pub sv_forecasts: Option<PathBuf>,
}

fn default_date_column() -> String {
    PriceColumns::default().date
}

fn default_close_column() -> String {
    PriceColumns::default().close
}

impl DataConfig {
    pub fn columns(&self) -> PriceColumns {
        PriceColumns {
            date: self.date_column.clone(),
            close: self.close_column.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub model: ModelKind,
    pub lookback: usize,
    pub scaler: ScalerKind,
    /// Forces the training loss; `None` leaves it to the search space or the
    /// pinned hyperparameters.
    pub loss: Option<LossKind>,
    pub vol_window: usize,
    pub seed: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Hybrid,
            lookback: 21,
            scaler: ScalerKind::Minmax,
            loss: None,
            vol_window: 21,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub n_trials: usize,
    pub executions_per_trial: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub objective: Objective,
    pub final_epochs: usize,
    pub final_patience: usize,
    pub space: HyperSpace,
}

impl Default for TuningConfig {
    fn default() -> Self {
        let s = SearchConfig::default();
        Self {
            n_trials: s.n_trials,
            executions_per_trial: s.executions_per_trial,
            max_epochs: s.max_epochs,
            patience: s.patience,
            batch_size: s.batch_size,
            objective: s.objective,
            final_epochs: 100,
            final_patience: 10,
            space: HyperSpace::default(),
        }
    }
}

impl TuningConfig {
    pub fn search(&self) -> SearchConfig {
        SearchConfig {
            n_trials: self.n_trials,
            executions_per_trial: self.executions_per_trial,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            objective: self.objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub windows: WindowPlan,
    #[serde(default)]
    pub sv: RollingSvConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    /// Pinned hyperparameters; tuning is skipped when present.
    #[serde(default)]
    pub hyperparams: Option<HyperParams>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.prices = base.join(&cfg.data.prices);
        if let Some(p) = &cfg.data.sv_forecasts {
            cfg.data.sv_forecasts = Some(base.join(p));
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Every problem found, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = &self.plan;
        let w = &self.windows;
        if p.lookback == 0 {
            out.push("plan.lookback must be at least 1".into());
        }
        if p.vol_window < 2 {
            out.push("plan.vol_window must be at least 2".into());
        }
        if let Err(e) = w.validate() {
            out.push(e.to_string());
        }
        if p.model != ModelKind::Sv {
            if w.train_days <= p.lookback {
                out.push(format!(
                    "windows.train_days ({}) must exceed plan.lookback ({})",
                    w.train_days, p.lookback
                ));
            }
            if w.val_days <= p.lookback {
                out.push(format!(
                    "windows.val_days ({}) must exceed plan.lookback ({})",
                    w.val_days, p.lookback
                ));
            }
        }
        if self.sv.train_len < MIN_RETURNS {
            out.push(format!("sv.train_len must be at least {MIN_RETURNS}"));
        }
        if let Err(e) = self.sv.sampler.validate() {
            out.push(format!("sv.sampler: {e}"));
        }
        if self.sv.quantiles.iter().any(|q| !(0.0..=1.0).contains(q)) {
            out.push("sv.quantiles must lie in [0, 1]".into());
        }
        if p.model != ModelKind::Sv {
            let t = &self.tuning;
            if t.batch_size == 0 {
                out.push("tuning.batch_size must be at least 1".into());
            }
            if t.final_epochs == 0 {
                out.push("tuning.final_epochs must be at least 1".into());
            }
            match &self.hyperparams {
                Some(hp) => out.extend(hyperparam_problems(hp)),
                None => {
                    if t.n_trials == 0 || t.executions_per_trial == 0 || t.max_epochs == 0 {
                        out.push("tuning.n_trials, executions_per_trial and max_epochs must be at least 1".into());
                    }
                    if let Err(e) = t.space.validate() {
                        out.push(format!("tuning.space: {e}"));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

fn hyperparam_problems(hp: &HyperParams) -> Vec<String> {
    let mut out = Vec::new();
    if !(1..=3).contains(&hp.lstm.len()) {
        out.push("hyperparams.lstm must hold 1 to 3 layers".into());
    }
    if hp.dense.len() > 3 {
        out.push("hyperparams.dense must hold at most 3 layers".into());
    }
    if hp.lstm.iter().any(|l| l.units == 0) || hp.dense.iter().any(|d| d.units == 0) {
        out.push("hyperparams layer units must be positive".into());
    }
    let bad = |r: f64| !(0.0..1.0).contains(&r);
    if bad(hp.dropout) || hp.lstm.iter().any(|l| bad(l.recurrent_dropout)) {
        out.push("hyperparams dropout rates must lie in [0, 1)".into());
    }
    if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
        out.push("hyperparams.learning_rate must be positive".into());
    }
    out
}
