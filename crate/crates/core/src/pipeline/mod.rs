//! Leakage-safe rolling-window experiments.

pub mod config;
pub mod experiment;
pub mod features;
pub mod output;
pub mod scaler;
pub mod windows;

pub use config::{DataConfig, ExperimentConfig, ModelKind, PlanConfig, TuningConfig};
pub use experiment::{
    fit_scalers, fit_window, predict_window, prepare, run_experiment, run_prepared, write_run, ExperimentOutput,
    PreparedData, ScalerPair, WindowFit, WindowReport,
};
pub use features::{assemble_hybrid_features, assemble_lstm_features, make_sequences, FeatureMatrix, Sequences};
pub use output::{load_forecasts, parse_forecasts, ForecastRow};
pub use scaler::{fit_scaler, Scaler, ScalerKind};
pub use windows::{split_windows, Window, WindowPlan};
