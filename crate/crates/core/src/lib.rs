pub mod backtest;
pub mod error;
pub mod evaluation;
pub mod marketdata;
pub mod neuralnet;
pub mod pipeline;
pub mod seed;
pub mod svmodel;

pub use error::{Error, ErrorClass, Result};
