//! LSTM regressor trained with plain SGD and backpropagation through time.

pub mod backprop;
pub mod loss;
pub mod matrix;
pub mod network;
pub mod search;
pub mod serialize;
pub mod train;

pub use backprop::{backward, DropoutMasks};
pub use loss::{loss, LossKind};
pub use matrix::Matrix;
pub use network::{lstm_cell_step, Activation, DenseLayer, DenseSpec, LstmLayerWeights, LstmNetwork, LstmSpec};
pub use search::{random_search, HyperParams, HyperSpace, Objective, SearchConfig, SearchResult};
pub use train::{sgd_step, train, EarlyStopping, Sample, TrainConfig, TrainReport};
