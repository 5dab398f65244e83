use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::LossKind;
use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One value per LSTM gate. `candidate` is the proposed cell update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gates<T> {
    pub forget: T,
    pub input: T,
    pub candidate: T,
    pub output: T,
}

impl<T> Gates<T> {
    pub fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        Gates {
            forget: f(0),
            input: f(1),
            candidate: f(2),
            output: f(3),
        }
    }

    pub fn as_array(&self) -> [&T; 4] {
        [&self.forget, &self.input, &self.candidate, &self.output]
    }

    pub fn as_mut_array(&mut self) -> [&mut T; 4] {
        [
            &mut self.forget,
            &mut self.input,
            &mut self.candidate,
            &mut self.output,
        ]
    }
}

/// Weights of one LSTM layer.
///
/// Gates use the logistic sigmoid. `activation` is applied to the candidate
/// pre-activation and to the cell state on output, so `Tanh` gives the
/// textbook cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayerWeights {
    pub units: usize,
    pub input_dim: usize,
    /// `U_g`, shape `(units, input_dim)`.
    pub input_weights: Gates<Matrix>,
    /// `V_g`, shape `(units, units)`.
    pub recurrent_weights: Gates<Matrix>,
    pub biases: Gates<Vec<f64>>,
    pub activation: Activation,
    pub recurrent_dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// Shape `(outputs, inputs)`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub input_dim: usize,
    pub lstm_layers: Vec<LstmLayerWeights>,
    pub dense_layers: Vec<DenseLayer>,
    /// Linear unit producing the scalar prediction.
    pub head: DenseLayer,
    pub loss: LossKind,
    /// Dropout rate on the inputs of every dense layer and of the head.
    pub dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LstmSpec {
    pub units: usize,
    pub activation: Activation,
    pub recurrent_dropout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub units: usize,
    pub activation: Activation,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Matrix {
        shape: [rows, cols],
        data,
    }
}

impl LstmLayerWeights {
    pub fn zeros(input_dim: usize, units: usize, activation: Activation) -> Self {
        Self {
            units,
            input_dim,
            input_weights: Gates::from_fn(|_| Matrix::zeros(units, input_dim)),
            recurrent_weights: Gates::from_fn(|_| Matrix::zeros(units, units)),
            biases: Gates::from_fn(|_| vec![0.0; units]),
            activation,
            recurrent_dropout: 0.0,
        }
    }

    fn random(input_dim: usize, spec: &LstmSpec, rng: &mut impl Rng) -> Self {
        let units = spec.units;
        let input_weights = Gates::from_fn(|_| glorot(units, input_dim, rng));
        let recurrent_weights = Gates::from_fn(|_| glorot(units, units, rng));
        let mut biases = Gates::from_fn(|_| vec![0.0; units]);
        biases.forget.fill(1.0);
        Self {
            units,
            input_dim,
            input_weights,
            recurrent_weights,
            biases,
            activation: spec.activation,
            recurrent_dropout: spec.recurrent_dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (u, i) = (self.units, self.input_dim);
        if u == 0 || i == 0 {
            return Err(Error::Shape("LSTM layer with zero units or inputs".into()));
        }
        for m in self.input_weights.as_array() {
            if m.shape != [u, i] || m.data.len() != u * i {
                return Err(Error::Shape(format!("input weights {:?}, want [{u}, {i}]", m.shape)));
            }
        }
        for m in self.recurrent_weights.as_array() {
            if m.shape != [u, u] || m.data.len() != u * u {
                return Err(Error::Shape(format!("recurrent weights {:?}, want [{u}, {u}]", m.shape)));
            }
        }
        if self.biases.as_array().iter().any(|b| b.len() != u) {
            return Err(Error::Shape("bias length differs from units".into()));
        }
        if !(0.0..1.0).contains(&self.recurrent_dropout) {
            return Err(Error::InvalidArgument("recurrent dropout outside [0, 1)".into()));
        }
        Ok(())
    }
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    fn random(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        Self {
            weights: glorot(outputs, inputs, rng),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub(crate) fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        self.weights.mul_vec_add(x, &mut z);
        z
    }
}

/// Activations and state of one cell step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct CellStep {
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
    pub candidate_pre: Vec<f64>,
    pub candidate: Vec<f64>,
    pub cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

pub(crate) fn cell_forward(w: &LstmLayerWeights, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> CellStep {
    let pre = |g: usize| {
        let (u, v, b) = (
            w.input_weights.as_array()[g],
            w.recurrent_weights.as_array()[g],
            w.biases.as_array()[g],
        );
        let mut z = b.clone();
        u.mul_vec_add(x, &mut z);
        v.mul_vec_add(h_prev, &mut z);
        z
    };
    let forget: Vec<f64> = pre(0).into_iter().map(sigmoid).collect();
    let input: Vec<f64> = pre(1).into_iter().map(sigmoid).collect();
    let candidate_pre = pre(2);
    let output: Vec<f64> = pre(3).into_iter().map(sigmoid).collect();
    let act = w.activation;
    let candidate: Vec<f64> = candidate_pre.iter().map(|&z| act.apply(z)).collect();
    let cell: Vec<f64> = (0..w.units)
        .map(|k| forget[k] * c_prev[k] + input[k] * candidate[k])
        .collect();
    let hidden = (0..w.units).map(|k| output[k] * act.apply(cell[k])).collect();
    CellStep {
        forget,
        input,
        output,
        candidate_pre,
        candidate,
        cell,
        hidden,
    }
}

/// A single LSTM time step: returns `(h_t, c_t)`.
pub fn lstm_cell_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w: &LstmLayerWeights,
) -> Result<(Vec<f64>, Vec<f64>)> {
    w.validate()?;
    if x.len() != w.input_dim || h_prev.len() != w.units || c_prev.len() != w.units {
        return Err(Error::Shape(format!(
            "cell expects x[{}], h[{}], c[{}]; got x[{}], h[{}], c[{}]",
            w.input_dim,
            w.units,
            w.units,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let step = cell_forward(w, x, h_prev, c_prev);
    Ok((step.hidden, step.cell))
}

impl LstmNetwork {
    /// Randomly initialised network: Glorot-uniform matrices, forget bias 1.
    pub fn new(
        input_dim: usize,
        lstm: &[LstmSpec],
        dense: &[DenseSpec],
        loss: LossKind,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if lstm.is_empty() {
            return Err(Error::InvalidArgument("at least one LSTM layer is required".into()));
        }
        let mut dim = input_dim;
        let mut lstm_layers = Vec::with_capacity(lstm.len());
        for spec in lstm {
            lstm_layers.push(LstmLayerWeights::random(dim, spec, rng));
            dim = spec.units;
        }
        let mut dense_layers = Vec::with_capacity(dense.len());
        for spec in dense {
            dense_layers.push(DenseLayer::random(dim, spec.units, spec.activation, rng));
            dim = spec.units;
        }
        let head = DenseLayer::random(dim, 1, Activation::Linear, rng);
        let net = Self {
            input_dim,
            lstm_layers,
            dense_layers,
            head,
            loss,
            dropout,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks that layer dimensions chain from the input to a scalar output.
    pub fn validate(&self) -> Result<()> {
        if self.lstm_layers.is_empty() {
            return Err(Error::Shape("network has no LSTM layer".into()));
        }
        let mut dim = self.input_dim;
        for (i, layer) in self.lstm_layers.iter().enumerate() {
            layer.validate()?;
            if layer.input_dim != dim {
                return Err(Error::Shape(format!(
                    "LSTM layer {i} expects {} inputs, previous layer gives {dim}",
                    layer.input_dim
                )));
            }
            dim = layer.units;
        }
        for (i, layer) in self.dense_layers.iter().chain(std::iter::once(&self.head)).enumerate() {
            if layer.inputs() != dim
                || layer.bias.len() != layer.outputs()
                || layer.weights.data.len() != layer.inputs() * layer.outputs()
                || layer.outputs() == 0
            {
                return Err(Error::Shape(format!("dense layer {i} does not chain")));
            }
            dim = layer.outputs();
        }
        if dim != 1 || self.head.activation != Activation::Linear {
            return Err(Error::Shape("output head must be a single linear unit".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout outside [0, 1)".into()));
        }
        Ok(())
    }

    pub(crate) fn check_sequence(&self, sequence: &Matrix) -> Result<()> {
        if sequence.cols() != self.input_dim || sequence.rows() == 0 {
            return Err(Error::Shape(format!(
                "sequence is {}x{}, network expects (steps x {})",
                sequence.rows(),
                sequence.cols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Inference pass (no dropout). `sequence` is `(lookback, features)`.
    pub fn forward(&self, sequence: &Matrix) -> Result<f64> {
        self.check_sequence(sequence)?;
        let mut inputs: Vec<Vec<f64>> = (0..sequence.rows()).map(|t| sequence.row(t).to_vec()).collect();
        for layer in &self.lstm_layers {
            let mut h = vec![0.0; layer.units];
            let mut c = vec![0.0; layer.units];
            let mut outputs = Vec::with_capacity(inputs.len());
            for x in &inputs {
                let step = cell_forward(layer, x, &h, &c);
                h = step.hidden;
                c = step.cell;
                outputs.push(h.clone());
            }
            inputs = outputs;
        }
        let mut x = inputs.pop().expect("non-empty sequence");
        for layer in &self.dense_layers {
            x = layer
                .pre_activation(&x)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        Ok(self.head.pre_activation(&x)[0])
    }

    pub fn predict(&self, sequences: &[Matrix]) -> Result<Vec<f64>> {
        sequences.iter().map(|s| self.forward(s)).collect()
    }

    /// Parameter slices in a fixed order, shared by gradients and updates.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.lstm_layers {
            for g in 0..4 {
                out.push(&layer.input_weights.as_array()[g].data);
                out.push(&layer.recurrent_weights.as_array()[g].data);
                out.push(layer.biases.as_array()[g]);
            }
        }
        for layer in self.dense_layers.iter().chain(std::iter::once(&self.head)) {
            out.push(&layer.weights.data);
            out.push(&layer.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.lstm_layers {
            let LstmLayerWeights {
                input_weights,
                recurrent_weights,
                biases,
                ..
            } = layer;
            let iw = input_weights.as_mut_array();
            let rw = recurrent_weights.as_mut_array();
            let bs = biases.as_mut_array();
            for ((i, r), b) in iw.into_iter().zip(rw).zip(bs) {
                out.push(&mut i.data);
                out.push(&mut r.data);
                out.push(b);
            }
        }
        for layer in self.dense_layers.iter_mut().chain(std::iter::once(&mut self.head)) {
            out.push(&mut layer.weights.data);
            out.push(&mut layer.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Same architecture with every parameter set to zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.fill(0.0);
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}
