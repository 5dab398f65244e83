//! Backpropagation through time over the full lookback.

use rand::Rng;

use super::matrix::Matrix;
use super::network::{cell_forward, CellStep, LstmNetwork};
use super::train::Sample;
use crate::error::{Error, Result};

/// Inverted-dropout masks for one training sequence. Entries are `0` or
/// `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    /// Applied to `h_{t-1}` inside every gate of the matching LSTM layer,
    /// fixed across the sequence.
    pub recurrent: Vec<Vec<f64>>,
    /// Applied to the inputs of each dense layer, then the head.
    pub dense: Vec<Vec<f64>>,
}

fn mask(len: usize, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

impl DropoutMasks {
    pub fn sample(net: &LstmNetwork, rng: &mut impl Rng) -> Self {
        let recurrent = net
            .lstm_layers
            .iter()
            .map(|l| mask(l.units, l.recurrent_dropout, rng))
            .collect();
        let dense = net
            .dense_layers
            .iter()
            .chain(std::iter::once(&net.head))
            .map(|l| mask(l.inputs(), net.dropout, rng))
            .collect();
        Self { recurrent, dense }
    }

    pub fn uses_dropout(net: &LstmNetwork) -> bool {
        net.dropout > 0.0 || net.lstm_layers.iter().any(|l| l.recurrent_dropout > 0.0)
    }
}

struct LayerTrace {
    inputs: Vec<Vec<f64>>,
    h_prev: Vec<Vec<f64>>,
    c_prev: Vec<Vec<f64>>,
    steps: Vec<CellStep>,
}

struct DenseTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
}

fn apply_mask(x: &[f64], m: Option<&Vec<f64>>) -> Vec<f64> {
    match m {
        Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
        None => x.to_vec(),
    }
}

fn trace_forward(
    net: &LstmNetwork,
    sequence: &Matrix,
    masks: Option<&DropoutMasks>,
) -> (Vec<LayerTrace>, Vec<DenseTrace>, f64) {
    let mut inputs: Vec<Vec<f64>> = (0..sequence.rows()).map(|t| sequence.row(t).to_vec()).collect();
    let mut traces = Vec::with_capacity(net.lstm_layers.len());
    for (l, layer) in net.lstm_layers.iter().enumerate() {
        let m = masks.map(|m| &m.recurrent[l]);
        let mut h = vec![0.0; layer.units];
        let mut c = vec![0.0; layer.units];
        let mut trace = LayerTrace {
            inputs: Vec::new(),
            h_prev: Vec::with_capacity(inputs.len()),
            c_prev: Vec::with_capacity(inputs.len()),
            steps: Vec::with_capacity(inputs.len()),
        };
        let mut outputs = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let hm = apply_mask(&h, m);
            let step = cell_forward(layer, x, &hm, &c);
            trace.h_prev.push(hm);
            trace.c_prev.push(std::mem::replace(&mut c, step.cell.clone()));
            h = step.hidden.clone();
            outputs.push(step.hidden.clone());
            trace.steps.push(step);
        }
        trace.inputs = std::mem::replace(&mut inputs, outputs);
        traces.push(trace);
    }
    let mut x = inputs.pop().expect("non-empty sequence");
    let mut dense = Vec::with_capacity(net.dense_layers.len() + 1);
    for (j, layer) in net.dense_layers.iter().enumerate() {
        let input = apply_mask(&x, masks.map(|m| &m.dense[j]));
        let pre = layer.pre_activation(&input);
        x = pre.iter().map(|&z| layer.activation.apply(z)).collect();
        dense.push(DenseTrace { input, pre });
    }
    let input = apply_mask(&x, masks.map(|m| &m.dense[net.dense_layers.len()]));
    let pre = net.head.pre_activation(&input);
    let prediction = pre[0];
    dense.push(DenseTrace { input, pre });
    (traces, dense, prediction)
}

/// Adds `scale * dL/dθ` for one sample into `grads`; returns the surrogate
/// loss of the sample.
fn accumulate(
    net: &LstmNetwork,
    sample: &Sample,
    masks: Option<&DropoutMasks>,
    scale: f64,
    grads: &mut LstmNetwork,
) -> f64 {
    let (traces, dense, prediction) = trace_forward(net, &sample.input, masks);
    let y = sample.target - sample.reference;
    let p = prediction - sample.reference;
    let loss = net.loss.surrogate_point(y, p);
    let mut upstream = vec![net.loss.surrogate_derivative(y, p) * scale];

    // head and dense layers, last to first
    let n_dense = net.dense_layers.len();
    for j in (0..=n_dense).rev() {
        let (layer, glayer) = if j == n_dense {
            (&net.head, &mut grads.head)
        } else {
            (&net.dense_layers[j], &mut grads.dense_layers[j])
        };
        let trace = &dense[j];
        let dz: Vec<f64> = upstream
            .iter()
            .zip(&trace.pre)
            .map(|(d, &z)| d * layer.activation.derivative(z))
            .collect();
        glayer.weights.add_outer(&dz, &trace.input);
        for (b, d) in glayer.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        let mut dx = vec![0.0; layer.inputs()];
        layer.weights.mul_t_vec_add(&dz, &mut dx);
        if let Some(m) = masks {
            for (d, k) in dx.iter_mut().zip(&m.dense[j]) {
                *d *= k;
            }
        }
        upstream = dx;
    }

    // LSTM layers, top to bottom
    let steps = sample.input.rows();
    let top = net.lstm_layers.len() - 1;
    let mut d_out: Vec<Vec<f64>> = vec![vec![0.0; net.lstm_layers[top].units]; steps];
    d_out[steps - 1] = upstream;
    for l in (0..=top).rev() {
        let layer = &net.lstm_layers[l];
        let glayer = &mut grads.lstm_layers[l];
        let trace = &traces[l];
        let act = layer.activation;
        let units = layer.units;
        let mut dh_next = vec![0.0; units];
        let mut dc_next = vec![0.0; units];
        let mut d_in = vec![vec![0.0; layer.input_dim]; steps];
        let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; units]);
        for t in (0..steps).rev() {
            let s = &trace.steps[t];
            let c_prev = &trace.c_prev[t];
            for k in 0..units {
                let dh = d_out[t][k] + dh_next[k];
                let gc = act.apply(s.cell[k]);
                let d_o = dh * gc;
                let dc = dc_next[k] + dh * s.output[k] * act.derivative(s.cell[k]);
                let d_f = dc * c_prev[k];
                let d_i = dc * s.candidate[k];
                let d_cand = dc * s.input[k];
                dc_next[k] = dc * s.forget[k];
                da[0][k] = d_f * s.forget[k] * (1.0 - s.forget[k]);
                da[1][k] = d_i * s.input[k] * (1.0 - s.input[k]);
                da[2][k] = d_cand * act.derivative(s.candidate_pre[k]);
                da[3][k] = d_o * s.output[k] * (1.0 - s.output[k]);
            }
            let x = &trace.inputs[t];
            let hm = &trace.h_prev[t];
            let mut dhm = vec![0.0; units];
            for (g, u) in glayer.input_weights.as_mut_array().into_iter().enumerate() {
                u.add_outer(&da[g], x);
            }
            for (g, v) in glayer.recurrent_weights.as_mut_array().into_iter().enumerate() {
                v.add_outer(&da[g], hm);
            }
            for (g, b) in glayer.biases.as_mut_array().into_iter().enumerate() {
                for (bk, d) in b.iter_mut().zip(&da[g]) {
                    *bk += d;
                }
            }
            for g in 0..4 {
                layer.input_weights.as_array()[g].mul_t_vec_add(&da[g], &mut d_in[t]);
                layer.recurrent_weights.as_array()[g].mul_t_vec_add(&da[g], &mut dhm);
            }
            match masks {
                Some(m) => {
                    for ((d, h), k) in dh_next.iter_mut().zip(&dhm).zip(&m.recurrent[l]) {
                        *d = h * k;
                    }
                }
                None => dh_next = dhm,
            }
        }
        d_out = d_in;
    }
    loss
}

fn check_batch(net: &LstmNetwork, batch: &[Sample]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    for s in batch {
        net.check_sequence(&s.input)?;
    }
    Ok(())
}

/// Mean surrogate loss over `batch` and its exact gradient, dropout off.
pub fn backward(net: &LstmNetwork, batch: &[Sample]) -> Result<(f64, LstmNetwork)> {
    backward_with_masks(net, batch, None)
}

/// As [`backward`], with one set of dropout masks per sample.
pub fn backward_with_masks(
    net: &LstmNetwork,
    batch: &[Sample],
    masks: Option<&[DropoutMasks]>,
) -> Result<(f64, LstmNetwork)> {
    check_batch(net, batch)?;
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(Error::LengthMismatch {
                left: m.len(),
                right: batch.len(),
            });
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = net.zeros_like();
    let mut total = 0.0;
    for (i, sample) in batch.iter().enumerate() {
        total += accumulate(net, sample, masks.map(|m| &m[i]), scale, &mut grads);
    }
    Ok((total * scale, grads))
}

/// Mean surrogate loss of a batch under fixed masks (forward only).
pub fn batch_surrogate_loss(
    net: &LstmNetwork,
    batch: &[Sample],
    masks: Option<&[DropoutMasks]>,
) -> Result<f64> {
    check_batch(net, batch)?;
    let total: f64 = batch
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (_, _, p) = trace_forward(net, &s.input, masks.map(|m| &m[i]));
            net.loss.surrogate_point(s.target - s.reference, p - s.reference)
        })
        .sum();
    Ok(total / batch.len() as f64)
}
