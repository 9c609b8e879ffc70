//! Basic uni-directional LSTM cell.
//!
//! Gate pre-activations are packed into one `4h` row as `[i, g, f, o]`:
//! input gate, candidate, forget gate, output gate. Weights are stored as
//! `w_x: [d, 4h]`, `w_h: [h, 4h]` and `bias: [4h]`.

use alloc::vec;
use alloc::vec::Vec;

use super::activation::sigmoid;
use crate::error::{bail, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    pub w_x: &'a Tensor,
    pub w_h: &'a Tensor,
    pub bias: &'a Tensor,
}

impl LstmParams<'_> {
    pub fn hidden_size(&self) -> usize {
        self.w_h.shape()[0]
    }

    pub fn input_size(&self) -> usize {
        self.w_x.shape()[0]
    }

    fn validate(&self) -> Result<usize> {
        if self.w_h.rank() != 2 || self.w_x.rank() != 2 || self.bias.rank() != 1 {
            bail!(Dimension, "LSTM weights must be matrices and the bias a vector");
        }
        let h = self.w_h.shape()[0];
        if self.w_h.shape()[1] != 4 * h || self.w_x.shape()[1] != 4 * h || self.bias.len() != 4 * h {
            bail!(
                Dimension,
                "LSTM shapes w_x {:?}, w_h {:?}, bias {:?} are inconsistent with hidden size {h}",
                self.w_x.shape(),
                self.w_h.shape(),
                self.bias.shape()
            );
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self { hidden: vec![0.0; hidden_size], cell: vec![0.0; hidden_size] }
    }
}

#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    prev: LstmState,
    /// Post-nonlinearity gates packed as `[i, g, f, o]`.
    gates: Vec<f64>,
    tanh_cell: Vec<f64>,
}

/// Accumulated LSTM parameter gradients.
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub bias: Tensor,
}

impl LstmGrads {
    pub fn zeros_like(p: &LstmParams<'_>) -> Self {
        Self {
            w_x: Tensor::zeros(p.w_x.shape()).expect("valid shape"),
            w_h: Tensor::zeros(p.w_h.shape()).expect("valid shape"),
            bias: Tensor::zeros(p.bias.shape()).expect("valid shape"),
        }
    }
}

fn affine_into(out: &mut [f64], x: &[f64], w: &Tensor) {
    let cols = out.len();
    for (xi, row) in x.iter().zip(w.data().chunks_exact(cols)) {
        out.iter_mut().zip(row).for_each(|(o, wij)| *o += xi * wij);
    }
}

pub fn lstm_step(
    x: &[f64],
    prev: &LstmState,
    p: &LstmParams<'_>,
) -> Result<(LstmState, LstmStepCache)> {
    let h = p.validate()?;
    if x.len() != p.input_size() {
        bail!(Dimension, "LSTM input has length {}, weights expect {}", x.len(), p.input_size());
    }
    if prev.hidden.len() != h || prev.cell.len() != h {
        bail!(Dimension, "LSTM state has size {}, weights expect {h}", prev.hidden.len());
    }
    let mut z = p.bias.data().to_vec();
    affine_into(&mut z, x, p.w_x);
    affine_into(&mut z, &prev.hidden, p.w_h);

    let mut gates = z;
    for (block, gate) in gates.chunks_exact_mut(h).enumerate() {
        if block == 1 {
            gate.iter_mut().for_each(|v| *v = libm::tanh(*v));
        } else {
            gate.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
    }
    let (i, rest) = gates.split_at(h);
    let (g, rest) = rest.split_at(h);
    let (f, o) = rest.split_at(h);
    let mut cell = Vec::with_capacity(h);
    let mut hidden = Vec::with_capacity(h);
    let mut tanh_cell = Vec::with_capacity(h);
    for k in 0..h {
        let c = f[k] * prev.cell[k] + i[k] * g[k];
        let tc = libm::tanh(c);
        cell.push(c);
        tanh_cell.push(tc);
        hidden.push(o[k] * tc);
    }
    let cache = LstmStepCache { x: x.to_vec(), prev: prev.clone(), gates, tanh_cell };
    Ok((LstmState { hidden, cell }, cache))
}

/// Backward through one step. Accumulates parameter gradients into `grads`
/// and returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_step_backward(
    cache: &LstmStepCache,
    p: &LstmParams<'_>,
    d_hidden: &[f64],
    d_cell: &[f64],
    grads: &mut LstmGrads,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let h = p.hidden_size();
    let (i, rest) = cache.gates.split_at(h);
    let (g, rest) = rest.split_at(h);
    let (f, o) = rest.split_at(h);
    let mut dz = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for k in 0..h {
        let tc = cache.tanh_cell[k];
        let d_o = d_hidden[k] * tc;
        let dc = d_cell[k] + d_hidden[k] * o[k] * (1.0 - tc * tc);
        dz[k] = dc * g[k] * i[k] * (1.0 - i[k]);
        dz[h + k] = dc * i[k] * (1.0 - g[k] * g[k]);
        dz[2 * h + k] = dc * cache.prev.cell[k] * f[k] * (1.0 - f[k]);
        dz[3 * h + k] = d_o * o[k] * (1.0 - o[k]);
        dc_prev[k] = dc * f[k];
    }
    let back = |input: &[f64], w: &Tensor, dw: &mut Tensor| -> Vec<f64> {
        let cols = 4 * h;
        let mut dx = vec![0.0; input.len()];
        for (r, (row, drow)) in
            w.data().chunks_exact(cols).zip(dw.data_mut().chunks_exact_mut(cols)).enumerate()
        {
            let xi = input[r];
            let mut acc = 0.0;
            for ((wij, dwij), dzj) in row.iter().zip(drow.iter_mut()).zip(&dz) {
                acc += wij * dzj;
                *dwij += xi * dzj;
            }
            dx[r] = acc;
        }
        dx
    };
    let dx = back(&cache.x, p.w_x, &mut grads.w_x);
    let dh_prev = back(&cache.prev.hidden, p.w_h, &mut grads.w_h);
    grads.bias.data_mut().iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
    (dx, dh_prev, dc_prev)
}

#[derive(Debug, Clone)]
pub struct LstmRunCache {
    steps: Vec<LstmStepCache>,
}

impl LstmRunCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Runs the cell over the rows of `seq` (`[t, d]`) from a zero state and
/// returns the final state.
pub fn lstm_run(seq: &Tensor, p: &LstmParams<'_>) -> Result<(LstmState, LstmRunCache)> {
    let h = p.validate()?;
    if seq.rank() != 2 {
        bail!(Dimension, "LSTM sequence must be a [t, d] matrix, got {:?}", seq.shape());
    }
    let mut state = LstmState::zeros(h);
    let mut steps = Vec::with_capacity(seq.shape()[0]);
    for x in seq.data().chunks_exact(seq.shape()[1]) {
        let (next, cache) = lstm_step(x, &state, p)?;
        steps.push(cache);
        state = next;
    }
    Ok((state, LstmRunCache { steps }))
}

/// Full backpropagation through time from gradients on the final state.
/// Returns the gradient with respect to the input sequence.
pub fn lstm_run_backward(
    cache: &LstmRunCache,
    p: &LstmParams<'_>,
    d_hidden: &[f64],
    d_cell: &[f64],
    grads: &mut LstmGrads,
) -> Result<Tensor> {
    if cache.steps.is_empty() {
        bail!(Usage, "LSTM backward called without a forward cache");
    }
    let d = p.input_size();
    let mut dseq = vec![0.0; cache.steps.len() * d];
    let mut dh = d_hidden.to_vec();
    let mut dc = d_cell.to_vec();
    for (t, step) in cache.steps.iter().enumerate().rev() {
        let (dx, dh_prev, dc_prev) = lstm_step_backward(step, p, &dh, &dc, grads);
        dseq[t * d..(t + 1) * d].copy_from_slice(&dx);
        dh = dh_prev;
        dc = dc_prev;
    }
    Tensor::from_vec(&[cache.steps.len(), d], dseq)
}
