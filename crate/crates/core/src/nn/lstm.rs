//! Single-layer LSTM over one sequence, with backpropagation through time.
//!
//! Gate blocks are laid out `[input, forget, candidate, output]` along the
//! `4U` axis of every parameter.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::gemm::gemm;
use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[D, 4U]`
    pub input_weights: Tensor,
    /// `[U, 4U]`
    pub recurrent_weights: Tensor,
    /// `[4U]`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        Self {
            input_weights: Tensor::zeros(&[input_dim, 4 * units]),
            recurrent_weights: Tensor::zeros(&[units, 4 * units]),
            bias: Tensor::zeros(&[4 * units]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.dim(0)
    }

    pub fn units(&self) -> usize {
        self.recurrent_weights.dim(0)
    }

    fn check(&self) -> Result<()> {
        let (d, u) = (self.input_dim(), self.units());
        self.input_weights.expect_shape(&[d, 4 * u], "LSTM input weights")?;
        self.recurrent_weights.expect_shape(&[u, 4 * u], "LSTM recurrent weights")?;
        self.bias.expect_shape(&[4 * u], "LSTM bias")
    }
}

/// Activations saved by [`lstm_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    input: Tensor,
    /// Post-nonlinearity gate values per step, `[T, 4U]`.
    gates: Vec<f64>,
    /// Cell states per step, `[T, U]`.
    cells: Vec<f64>,
    /// Hidden states per step, `[T, U]`.
    hidden: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub input: Tensor,
    pub input_weights: Tensor,
    pub recurrent_weights: Tensor,
    pub bias: Tensor,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the LSTM over a `[T, D]` sequence from zero initial state and returns
/// the `[T, U]` hidden states.
pub fn lstm_forward(seq: &Tensor, p: &LstmParams) -> Result<(Tensor, LstmCache)> {
    p.check()?;
    let (d, u) = (p.input_dim(), p.units());
    let &[t_len, sd] = seq.shape() else {
        return Err(Error::Shape(format!("LSTM expects [T, D], got {:?}", seq.shape())));
    };
    if sd != d {
        return Err(Error::Shape(format!("LSTM input has {sd} features, weights expect {d}")));
    }
    let g4 = 4 * u;
    // Input projections for every step at once, then bias.
    let mut gates = vec![0.0; t_len * g4];
    gemm(t_len, d, g4, seq.data(), false, p.input_weights.data(), false, 0.0, &mut gates);
    let mut cells = vec![0.0; t_len * u];
    let mut hidden = vec![0.0; t_len * u];
    let wh = p.recurrent_weights.data();
    for t in 0..t_len {
        let row = &mut gates[t * g4..(t + 1) * g4];
        for (a, b) in row.iter_mut().zip(p.bias.data()) {
            *a += b;
        }
        if t > 0 {
            let h_prev = &hidden[(t - 1) * u..t * u];
            gemm(1, u, g4, h_prev, false, wh, false, 1.0, row);
        }
        for j in 0..u {
            row[j] = sigmoid(row[j]);
            row[u + j] = sigmoid(row[u + j]);
            row[2 * u + j] = row[2 * u + j].tanh();
            row[3 * u + j] = sigmoid(row[3 * u + j]);
        }
        for j in 0..u {
            let c_prev = if t > 0 { cells[(t - 1) * u + j] } else { 0.0 };
            let c = row[u + j] * c_prev + row[j] * row[2 * u + j];
            cells[t * u + j] = c;
            hidden[t * u + j] = row[3 * u + j] * c.tanh();
        }
    }
    let out = Tensor::from_vec(&[t_len, u], hidden.clone())?;
    Ok((
        out,
        LstmCache {
            input: seq.clone(),
            gates,
            cells,
            hidden,
        },
    ))
}

/// Backpropagation through time given `dL/dH` for every step.
pub fn lstm_backward(p: &LstmParams, cache: &LstmCache, grad_hidden: &Tensor) -> Result<LstmGrads> {
    let (d, u) = (p.input_dim(), p.units());
    let t_len = cache.input.dim(0);
    grad_hidden.expect_shape(&[t_len, u], "LSTM hidden gradient")?;
    let g4 = 4 * u;
    let dh_all = grad_hidden.data();
    // Pre-activation gate gradients for every step.
    let mut dgates = vec![0.0; t_len * g4];
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut d_wh = vec![0.0; u * g4];
    let wh = p.recurrent_weights.data();
    for t in (0..t_len).rev() {
        let gate = &cache.gates[t * g4..(t + 1) * g4];
        let da = &mut dgates[t * g4..(t + 1) * g4];
        for j in 0..u {
            let (i, f, g, o) = (gate[j], gate[u + j], gate[2 * u + j], gate[3 * u + j]);
            let c = cache.cells[t * u + j];
            let c_prev = if t > 0 { cache.cells[(t - 1) * u + j] } else { 0.0 };
            let tc = c.tanh();
            let dh = dh_all[t * u + j] + dh_next[j];
            let dc = dc_next[j] + dh * o * (1.0 - tc * tc);
            da[j] = dc * g * i * (1.0 - i);
            da[u + j] = dc * c_prev * f * (1.0 - f);
            da[2 * u + j] = dc * i * (1.0 - g * g);
            da[3 * u + j] = dh * tc * o * (1.0 - o);
            dc_next[j] = dc * f;
        }
        if t > 0 {
            let h_prev = &cache.hidden[(t - 1) * u..t * u];
            // dWh += h_{t-1}^T da ; dh_{t-1} = da Wh^T
            gemm(u, 1, g4, h_prev, true, da, false, 1.0, &mut d_wh);
            gemm(1, g4, u, da, false, wh, true, 0.0, &mut dh_next);
        } else {
            dh_next.fill(0.0);
        }
    }
    let mut d_wx = vec![0.0; d * g4];
    gemm(d, t_len, g4, cache.input.data(), true, &dgates, false, 0.0, &mut d_wx);
    let mut dx = vec![0.0; t_len * d];
    gemm(t_len, g4, d, &dgates, false, p.input_weights.data(), true, 0.0, &mut dx);
    let mut db = vec![0.0; g4];
    for row in dgates.chunks_exact(g4) {
        for (b, v) in db.iter_mut().zip(row) {
            *b += v;
        }
    }
    Ok(LstmGrads {
        input: Tensor::from_vec(&[t_len, d], dx)?,
        input_weights: Tensor::from_vec(&[d, g4], d_wx)?,
        recurrent_weights: Tensor::from_vec(&[u, g4], d_wh)?,
        bias: Tensor::from_vec(&[g4], db)?,
    })
}
