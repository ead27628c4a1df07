use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::{Error, Result};

/// Pooled values plus, per output cell, the flat input index it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Vec<u32>,
}

/// Non-overlapping max pooling of an `[H, W, C]` map with a
/// `window.0 x window.1` window (stride = window). Ties go to the first
/// maximum in row-major window order.
pub fn maxpool(input: &Tensor, window: (usize, usize)) -> Result<PoolOutput> {
    let &[h, w, c] = input.shape() else {
        return Err(Error::Shape(format!(
            "maxpool expects [H, W, C], got {:?}",
            input.shape()
        )));
    };
    let (ph, pw) = window;
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::Shape(format!(
            "maxpool window {ph}x{pw} does not divide input {h}x{w}"
        )));
    }
    if input.len() > u32::MAX as usize {
        return Err(Error::Shape("maxpool input too large for u32 indices".into()));
    }
    let (oh, ow) = (h / ph, w / pw);
    let x = input.data();
    let mut out = vec![f64::NEG_INFINITY; oh * ow * c];
    let mut argmax = vec![0u32; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let o = (oy * ow + ox) * c;
            for dy in 0..ph {
                for dx in 0..pw {
                    let i = ((oy * ph + dy) * w + ox * pw + dx) * c;
                    for ch in 0..c {
                        let v = x[i + ch];
                        if v > out[o + ch] || (dy == 0 && dx == 0) {
                            out[o + ch] = v;
                            argmax[o + ch] = (i + ch) as u32;
                        }
                    }
                }
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_vec(&[oh, ow, c], out)?,
        argmax,
    })
}

/// Routes each output gradient to its argmax input cell.
pub fn maxpool_backward(input_shape: &[usize], argmax: &[u32], grad_out: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(Error::Shape(format!(
            "{} argmax entries for {} output gradients",
            argmax.len(),
            grad_out.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    maxpool_backward_into(argmax, grad_out.data(), dx.data_mut());
    Ok(dx)
}

/// Scatter-add form of [`maxpool_backward`] into a zeroed buffer.
pub(crate) fn maxpool_backward_into(argmax: &[u32], grad_out: &[f64], dx: &mut [f64]) {
    for (&i, &g) in argmax.iter().zip(grad_out) {
        dx[i as usize] += g;
    }
}
