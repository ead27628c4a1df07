use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::gemm::gemm;
use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output spans `ceil(input / stride)` cells; padding split evenly with
    /// the extra cell at the bottom/right.
    Same,
    /// No padding.
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: (usize, usize),
    pub padding: Padding,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            padding: Padding::Same,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    sh: usize,
    sw: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Geometry {
    fn new(input: &[usize], kernels: &[usize], spec: ConvSpec) -> Result<Self> {
        let (&[h, w, cin], &[kh, kw, kcin, cout]) = (input, kernels) else {
            return Err(Error::Shape(format!(
                "conv2d expects input [H, W, Cin] and kernels [kh, kw, Cin, Cout], got {input:?} and {kernels:?}"
            )));
        };
        if cin != kcin {
            return Err(Error::Shape(format!(
                "conv2d channel mismatch: input has {cin} channels, kernels expect {kcin}"
            )));
        }
        let (sh, sw) = spec.stride;
        if sh == 0 || sw == 0 || kh == 0 || kw == 0 {
            return Err(Error::Shape("conv2d stride and kernel sizes must be positive".into()));
        }
        let dims = |size: usize, k: usize, s: usize| -> Result<(usize, usize)> {
            match spec.padding {
                Padding::Same => {
                    let out = size.div_ceil(s);
                    let total = ((out - 1) * s + k).saturating_sub(size);
                    Ok((out, total / 2))
                }
                Padding::Valid => {
                    if size < k {
                        return Err(Error::Shape(format!(
                            "valid conv2d: kernel {k} larger than input {size}"
                        )));
                    }
                    Ok(((size - k) / s + 1, 0))
                }
            }
        };
        let (out_h, pad_top) = dims(h, kh, sh)?;
        let (out_w, pad_left) = dims(w, kw, sw)?;
        Ok(Self {
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            sh,
            sw,
            out_h,
            out_w,
            pad_top,
            pad_left,
        })
    }

    /// Length of one patch row: kh * kw * cin, matching the kernel layout.
    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    /// Gathers the receptive fields of output row `oy` into `patch`
    /// (`out_w x patch_len`), zero outside the input.
    fn im2row(&self, input: &[f64], oy: usize, patch: &mut [f64]) {
        let plen = self.patch_len();
        for ox in 0..self.out_w {
            let row = &mut patch[ox * plen..(ox + 1) * plen];
            for ky in 0..self.kh {
                let iy = (oy * self.sh + ky).wrapping_sub(self.pad_top);
                for kx in 0..self.kw {
                    let ix = (ox * self.sw + kx).wrapping_sub(self.pad_left);
                    let dst = &mut row[(ky * self.kw + kx) * self.cin..][..self.cin];
                    if iy < self.h && ix < self.w {
                        let src = (iy * self.w + ix) * self.cin;
                        dst.copy_from_slice(&input[src..src + self.cin]);
                    } else {
                        dst.fill(0.0);
                    }
                }
            }
        }
    }

    /// Adds patch gradients for output row `oy` back onto the input grid.
    fn row2im(&self, dpatch: &[f64], oy: usize, dinput: &mut [f64]) {
        let plen = self.patch_len();
        for ox in 0..self.out_w {
            let row = &dpatch[ox * plen..(ox + 1) * plen];
            for ky in 0..self.kh {
                let iy = (oy * self.sh + ky).wrapping_sub(self.pad_top);
                if iy >= self.h {
                    continue;
                }
                for kx in 0..self.kw {
                    let ix = (ox * self.sw + kx).wrapping_sub(self.pad_left);
                    if ix >= self.w {
                        continue;
                    }
                    let src = &row[(ky * self.kw + kx) * self.cin..][..self.cin];
                    let dst = &mut dinput[(iy * self.w + ix) * self.cin..][..self.cin];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation of an `[H, W, Cin]` map with `[kh, kw, Cin, Cout]`
/// kernels plus an optional `[Cout]` bias.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    spec: ConvSpec,
) -> Result<Tensor> {
    let g = Geometry::new(input.shape(), kernels.shape(), spec)?;
    if let Some(b) = bias {
        b.expect_shape(&[g.cout], "conv2d bias")?;
    }
    let plen = g.patch_len();
    let mut out = Tensor::zeros(&[g.out_h, g.out_w, g.cout]);
    let mut patch = vec![0.0; g.out_w * plen];
    let row_len = g.out_w * g.cout;
    for oy in 0..g.out_h {
        g.im2row(input.data(), oy, &mut patch);
        let out_row = &mut out.data_mut()[oy * row_len..(oy + 1) * row_len];
        gemm(g.out_w, plen, g.cout, &patch, false, kernels.data(), false, 0.0, out_row);
        if let Some(b) = bias {
            for cell in out_row.chunks_exact_mut(g.cout) {
                for (v, bb) in cell.iter_mut().zip(b.data()) {
                    *v += bb;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dGrads {
    /// `None` when the input gradient was not requested.
    pub input: Option<Tensor>,
    pub kernels: Tensor,
    pub bias: Tensor,
}

/// Gradients of a scalar loss given `grad_output = dL/d conv2d(...)`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_output: &Tensor,
    spec: ConvSpec,
    want_input_grad: bool,
) -> Result<Conv2dGrads> {
    let mut dk = Tensor::zeros(kernels.shape());
    let mut db = Tensor::zeros(&[kernels.shape().last().copied().unwrap_or(0)]);
    let mut dx = want_input_grad.then(|| Tensor::zeros(input.shape()));
    conv2d_backward_accumulate(
        input,
        kernels,
        grad_output,
        spec,
        dk.data_mut(),
        db.data_mut(),
        dx.as_mut().map(|t| t.data_mut()),
    )?;
    Ok(Conv2dGrads {
        input: dx,
        kernels: dk,
        bias: db,
    })
}

/// Like [`conv2d_backward`] but adds into caller-owned buffers, so kernel
/// gradients can be summed over a batch without extra allocation.
pub(crate) fn conv2d_backward_accumulate(
    input: &Tensor,
    kernels: &Tensor,
    grad_output: &Tensor,
    spec: ConvSpec,
    dkernels: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) -> Result<()> {
    let g = Geometry::new(input.shape(), kernels.shape(), spec)?;
    grad_output.expect_shape(&[g.out_h, g.out_w, g.cout], "conv2d output gradient")?;
    let plen = g.patch_len();
    assert_eq!(dkernels.len(), plen * g.cout);
    assert_eq!(dbias.len(), g.cout);
    let mut patch = vec![0.0; g.out_w * plen];
    let mut dpatch: Vec<f64> = if dinput.is_some() {
        vec![0.0; g.out_w * plen]
    } else {
        Vec::new()
    };
    let row_len = g.out_w * g.cout;
    for oy in 0..g.out_h {
        let drow = &grad_output.data()[oy * row_len..(oy + 1) * row_len];
        for cell in drow.chunks_exact(g.cout) {
            for (b, d) in dbias.iter_mut().zip(cell) {
                *b += d;
            }
        }
        g.im2row(input.data(), oy, &mut patch);
        // dK (plen x cout) += patch^T (plen x out_w) * drow (out_w x cout)
        gemm(plen, g.out_w, g.cout, &patch, true, drow, false, 1.0, dkernels);
        if let Some(dx) = dinput.as_deref_mut() {
            // dpatch (out_w x plen) = drow (out_w x cout) * K^T (cout x plen)
            gemm(g.out_w, g.cout, plen, drow, false, kernels.data(), true, 0.0, &mut dpatch);
            g.row2im(&dpatch, oy, dx);
        }
    }
    Ok(())
}
