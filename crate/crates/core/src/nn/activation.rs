#[cfg(not(feature = "std"))]
use num_traits::Float;

use super::Tensor;

pub fn elu_scalar(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

/// d elu / dx evaluated at the pre-activation `x`.
pub fn elu_derivative(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        alpha * x.exp()
    }
}

pub fn elu(x: &Tensor, alpha: f64) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = elu_scalar(*v, alpha);
    }
    out
}

/// Gradient through ELU given its input `x` and the upstream gradient.
pub fn elu_backward(x: &Tensor, grad_out: &Tensor, alpha: f64) -> Tensor {
    let mut out = grad_out.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        *g *= elu_derivative(v, alpha);
    }
    out
}
