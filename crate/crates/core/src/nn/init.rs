//! Seeded parameter initialization.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use super::Tensor;

/// Uniform in `[-limit, limit]`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], limit: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = if limit > 0.0 {
        let dist = Uniform::new_inclusive(-limit, limit);
        (0..n).map(|_| dist.sample(rng)).collect()
    } else {
        alloc::vec![0.0; n]
    };
    Tensor::from_vec(shape, data).expect("shape product matches")
}

/// He-style uniform init, `limit = sqrt(6 / fan_in)`, for layers followed by
/// ELU.
pub fn he_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    uniform(rng, shape, (6.0 / fan_in.max(1) as f64).sqrt())
}

/// `limit = 1 / sqrt(fan_in)`, for linear and recurrent weights.
pub fn fan_in_uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    uniform(rng, shape, 1.0 / (fan_in.max(1) as f64).sqrt())
}
