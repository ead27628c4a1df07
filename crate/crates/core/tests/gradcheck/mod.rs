//! Central finite-difference oracle for every layer's backward pass.
//!
//! Each `check_*` function builds `instances` random problems, computes the
//! analytic gradient of a random linear functional of the layer output, and
//! returns the largest relative error against central differences with
//! step [`H`]. Relative errors use `max(|analytic|, |numeric|, FLOOR)` as
//! the denominator so that gradients that are exactly zero analytically
//! (a convolution bias ahead of train-mode batch normalization) compare in
//! absolute terms.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sertk_core::model::{ModelConfig, ModelParams};
use sertk_core::nn::*;

pub const H: f64 = 1e-5;
pub const FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Largest relative error over `indices` (all entries when `None`) of the
/// tensor picked by `select`.
pub fn fd_max_err<S>(
    state: &mut S,
    select: fn(&mut S) -> &mut Tensor,
    loss: &mut dyn FnMut(&mut S) -> f64,
    analytic: &Tensor,
    indices: Option<&[usize]>,
) -> f64 {
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..analytic.len()).collect();
            &all
        }
    };
    let mut worst: f64 = 0.0;
    for &i in idx {
        let orig = select(state).data()[i];
        select(state).data_mut()[i] = orig + H;
        let up = loss(state);
        select(state).data_mut()[i] = orig - H;
        let down = loss(state);
        select(state).data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
    }
    worst
}

pub fn check_conv2d(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (h, w, cin, cout) = (r.gen_range(2..6), r.gen_range(2..7), r.gen_range(1..4), r.gen_range(1..4));
        let k = [1, 3, 3][r.gen_range(0..3)];
        let spec = ConvSpec {
            stride: (r.gen_range(1..3), r.gen_range(1..3)),
            padding: if r.gen_bool(0.7) { Padding::Same } else { Padding::Valid },
        };
        if spec.padding == Padding::Valid && (h < k || w < k) {
            continue;
        }
        let x = random_tensor(&mut r, &[h, w, cin], 1.0);
        let kern = random_tensor(&mut r, &[k, k, cin, cout], 1.0);
        let bias = random_tensor(&mut r, &[cout], 1.0);
        let y = conv2d(&x, &kern, Some(&bias), spec).unwrap();
        let proj = random_tensor(&mut r, y.shape(), 1.0);
        let g = conv2d_backward(&x, &kern, &proj, spec, true).unwrap();
        let mut st = (x, kern, bias);
        let mut loss = |s: &mut (Tensor, Tensor, Tensor)| {
            dot(&conv2d(&s.0, &s.1, Some(&s.2), spec).unwrap(), &proj)
        };
        worst = worst
            .max(fd_max_err(&mut st, |s| &mut s.0, &mut loss, g.input.as_ref().unwrap(), None))
            .max(fd_max_err(&mut st, |s| &mut s.1, &mut loss, &g.kernels, None))
            .max(fd_max_err(&mut st, |s| &mut s.2, &mut loss, &g.bias, None));
    }
    worst
}

pub fn check_batchnorm(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let (n, h, w, c) = (r.gen_range(2..5), r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
        let mode = if i % 4 == 3 { Mode::Eval } else { Mode::Train };
        let batch: Vec<Tensor> = (0..n).map(|_| random_tensor(&mut r, &[h, w, c], 2.0)).collect();
        let mut bn = BatchNorm::new(c);
        bn.gamma = random_tensor(&mut r, &[c], 1.5);
        bn.beta = random_tensor(&mut r, &[c], 1.0);
        bn.running_mean = random_tensor(&mut r, &[c], 0.5);
        bn.running_var = Tensor::from_vec(&[c], (0..c).map(|_| r.gen_range(0.5..2.0)).collect()).unwrap();
        let projs: Vec<Tensor> = (0..n).map(|_| random_tensor(&mut r, &[h, w, c], 1.0)).collect();
        let (_, stats) = bn.clone().forward(&batch, mode).unwrap();
        let g = bn.backward(&batch, &projs, &stats, mode).unwrap();

        let mut loss = |s: &mut (Vec<Tensor>, BatchNorm)| {
            let (out, _) = s.1.clone().forward(&s.0, mode).unwrap();
            out.iter().zip(&projs).map(|(o, p)| dot(o, p)).sum()
        };
        let mut st = (batch, bn);
        worst = worst
            .max(fd_max_err(&mut st, |s| &mut s.1.gamma, &mut loss, &g.gamma, None))
            .max(fd_max_err(&mut st, |s| &mut s.1.beta, &mut loss, &g.beta, None));
        for e in 0..n {
            // fn pointers cannot capture `e`; rotate the batch instead.
            st.0.rotate_left(e);
            let mut rotated = |s: &mut (Vec<Tensor>, BatchNorm)| {
                let mut b = s.0.clone();
                b.rotate_right(e);
                let (out, _) = s.1.clone().forward(&b, mode).unwrap();
                out.iter().zip(&projs).map(|(o, p)| dot(o, p)).sum()
            };
            worst = worst.max(fd_max_err(&mut st, |s| &mut s.0[0], &mut rotated, &g.input[e], None));
            st.0.rotate_right(e);
        }
    }
    worst
}

pub fn check_elu(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = r.gen_range(1..12);
        let alpha = r.gen_range(0.2..2.0);
        // Stay clear of the kink at 0, where the derivative jumps for alpha != 1.
        let data = (0..n)
            .map(|_| {
                let v: f64 = r.gen_range(0.01..3.0);
                if r.gen_bool(0.5) { v } else { -v }
            })
            .collect();
        let x = Tensor::from_vec(&[n], data).unwrap();
        let proj = random_tensor(&mut r, &[n], 1.0);
        let g = elu_backward(&x, &proj, alpha);
        let mut st = x;
        let mut loss = |s: &mut Tensor| dot(&elu(s, alpha), &proj);
        worst = worst.max(fd_max_err(&mut st, |s| s, &mut loss, &g, None));
    }
    worst
}

pub fn check_maxpool(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (ph, pw) = (r.gen_range(1..4), r.gen_range(1..4));
        let (h, w, c) = (ph * r.gen_range(1..4), pw * r.gen_range(1..4), r.gen_range(1..3));
        // Distinct values at least 0.01 apart, so no window has a tie within H.
        let n = h * w * c;
        let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 1.0).collect();
        for i in (1..n).rev() {
            vals.swap(i, r.gen_range(0..=i));
        }
        let x = Tensor::from_vec(&[h, w, c], vals).unwrap();
        let pooled = maxpool(&x, (ph, pw)).unwrap();
        let proj = random_tensor(&mut r, pooled.output.shape(), 1.0);
        let g = maxpool_backward(x.shape(), &pooled.argmax, &proj).unwrap();
        let mut st = x;
        let mut loss = |s: &mut Tensor| dot(&maxpool(s, (ph, pw)).unwrap().output, &proj);
        worst = worst.max(fd_max_err(&mut st, |s| s, &mut loss, &g, None));
    }
    worst
}

pub fn check_lstm_instance(r: &mut ChaCha8Rng, t: usize, d: usize, u: usize) -> f64 {
    let seq = random_tensor(r, &[t, d], 1.0);
    let p = LstmParams {
        input_weights: random_tensor(r, &[d, 4 * u], 0.8),
        recurrent_weights: random_tensor(r, &[u, 4 * u], 0.8),
        bias: random_tensor(r, &[4 * u], 0.5),
    };
    let (hid, cache) = lstm_forward(&seq, &p).unwrap();
    let proj = random_tensor(r, hid.shape(), 1.0);
    let g = lstm_backward(&p, &cache, &proj).unwrap();
    let mut loss = |s: &mut (Tensor, LstmParams)| dot(&lstm_forward(&s.0, &s.1).unwrap().0, &proj);
    let mut st = (seq, p);
    fd_max_err(&mut st, |s| &mut s.0, &mut loss, &g.input, None)
        .max(fd_max_err(&mut st, |s| &mut s.1.input_weights, &mut loss, &g.input_weights, None))
        .max(fd_max_err(&mut st, |s| &mut s.1.recurrent_weights, &mut loss, &g.recurrent_weights, None))
        .max(fd_max_err(&mut st, |s| &mut s.1.bias, &mut loss, &g.bias, None))
}

pub fn check_lstm(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    // The fixed T=4, D=3, U=2 case plus random sizes.
    let mut worst = check_lstm_instance(&mut r, 4, 3, 2);
    for _ in 1..instances {
        let (t, d, u) = (r.gen_range(1..7), r.gen_range(1..5), r.gen_range(1..4));
        worst = worst.max(check_lstm_instance(&mut r, t, d, u));
    }
    worst
}

pub fn check_attention_instance(r: &mut ChaCha8Rng, t: usize, u: usize, a: usize) -> f64 {
    let hid = random_tensor(r, &[t, u], 1.0);
    let p = AttentionParams {
        projection: random_tensor(r, &[a, u], 1.0),
        context: random_tensor(r, &[a], 1.0),
    };
    let (out, cache) = attention_pool(&hid, &p).unwrap();
    let proj = random_tensor(r, out.context.shape(), 1.0);
    let g = attention_backward(&p, &cache, &proj).unwrap();
    let mut loss = |s: &mut (Tensor, AttentionParams)| dot(&attention_pool(&s.0, &s.1).unwrap().0.context, &proj);
    let mut st = (hid, p);
    fd_max_err(&mut st, |s| &mut s.0, &mut loss, &g.hidden, None)
        .max(fd_max_err(&mut st, |s| &mut s.1.projection, &mut loss, &g.projection, None))
        .max(fd_max_err(&mut st, |s| &mut s.1.context, &mut loss, &g.context, None))
}

pub fn check_attention(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = check_attention_instance(&mut r, 5, 3, 3);
    for _ in 1..instances {
        let (t, u, a) = (r.gen_range(1..8), r.gen_range(1..5), r.gen_range(1..5));
        worst = worst.max(check_attention_instance(&mut r, t, u, a));
    }
    worst
}

pub fn check_dense(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (u, c) = (r.gen_range(1..7), r.gen_range(2..6));
        let label = r.gen_range(0..c);
        let x = random_tensor(&mut r, &[u], 1.5);
        let p = DenseParams {
            weights: random_tensor(&mut r, &[c, u], 1.0),
            bias: random_tensor(&mut r, &[c], 1.0),
        };
        let (probs, _) = dense_softmax_xent(x.data(), &p, label).unwrap();
        let g = dense_softmax_xent_backward(x.data(), &p, &probs, label, 1.0).unwrap();
        let mut loss = |s: &mut (Tensor, DenseParams)| dense_softmax_xent(s.0.data(), &s.1, label).unwrap().1;
        let mut st = (x, p);
        worst = worst
            .max(fd_max_err(&mut st, |s| &mut s.0, &mut loss, &g.input, None))
            .max(fd_max_err(&mut st, |s| &mut s.1.weights, &mut loss, &g.weights, None))
            .max(fd_max_err(&mut st, |s| &mut s.1.bias, &mut loss, &g.bias, None));
    }
    worst
}

/// Small configurations that keep the real block structure (pool sizes
/// 2, 2, 4, 4 for the first one).
pub fn small_model_configs() -> Vec<ModelConfig> {
    vec![
        ModelConfig {
            n_mels: 64,
            frames: 128,
            kernels: vec![2, 2, 3, 3],
            kernel_size: 3,
            pools: vec![2, 2, 4, 4],
            lstm_units: 4,
            attention_units: 3,
            classes: 4,
            elu_alpha: 1.0,
        },
        ModelConfig {
            n_mels: 8,
            frames: 24,
            kernels: vec![3, 4],
            kernel_size: 3,
            pools: vec![2, 2],
            lstm_units: 5,
            attention_units: 4,
            classes: 4,
            elu_alpha: 1.0,
        },
    ]
}

/// End-to-end check of the mean batch loss against sampled entries of every
/// trainable tensor. Returns the worst relative error.
pub fn check_model(cfg: &ModelConfig, batch_size: usize, per_tensor: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut params = ModelParams::build(cfg, seed).unwrap();
    // Nonzero biases and non-unit BN scales exercise every path.
    for b in &mut params.blocks {
        let c = b.bias.len();
        b.bias = random_tensor(&mut r, &[c], 0.5);
        b.bn.gamma = Tensor::from_vec(&[c], (0..c).map(|_| r.gen_range(0.5..1.5)).collect()).unwrap();
        b.bn.beta = random_tensor(&mut r, &[c], 0.3);
    }
    let inputs: Vec<Tensor> = (0..batch_size)
        .map(|_| random_tensor(&mut r, &cfg.input_shape(), 3.0))
        .collect();
    let labels: Vec<usize> = (0..batch_size).map(|i| i % 4).collect();
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let (_, grads) = params.clone().loss_and_grads(&refs, &labels, Mode::Train).unwrap();

    let n_tensors = grads.tensors.len();
    let mut worst: f64 = 0.0;
    for ti in 0..n_tensors {
        let len = grads.tensors[ti].len();
        let idx: Vec<usize> = (0..per_tensor.min(len)).map(|_| r.gen_range(0..len)).collect();
        let mut st = (params.clone(), ti);
        let mut loss = |s: &mut (ModelParams, usize)| {
            let mut m = s.0.clone();
            m.forward(&refs, Mode::Train).unwrap().loss(&labels).unwrap()
        };
        worst = worst.max(fd_max_err(
            &mut st,
            |s| {
                let i = s.1;
                s.0.trainable_mut().swap_remove(i)
            },
            &mut loss,
            &grads.tensors[ti],
            Some(&idx),
        ));
    }
    worst
}
