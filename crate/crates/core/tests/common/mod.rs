#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retina_core::data::{synth_generate, SamplerMode};
use retina_core::experiments::{ExperimentConfig, PreparedData};
use retina_core::nn::{
    batchnorm, batchnorm_grad, conv2d, conv2d_grad, dense, dense_grad, pool2d, pool2d_grad, relu, relu_grad,
    ConvSpec, Mode, Model, ModelConfig, PoolMode, PoolSpec, ResidualBlock, RunningStats,
};
use retina_core::optim::{weighted_cross_entropy, TrainConfig};
use retina_core::Tensor;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

pub const FD_EPS: f64 = 1e-6;
/// Gradients that vanish identically (a conv bias feeding batch-norm) compare
/// as rounding noise on both sides; the floor keeps them from reading as 100%.
pub const GRAD_FLOOR: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;
pub const GRAD_SEEDS: u64 = 20;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)).unwrap()
}

/// `||a - b|| / max(||a|| + ||b||, GRAD_FLOOR)`.
pub fn rel_error(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.data().iter().zip(b.data()).map(|(x, y)| x - y));
    let scale = norm(&mut a.data().iter().copied()) + norm(&mut b.data().iter().copied());
    diff / scale.max(GRAD_FLOOR)
}

/// [`rel_error`] over several gradient tensors taken as one vector.
pub fn joint_rel_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    let flat = |ts: &[Tensor]| {
        let data: Vec<f64> = ts.iter().flat_map(|t| t.data().iter().copied()).collect();
        Tensor::from_vec(&[data.len()], data).unwrap()
    };
    rel_error(&flat(analytic), &flat(numeric))
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.clone().into_data();
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = probe[i];
        probe[i] = orig + FD_EPS;
        let plus = f(&Tensor::from_vec(x.shape(), probe.clone()).unwrap());
        probe[i] = orig - FD_EPS;
        let minus = f(&Tensor::from_vec(x.shape(), probe.clone()).unwrap());
        probe[i] = orig;
        *g = (plus - minus) / (2.0 * FD_EPS);
    }
    Tensor::from_vec(x.shape(), grad).unwrap()
}

/// Scalar probe `sum(out * proj)`; its gradient with respect to `out` is `proj`.
pub fn project(out: &Tensor, proj: &Tensor) -> f64 {
    out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

/// Worst relative error across every checked gradient of one case.
pub type CheckResult = Vec<(&'static str, f64)>;

pub fn check_conv(seed: u64) -> CheckResult {
    let mut r = rng(seed);
    let spec = ConvSpec::new(2, 3).kernel_size(3).stride(1 + (seed % 2) as usize).padding((seed % 3) as usize);
    let x = random(&[2, 2, 6, 5], &mut r);
    let k = random(&spec.kernel_shape(), &mut r);
    let b = random(&[3], &mut r);
    let out = conv2d(&x, &k, &b, &spec).unwrap();
    let proj = random(out.shape(), &mut r);
    let g = conv2d_grad(&proj, &x, &k, &spec).unwrap();
    vec![
        ("d_input", rel_error(&g.d_input, &numeric_grad(&x, |x| project(&conv2d(x, &k, &b, &spec).unwrap(), &proj)))),
        ("d_kernels", rel_error(&g.d_kernels, &numeric_grad(&k, |k| project(&conv2d(&x, k, &b, &spec).unwrap(), &proj)))),
        ("d_bias", rel_error(&g.d_bias, &numeric_grad(&b, |b| project(&conv2d(&x, &k, b, &spec).unwrap(), &proj)))),
    ]
}

pub fn check_relu(seed: u64) -> CheckResult {
    let mut r = rng(seed);
    // keep inputs away from the kink so the finite difference is well defined
    let x = random(&[3, 2, 4, 4], &mut r).map(|v| if v.abs() < 1e-3 { 0.5 } else { v });
    let proj = random(x.shape(), &mut r);
    let g = relu_grad(&proj, &x).unwrap();
    vec![("d_input", rel_error(&g, &numeric_grad(&x, |x| project(&relu(x), &proj))))]
}

pub fn check_pool(seed: u64, mode: PoolMode) -> CheckResult {
    let mut r = rng(seed);
    let spec = if seed % 2 == 0 {
        PoolSpec::new(mode)
    } else {
        PoolSpec::new(mode).window(3, 3).stride(2)
    };
    let x = random(&[2, 3, 7, 7], &mut r);
    let out = pool2d(&x, &spec).unwrap();
    let proj = random(out.output.shape(), &mut r);
    let g = pool2d_grad(&proj, &out, &spec).unwrap();
    vec![("d_input", rel_error(&g, &numeric_grad(&x, |x| project(&pool2d(x, &spec).unwrap().output, &proj))))]
}

pub fn check_dense(seed: u64) -> CheckResult {
    let mut r = rng(seed);
    let x = random(&[4, 6], &mut r);
    let w = random(&[6, 3], &mut r);
    let b = random(&[3], &mut r);
    let proj = random(&[4, 3], &mut r);
    let g = dense_grad(&proj, &x, &w).unwrap();
    vec![
        ("d_input", rel_error(&g.d_input, &numeric_grad(&x, |x| project(&dense(x, &w, &b).unwrap(), &proj)))),
        ("d_weights", rel_error(&g.d_weights, &numeric_grad(&w, |w| project(&dense(&x, w, &b).unwrap(), &proj)))),
        ("d_bias", rel_error(&g.d_bias, &numeric_grad(&b, |b| project(&dense(&x, &w, b).unwrap(), &proj)))),
    ]
}

pub fn check_batchnorm(seed: u64) -> CheckResult {
    let mut r = rng(seed);
    let shape: &[usize] = if seed % 2 == 0 { &[4, 3, 3, 3] } else { &[6, 5, 2, 1] };
    let c = shape[1];
    let x = random(shape, &mut r);
    let scale = random(&[c], &mut r).map(|v| v + 1.5);
    let shift = random(&[c], &mut r);
    let stats = RunningStats::new(c).unwrap();
    let f = |x: &Tensor, s: &Tensor, t: &Tensor, p: &Tensor| project(&batchnorm(x, s, t, &stats, Mode::Train).unwrap().0, p);
    let (out, cache, _) = batchnorm(&x, &scale, &shift, &stats, Mode::Train).unwrap();
    let proj = random(out.shape(), &mut r);
    let g = batchnorm_grad(&proj, &cache, &scale).unwrap();
    vec![
        ("d_input", rel_error(&g.d_input, &numeric_grad(&x, |x| f(x, &scale, &shift, &proj)))),
        ("d_scale", rel_error(&g.d_scale, &numeric_grad(&scale, |s| f(&x, s, &shift, &proj)))),
        ("d_shift", rel_error(&g.d_shift, &numeric_grad(&shift, |t| f(&x, &scale, t, &proj)))),
    ]
}

pub fn check_block(seed: u64) -> CheckResult {
    let mut r = rng(seed);
    // alternate identity and projection shortcuts
    let (cin, cout, stride) = if seed % 2 == 0 { (3, 3, 1) } else { (2, 4, 2) };
    let block = ResidualBlock::init(cin, cout, stride, &mut r).unwrap();
    let x = random(&[3, cin, 6, 6], &mut r);
    let (out, cache, _) = block.forward(&x, Mode::Train).unwrap();
    let proj = random(out.shape(), &mut r);
    let (d_input, grads) = block.backward(&proj, &cache).unwrap();
    let d_input_numeric = numeric_grad(&x, |x| project(&block.forward(x, Mode::Train).unwrap().0, &proj));
    let params: Vec<Tensor> = block.parameters().into_iter().map(|(_, t)| t.clone()).collect();
    let numeric: Vec<Tensor> = params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            numeric_grad(p, |v| {
                let mut b = block.clone();
                *b.parameters_mut()[i] = v.clone();
                project(&b.forward(&x, Mode::Train).unwrap().0, &proj)
            })
        })
        .collect();
    vec![
        ("d_input", rel_error(&d_input, &d_input_numeric)),
        ("parameters", joint_rel_error(&grads, &numeric)),
    ]
}

pub fn tiny_model(seed: u64) -> ModelConfig {
    if seed % 2 == 0 {
        ModelConfig::tiny()
    } else {
        ModelConfig { stem_pool: true, ..ModelConfig::tiny() }
    }
}

/// Weighted cross-entropy of the model in train mode, with parameters
/// replaced by `params`.
pub fn model_loss(model: &Model, params: &[Tensor], batch: &Tensor, labels: &[usize], weights: &[f64]) -> f64 {
    let mut m = model.clone();
    m.set_parameters(params.to_vec()).unwrap();
    let logits = m.forward_pass(batch, Mode::Train).unwrap().0;
    weighted_cross_entropy(&logits, labels, weights).unwrap().cost
}

pub struct ModelCase {
    pub model: Model,
    pub batch: Tensor,
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub grads: Vec<Tensor>,
}

pub fn model_case(seed: u64) -> ModelCase {
    let mut r = rng(seed);
    let model = Model::new(tiny_model(seed), seed).unwrap();
    let batch = random(&[4, 1, 8, 8], &mut r);
    let labels = vec![0, 1, 0, 1];
    let weights = vec![r.gen_range(0.5..2.0), r.gen_range(0.5..5.0)];
    let (logits, cache, _) = model.forward_pass(&batch, Mode::Train).unwrap();
    let loss = weighted_cross_entropy(&logits, &labels, &weights).unwrap();
    let grads = model.backward(&cache, &loss.d_logits).unwrap();
    ModelCase { model, batch, labels, weights, grads }
}

pub fn check_model(seed: u64) -> CheckResult {
    let case = model_case(seed);
    let params: Vec<Tensor> = case.model.parameters().into_iter().cloned().collect();
    let numeric: Vec<Tensor> = (0..params.len())
        .map(|i| {
            numeric_grad(&params[i], |v| {
                let mut p = params.clone();
                p[i] = v.clone();
                model_loss(&case.model, &p, &case.batch, &case.labels, &case.weights)
            })
        })
        .collect();
    vec![("parameters", joint_rel_error(&case.grads, &numeric))]
}

/// Runs a check over `GRAD_SEEDS` seeds and returns the worst error seen.
pub fn worst_over_seeds(check: impl Fn(u64) -> CheckResult) -> f64 {
    (0..GRAD_SEEDS)
        .flat_map(|s| check(s).into_iter().map(|(_, e)| e))
        .fold(0.0, f64::max)
}

/// Six-loop cross-correlation.
pub fn conv_oracle(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (f, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    Tensor::from_fn(&[n, f, oh, ow], |idx| {
        let (s, o, i, j) = (idx[0], idx[1], idx[2], idx[3]);
        let mut acc = b.get(&[o]);
        for ch in 0..c {
            for u in 0..kh {
                for v in 0..kw {
                    let (yi, xj) = ((i * stride + u) as isize - pad as isize, (j * stride + v) as isize - pad as isize);
                    if yi >= 0 && xj >= 0 && (yi as usize) < h && (xj as usize) < w {
                        acc += x.get(&[s, ch, yi as usize, xj as usize]) * k.get(&[o, ch, u, v]);
                    }
                }
            }
        }
        acc
    })
    .unwrap()
}

/// Window-by-window max or mean, collected by slicing each window out.
pub fn pool_oracle(x: &Tensor, window: usize, stride: usize, max: bool) -> Tensor {
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
    Tensor::from_fn(&[n, c, oh, ow], |idx| {
        let cells: Vec<f64> = (0..window * window)
            .map(|t| x.get(&[idx[0], idx[1], idx[2] * stride + t / window, idx[3] * stride + t % window]))
            .collect();
        if max {
            cells.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        } else {
            cells.iter().sum::<f64>() / cells.len() as f64
        }
    })
    .unwrap()
}

pub const CANONICAL_N: usize = 1000;
pub const CANONICAL_MINORITY: f64 = 0.1;
pub const CANONICAL_SIZE: usize = 32;
pub const CANONICAL_SEED: u64 = 42;
pub const CANONICAL_EPOCHS: usize = 15;
pub const CANONICAL_LR: f64 = 1e-2;
pub const CANONICAL_BATCH: usize = 128;
pub const CANONICAL_TEST_FRACTION: f64 = 0.2;

pub fn canonical_config(weighted: bool) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelConfig::desk(CANONICAL_SIZE),
        train: TrainConfig {
            learning_rate: CANONICAL_LR,
            epochs: CANONICAL_EPOCHS,
            batch_size: CANONICAL_BATCH,
            class_weights: None,
            sampler_mode: if weighted { SamplerMode::Weighted } else { SamplerMode::Uniform },
            loss_weighted: weighted,
            seed: CANONICAL_SEED,
        },
        test_fraction: CANONICAL_TEST_FRACTION,
    }
}

/// The canonical corpus, generated once per test binary.
pub fn canonical_dir() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("canonical");
        synth_generate(CANONICAL_N, CANONICAL_MINORITY, CANONICAL_SIZE, CANONICAL_SEED, &dir).unwrap();
        (tmp, dir)
    })
    .1
}

pub fn canonical_data() -> &'static PreparedData {
    static DATA: OnceLock<PreparedData> = OnceLock::new();
    DATA.get_or_init(|| {
        PreparedData::load(canonical_dir(), &ModelConfig::desk(CANONICAL_SIZE), CANONICAL_TEST_FRACTION, CANONICAL_SEED)
            .unwrap()
    })
}
