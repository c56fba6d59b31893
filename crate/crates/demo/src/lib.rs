//! Browser bindings for three small views onto `retina-core`: feature maps of
//! a synthetic fundus image, the precision/recall/F1 surface, and the class mix
//! produced by the uniform and weighted batch samplers.
//!
//! Everything here is plain Rust and also runs natively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use retina_core::data::{make_sampler, LabelCode, SamplerMode, SynthImageStyle, CLASS_AMD};
use retina_core::metrics::{f1_from_confusion, ConfusionMatrix};
use retina_core::nn::{conv2d, pool2d, relu, ConvSpec, PoolMode, PoolSpec};
use retina_core::Tensor;
use wasm_bindgen::prelude::*;

const KERNELS: [(&str, [f64; 9]); 4] = [
    ("identity", [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
    ("blur", [1.0 / 9.0; 9]),
    ("edge", [-1.0, -1.0, -1.0, -1.0, 8.0, -1.0, -1.0, -1.0, -1.0]),
    ("sobel-x", [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0]),
];

/// Kernel names accepted by [`feature_maps`].
#[wasm_bindgen(js_name = kernelNames)]
pub fn kernel_names() -> Vec<String> {
    KERNELS.iter().map(|(n, _)| n.to_string()).collect()
}

/// An input image with its convolution and pooling outputs, each flattened
/// row-major.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct FeatureMaps {
    size: usize,
    conv_size: usize,
    pool_size: usize,
    input: Vec<f64>,
    conv: Vec<f64>,
    pool: Vec<f64>,
}

#[wasm_bindgen]
impl FeatureMaps {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    #[wasm_bindgen(getter)]
    pub fn conv_size(&self) -> usize {
        self.conv_size
    }

    #[wasm_bindgen(getter)]
    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    #[wasm_bindgen(getter)]
    pub fn input(&self) -> Vec<f64> {
        self.input.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn conv(&self) -> Vec<f64> {
        self.conv.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn pool(&self) -> Vec<f64> {
        self.pool.clone()
    }
}

/// Renders one synthetic image (a disk when `amd` is false, a ring when true),
/// convolves it with the named 3x3 kernel (padding 1), applies ReLU, then a
/// `window`x`window` max or average pool with matching stride.
pub fn feature_maps(
    amd: bool,
    size: usize,
    seed: u64,
    kernel: &str,
    max_pool: bool,
    window: usize,
) -> Result<FeatureMaps, String> {
    let weights = KERNELS
        .iter()
        .find(|(n, _)| *n == kernel)
        .map(|(_, w)| w)
        .ok_or_else(|| format!("unknown kernel `{kernel}`"))?;
    if !(4..=256).contains(&size) || window == 0 || window > size {
        return Err("need 4 <= size <= 256 and 1 <= window <= size".into());
    }
    let label = if amd { LabelCode::Amd } else { LabelCode::Normal };
    let image = SynthImageStyle::default().render(label, size, &mut ChaCha8Rng::seed_from_u64(seed));
    let input = image.to_tensor().reshape(&[1, 1, size, size]).map_err(err)?;

    let spec = ConvSpec::new(1, 1).padding(1);
    let kernels = Tensor::from_vec(&spec.kernel_shape(), weights.to_vec()).map_err(err)?;
    let conv = relu(&conv2d(&input, &kernels, &Tensor::zeros(&[1]).map_err(err)?, &spec).map_err(err)?);
    let mode = if max_pool { PoolMode::Max } else { PoolMode::Average };
    let pooled = pool2d(&conv, &PoolSpec::new(mode).window(window, window).stride(window)).map_err(err)?;
    Ok(FeatureMaps {
        size,
        conv_size: conv.shape()[2],
        pool_size: pooled.output.shape()[2],
        input: input.into_data(),
        conv: conv.into_data(),
        pool: pooled.output.into_data(),
    })
}

#[wasm_bindgen(js_name = featureMaps)]
pub fn feature_maps_js(
    amd: bool,
    size: usize,
    seed: u64,
    kernel: &str,
    max_pool: bool,
    window: usize,
) -> Result<FeatureMaps, JsError> {
    feature_maps(amd, size, seed, kernel, max_pool, window).map_err(|e| JsError::new(&e))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// `[accuracy, precision, recall, f1, degenerate (0 or 1)]` for one
/// confusion matrix.
#[wasm_bindgen]
pub fn scores(tp: u32, fp: u32, fn_: u32, tn: u32) -> Vec<f64> {
    let r = f1_from_confusion(&ConfusionMatrix {
        tp: tp.into(),
        fp: fp.into(),
        fn_: fn_.into(),
        tn: tn.into(),
    });
    vec![r.accuracy, r.precision, r.recall, r.f1, f64::from(u8::from(r.degenerate))]
}

/// F1 over a `steps`x`steps` grid of precision (columns) and recall (rows),
/// both running over `(0, 1]`.
#[wasm_bindgen(js_name = f1Surface)]
pub fn f1_surface(steps: usize) -> Vec<f64> {
    let at = |i: usize| (i + 1) as f64 / steps as f64;
    (0..steps)
        .flat_map(|r| (0..steps).map(move |p| (at(p), at(r))))
        .map(|(p, r)| 2.0 * p * r / (p + r))
        .collect()
}

/// Fraction of minority-class samples in each of the first `batches` batches
/// drawn from a two-class set of `n` labels with the given minority share.
pub fn sampler_mix(
    n: usize,
    minority_fraction: f64,
    batch_size: usize,
    weighted: bool,
    seed: u64,
    batches: usize,
) -> Result<Vec<f64>, String> {
    if !(minority_fraction > 0.0 && minority_fraction < 1.0) || n < 2 {
        return Err("need n >= 2 and 0 < minority fraction < 1".into());
    }
    let minority = ((n as f64 * minority_fraction).round() as usize).clamp(1, n - 1);
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i < minority) * CLASS_AMD).collect();
    let mode = if weighted { SamplerMode::Weighted } else { SamplerMode::Uniform };
    let mut sampler = make_sampler(&labels, mode, batch_size, seed).map_err(err)?;
    let mut out = Vec::with_capacity(batches);
    while out.len() < batches {
        for batch in sampler.next_epoch() {
            if out.len() == batches {
                break;
            }
            let hits = batch.iter().filter(|&&i| labels[i] == CLASS_AMD).count();
            out.push(hits as f64 / batch.len() as f64);
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = samplerMix)]
pub fn sampler_mix_js(
    n: usize,
    minority_fraction: f64,
    batch_size: usize,
    weighted: bool,
    seed: u64,
    batches: usize,
) -> Result<Vec<f64>, JsError> {
    sampler_mix(n, minority_fraction, batch_size, weighted, seed, batches).map_err(|e| JsError::new(&e))
}
