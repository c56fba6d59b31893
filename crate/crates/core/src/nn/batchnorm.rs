use super::{dims4, expect_shape, Mode, NnError, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel running mean and variance used in eval mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Tensor,
    pub var: Tensor,
}

impl RunningStats {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            mean: Tensor::zeros(&[channels])?,
            var: Tensor::new(&[channels], 1.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads {
    pub d_input: Tensor,
    pub d_scale: Tensor,
    pub d_shift: Tensor,
}

/// Per-channel normalization of an `[N,C,H,W]` tensor.
///
/// In train mode the batch mean and biased variance normalize the input and
/// the returned statistics are the running stats blended with momentum
/// [`BN_MOMENTUM`] (the running variance takes the unbiased estimate). In
/// eval mode the running statistics normalize and are returned unchanged.
pub fn batchnorm(
    input: &Tensor,
    scale: &Tensor,
    shift: &Tensor,
    stats: &RunningStats,
    mode: Mode,
) -> Result<(Tensor, BatchNormCache, RunningStats)> {
    let [n, c, h, w] = dims4(input, "batchnorm input")?;
    for (t, what) in [
        (scale, "batchnorm scale"),
        (shift, "batchnorm shift"),
        (&stats.mean, "running mean"),
        (&stats.var, "running variance"),
    ] {
        expect_shape(t, &[c], what)?;
    }
    let plane = h * w;
    let count = n * plane;
    let x = input.data();

    let (mean, var, next) = match mode {
        Mode::Train => {
            if count < 2 {
                return Err(NnError::SingleElementBatch);
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let values = (0..n).flat_map(|b| {
                    let start = (b * c + ch) * plane;
                    x[start..start + plane].iter()
                });
                let m = values.clone().sum::<f64>() / count as f64;
                let v = values.map(|&xv| (xv - m) * (xv - m)).sum::<f64>() / count as f64;
                mean[ch] = m;
                var[ch] = v;
            }
            let unbias = count as f64 / (count - 1) as f64;
            let blend = |old: &[f64], new: &[f64], factor: f64| -> Vec<f64> {
                old.iter()
                    .zip(new)
                    .map(|(&o, &b)| (1.0 - BN_MOMENTUM) * o + BN_MOMENTUM * b * factor)
                    .collect()
            };
            let next = RunningStats {
                mean: Tensor::from_vec(&[c], blend(stats.mean.data(), &mean, 1.0))?,
                var: Tensor::from_vec(&[c], blend(stats.var.data(), &var, unbias))?,
            };
            (mean, var, next)
        }
        Mode::Eval => {
            if let Some(ch) = stats.var.data().iter().position(|&v| v < 0.0 || v.is_nan()) {
                return Err(NnError::NegativeVariance(ch));
            }
            (
                stats.mean.data().to_vec(),
                stats.var.data().to_vec(),
                stats.clone(),
            )
        }
    };

    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut x_hat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            let (gamma, beta) = (scale.data()[ch], shift.data()[ch]);
            for at in start..start + plane {
                let xh = (x[at] - mean[ch]) * inv_std[ch];
                x_hat[at] = xh;
                out[at] = gamma * xh + beta;
            }
        }
    }
    Ok((
        Tensor::from_vec(input.shape(), out)?,
        BatchNormCache {
            x_hat: Tensor::from_vec(input.shape(), x_hat)?,
            inv_std,
        },
        next,
    ))
}

/// Gradients of train-mode [`batchnorm`], including the dependence of the
/// batch statistics on the input.
pub fn batchnorm_grad(
    upstream: &Tensor,
    cache: &BatchNormCache,
    scale: &Tensor,
) -> Result<BatchNormGrads> {
    expect_shape(upstream, cache.x_hat.shape(), "batchnorm upstream")?;
    let [n, c, h, w] = dims4(upstream, "batchnorm upstream")?;
    expect_shape(scale, &[c], "batchnorm scale")?;
    let plane = h * w;
    let count = (n * plane) as f64;
    let g = upstream.data();
    let xh = cache.x_hat.data();

    let mut d_scale = vec![0.0; c];
    let mut d_shift = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            for at in start..start + plane {
                d_shift[ch] += g[at];
                d_scale[ch] += g[at] * xh[at];
            }
        }
    }
    let mut dx = vec![0.0; g.len()];
    for b in 0..n {
        for ch in 0..c {
            let start = (b * c + ch) * plane;
            let k = scale.data()[ch] * cache.inv_std[ch] / count;
            for at in start..start + plane {
                dx[at] = k * (count * g[at] - d_shift[ch] - xh[at] * d_scale[ch]);
            }
        }
    }
    Ok(BatchNormGrads {
        d_input: Tensor::from_vec(upstream.shape(), dx)?,
        d_scale: Tensor::from_vec(&[c], d_scale)?,
        d_shift: Tensor::from_vec(&[c], d_shift)?,
    })
}

/// Batch-normalization parameters with their running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Tensor,
    pub shift: Tensor,
    pub stats: RunningStats,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(Self {
            scale: Tensor::new(&[channels], 1.0)?,
            shift: Tensor::zeros(&[channels])?,
            stats: RunningStats::new(channels)?,
        })
    }

    pub fn forward(&self, input: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache, RunningStats)> {
        batchnorm(input, &self.scale, &self.shift, &self.stats, mode)
    }

    pub fn backward(&self, upstream: &Tensor, cache: &BatchNormCache) -> Result<BatchNormGrads> {
        batchnorm_grad(upstream, cache, &self.scale)
    }
}
