use super::{dims4, expect_shape, NnError, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Geometry of a 2-D convolution with square kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    /// A 3x3, stride-1 convolution with no padding.
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_size: 3,
            stride: 1,
            padding: 0,
        }
    }

    pub fn kernel_size(mut self, kernel_size: usize) -> Self {
        self.kernel_size = kernel_size;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(NnError::InvalidConfig("convolution channel count is zero".into()));
        }
        if self.kernel_size == 0 || self.stride == 0 {
            return Err(NnError::InvalidConfig(
                "convolution kernel size and stride must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Output length along one spatial axis, or `None` if it would be empty.
    pub fn output_dim(&self, input: usize) -> Option<usize> {
        let padded = input + 2 * self.padding;
        (padded >= self.kernel_size).then(|| (padded - self.kernel_size) / self.stride + 1)
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel_size,
            self.kernel_size,
        ]
    }

    fn output_shape(&self, input: &Tensor) -> Result<[usize; 4]> {
        let [n, c, h, w] = dims4(input, "conv2d input")?;
        if c != self.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d input has {c} channels, spec expects {}",
                self.in_channels
            )));
        }
        match (self.output_dim(h), self.output_dim(w)) {
            (Some(ho), Some(wo)) => Ok([n, self.out_channels, ho, wo]),
            _ => Err(NnError::EmptyOutput(format!(
                "{h}x{w} input with kernel {} and padding {}",
                self.kernel_size, self.padding
            ))),
        }
    }
}

/// Range of output positions `i` whose input coordinate `i*stride + offset - pad`
/// falls inside `[0, in_len)`.
fn valid_range(out_len: usize, in_len: usize, stride: usize, pad: usize, offset: usize) -> (usize, usize) {
    let lo = if offset >= pad {
        0
    } else {
        (pad - offset).div_ceil(stride)
    };
    if in_len + pad <= offset {
        return (0, 0);
    }
    let hi = ((in_len - 1 + pad - offset) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// Discrete cross-correlation with zero padding:
/// `out[n,k,i,j] = bias[k] + sum_{c,u,v} input[n,c,i*s+u-p,j*s+v-p] * kernels[k,c,u,v]`.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    spec.validate()?;
    let out_shape = spec.output_shape(input)?;
    expect_shape(kernels, &spec.kernel_shape(), "conv2d kernels")?;
    expect_shape(bias, &[spec.out_channels], "conv2d bias")?;

    let [n_batch, k_out, ho, wo] = out_shape;
    let [_, c_in, h, w] = dims4(input, "conv2d input")?;
    let ks = spec.kernel_size;
    let (s, p) = (spec.stride, spec.padding);
    let x = input.data();
    let kd = kernels.data();
    let mut out = vec![0.0; out_shape.iter().product()];

    for n in 0..n_batch {
        for k in 0..k_out {
            let plane = &mut out[(n * k_out + k) * ho * wo..(n * k_out + k + 1) * ho * wo];
            plane.fill(bias.data()[k]);
            for c in 0..c_in {
                let src = &x[(n * c_in + c) * h * w..(n * c_in + c + 1) * h * w];
                for u in 0..ks {
                    let (ilo, ihi) = valid_range(ho, h, s, p, u);
                    for v in 0..ks {
                        let weight = kd[((k * c_in + c) * ks + u) * ks + v];
                        let (jlo, jhi) = valid_range(wo, w, s, p, v);
                        if jlo >= jhi {
                            continue;
                        }
                        for i in ilo..ihi {
                            let row_in = &src[(i * s + u - p) * w..(i * s + u - p + 1) * w];
                            let row_out = &mut plane[i * wo..(i + 1) * wo];
                            if s == 1 {
                                let shift = jlo + v - p;
                                for (o, &xv) in row_out[jlo..jhi]
                                    .iter_mut()
                                    .zip(&row_in[shift..shift + jhi - jlo])
                                {
                                    *o += weight * xv;
                                }
                            } else {
                                for j in jlo..jhi {
                                    row_out[j] += weight * row_in[j * s + v - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec(&out_shape, out)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub d_input: Tensor,
    pub d_kernels: Tensor,
    pub d_bias: Tensor,
}

/// Gradients of [`conv2d`] with respect to its input, kernels and bias.
pub fn conv2d_grad(
    upstream: &Tensor,
    input: &Tensor,
    kernels: &Tensor,
    spec: &ConvSpec,
) -> Result<ConvGrads> {
    spec.validate()?;
    let out_shape = spec.output_shape(input)?;
    expect_shape(kernels, &spec.kernel_shape(), "conv2d kernels")?;
    expect_shape(upstream, &out_shape, "conv2d upstream")?;

    let [n_batch, k_out, ho, wo] = out_shape;
    let [_, c_in, h, w] = dims4(input, "conv2d input")?;
    let ks = spec.kernel_size;
    let (s, p) = (spec.stride, spec.padding);
    let x = input.data();
    let up = upstream.data();
    let kd = kernels.data();
    let mut dx = vec![0.0; x.len()];
    let mut dk = vec![0.0; kd.len()];
    let mut db = vec![0.0; k_out];

    for n in 0..n_batch {
        for k in 0..k_out {
            let g = &up[(n * k_out + k) * ho * wo..(n * k_out + k + 1) * ho * wo];
            db[k] += g.iter().sum::<f64>();
            for c in 0..c_in {
                let base = (n * c_in + c) * h * w;
                for u in 0..ks {
                    let (ilo, ihi) = valid_range(ho, h, s, p, u);
                    for v in 0..ks {
                        let widx = ((k * c_in + c) * ks + u) * ks + v;
                        let weight = kd[widx];
                        let (jlo, jhi) = valid_range(wo, w, s, p, v);
                        if jlo >= jhi {
                            continue;
                        }
                        let mut acc = 0.0;
                        for i in ilo..ihi {
                            let row = base + (i * s + u - p) * w;
                            let g_row = &g[i * wo..(i + 1) * wo];
                            if s == 1 {
                                let shift = row + jlo + v - p;
                                let len = jhi - jlo;
                                let x_row = &x[shift..shift + len];
                                let dx_row = &mut dx[shift..shift + len];
                                for ((d, &xv), &gv) in
                                    dx_row.iter_mut().zip(x_row).zip(&g_row[jlo..jhi])
                                {
                                    acc += gv * xv;
                                    *d += weight * gv;
                                }
                            } else {
                                for j in jlo..jhi {
                                    let at = row + j * s + v - p;
                                    acc += g_row[j] * x[at];
                                    dx[at] += weight * g_row[j];
                                }
                            }
                        }
                        dk[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        d_input: Tensor::from_vec(input.shape(), dx)?,
        d_kernels: Tensor::from_vec(kernels.shape(), dk)?,
        d_bias: Tensor::from_vec(&[k_out], db)?,
    })
}

/// A convolution layer with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub spec: ConvSpec,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv {
    /// Kernels uniform in `±1/sqrt(fan_in)`, bias zero.
    pub fn init(spec: ConvSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let fan_in = spec.in_channels * spec.kernel_size * spec.kernel_size;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let shape = spec.kernel_shape();
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
        Ok(Self {
            spec,
            weight: Tensor::from_vec(&shape, data)?,
            bias: Tensor::zeros(&[spec.out_channels])?,
        })
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        conv2d(input, &self.weight, &self.bias, &self.spec)
    }

    pub fn backward(&self, upstream: &Tensor, input: &Tensor) -> Result<ConvGrads> {
        conv2d_grad(upstream, input, &self.weight, &self.spec)
    }
}
