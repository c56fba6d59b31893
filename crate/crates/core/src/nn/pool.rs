use super::{dims4, expect_shape, NnError, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub window_h: usize,
    pub window_w: usize,
    pub stride: usize,
    pub mode: PoolMode,
}

impl PoolSpec {
    /// 2x2 window, stride 2.
    pub fn new(mode: PoolMode) -> Self {
        Self {
            window_h: 2,
            window_w: 2,
            stride: 2,
            mode,
        }
    }

    pub fn window(mut self, window_h: usize, window_w: usize) -> Self {
        self.window_h = window_h;
        self.window_w = window_w;
        self
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    fn output_shape(&self, input: &Tensor) -> Result<[usize; 4]> {
        if self.window_h == 0 || self.window_w == 0 || self.stride == 0 {
            return Err(NnError::InvalidConfig(
                "pooling window and stride must be at least 1".into(),
            ));
        }
        let [n, c, h, w] = dims4(input, "pool2d input")?;
        if h < self.window_h || w < self.window_w {
            return Err(NnError::WindowTooLarge {
                window_h: self.window_h,
                window_w: self.window_w,
                height: h,
                width: w,
            });
        }
        Ok([
            n,
            c,
            (h - self.window_h) / self.stride + 1,
            (w - self.window_w) / self.stride + 1,
        ])
    }
}

/// Pooled tensor plus, in max mode, the flat input offset chosen for each
/// output element.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Option<Vec<usize>>,
    input_shape: Vec<usize>,
}

impl PoolOutput {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
}

/// Window max or window mean per channel. Max ties resolve to the first
/// cell in row-major window order.
pub fn pool2d(input: &Tensor, spec: &PoolSpec) -> Result<PoolOutput> {
    let out_shape = spec.output_shape(input)?;
    let [n, c, h, w] = dims4(input, "pool2d input")?;
    let [_, _, ho, wo] = out_shape;
    let x = input.data();
    let len = out_shape.iter().product();
    let mut out = Vec::with_capacity(len);
    let mut argmax = match spec.mode {
        PoolMode::Max => Some(Vec::with_capacity(len)),
        PoolMode::Average => None,
    };
    let area = (spec.window_h * spec.window_w) as f64;

    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let (r0, c0) = (i * spec.stride, j * spec.stride);
                match argmax.as_mut() {
                    Some(arg) => {
                        let mut best = base + r0 * w + c0;
                        for u in 0..spec.window_h {
                            for v in 0..spec.window_w {
                                let at = base + (r0 + u) * w + c0 + v;
                                if x[at] > x[best] {
                                    best = at;
                                }
                            }
                        }
                        out.push(x[best]);
                        arg.push(best);
                    }
                    None => {
                        let mut sum = 0.0;
                        for u in 0..spec.window_h {
                            let row = base + (r0 + u) * w + c0;
                            sum += x[row..row + spec.window_w].iter().sum::<f64>();
                        }
                        out.push(sum / area);
                    }
                }
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_vec(&out_shape, out)?,
        argmax,
        input_shape: input.shape().to_vec(),
    })
}

/// Routes max-mode gradients to the recorded argmax cells and spreads
/// average-mode gradients uniformly over each window.
pub fn pool2d_grad(upstream: &Tensor, cached: &PoolOutput, spec: &PoolSpec) -> Result<Tensor> {
    expect_shape(upstream, cached.output.shape(), "pool2d upstream")?;
    let in_shape = &cached.input_shape;
    let (h, w) = (in_shape[2], in_shape[3]);
    let [_, _, ho, wo] = dims4(upstream, "pool2d upstream")?;
    let g = upstream.data();
    let mut dx = vec![0.0; in_shape.iter().product()];

    match (&cached.argmax, spec.mode) {
        (Some(arg), PoolMode::Max) => {
            for (&at, &gv) in arg.iter().zip(g) {
                dx[at] += gv;
            }
        }
        (None, PoolMode::Average) => {
            let share = 1.0 / (spec.window_h * spec.window_w) as f64;
            for plane in 0..in_shape[0] * in_shape[1] {
                let base = plane * h * w;
                for i in 0..ho {
                    for j in 0..wo {
                        let gv = g[(plane * ho + i) * wo + j] * share;
                        let (r0, c0) = (i * spec.stride, j * spec.stride);
                        for u in 0..spec.window_h {
                            let row = base + (r0 + u) * w + c0;
                            for d in &mut dx[row..row + spec.window_w] {
                                *d += gv;
                            }
                        }
                    }
                }
            }
        }
        _ => {
            return Err(NnError::InvalidConfig(
                "pooling cache does not match the spec's mode".into(),
            ))
        }
    }
    Ok(Tensor::from_vec(in_shape, dx)?)
}
