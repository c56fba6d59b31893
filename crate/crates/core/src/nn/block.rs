use super::{
    dims4, relu, relu_grad, BatchNorm, BatchNormCache, Conv, ConvSpec, Mode, NnError, Result,
    RunningStats,
};
use crate::tensor::{add, Tensor};
use rand::Rng;

/// Basic residual block:
/// `relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x))`.
///
/// The shortcut is the identity unless the block changes stride or channel
/// count, in which case it is a 1x1 convolution with the block's stride.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub conv1: Conv,
    pub bn1: BatchNorm,
    pub conv2: Conv,
    pub bn2: BatchNorm,
    pub shortcut: Option<Conv>,
}

/// Activations kept from a block's forward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    input: Tensor,
    bn1: BatchNormCache,
    pre_relu1: Tensor,
    hidden: Tensor,
    bn2: BatchNormCache,
    pre_relu2: Tensor,
}

impl ResidualBlock {
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let conv1 = Conv::init(
            ConvSpec::new(in_channels, out_channels).stride(stride).padding(1),
            rng,
        )?;
        let conv2 = Conv::init(ConvSpec::new(out_channels, out_channels).padding(1), rng)?;
        let shortcut = if stride != 1 || in_channels != out_channels {
            Some(Conv::init(
                ConvSpec::new(in_channels, out_channels)
                    .kernel_size(1)
                    .stride(stride),
                rng,
            )?)
        } else {
            None
        };
        Ok(Self {
            conv1,
            bn1: BatchNorm::new(out_channels)?,
            conv2,
            bn2: BatchNorm::new(out_channels)?,
            shortcut,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.spec.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.conv1.spec.out_channels
    }

    pub fn stride(&self) -> usize {
        self.conv1.spec.stride
    }

    /// Forward pass. Returns the output, the cache for [`Self::backward`]
    /// and the updated running statistics of `bn1` and `bn2`.
    pub fn forward(
        &self,
        input: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, BlockCache, [RunningStats; 2])> {
        let [_, c, _, _] = dims4(input, "residual block input")?;
        if c != self.in_channels() {
            return Err(NnError::ShapeMismatch(format!(
                "residual block expects {} input channels, got {c}",
                self.in_channels()
            )));
        }
        let a1 = self.conv1.forward(input)?;
        let (pre_relu1, bn1, stats1) = self.bn1.forward(&a1, mode)?;
        let hidden = relu(&pre_relu1);
        let a2 = self.conv2.forward(&hidden)?;
        let (b2, bn2, stats2) = self.bn2.forward(&a2, mode)?;
        let skip = match &self.shortcut {
            Some(conv) => conv.forward(input)?,
            None => input.clone(),
        };
        let pre_relu2 = add(&b2, &skip).map_err(|e| NnError::ShapeMismatch(e.to_string()))?;
        let out = relu(&pre_relu2);
        Ok((
            out,
            BlockCache {
                input: input.clone(),
                bn1,
                pre_relu1,
                hidden,
                bn2,
                pre_relu2,
            },
            [stats1, stats2],
        ))
    }

    /// Gradient with respect to the block input, plus parameter gradients in
    /// [`Self::parameters`] order.
    pub fn backward(&self, upstream: &Tensor, cache: &BlockCache) -> Result<(Tensor, Vec<Tensor>)> {
        let d_pre2 = relu_grad(upstream, &cache.pre_relu2)?;
        let bn2 = self.bn2.backward(&d_pre2, &cache.bn2)?;
        let conv2 = self.conv2.backward(&bn2.d_input, &cache.hidden)?;
        let d_pre1 = relu_grad(&conv2.d_input, &cache.pre_relu1)?;
        let bn1 = self.bn1.backward(&d_pre1, &cache.bn1)?;
        let conv1 = self.conv1.backward(&bn1.d_input, &cache.input)?;

        let mut grads = vec![
            conv1.d_kernels,
            conv1.d_bias,
            bn1.d_scale,
            bn1.d_shift,
            conv2.d_kernels,
            conv2.d_bias,
            bn2.d_scale,
            bn2.d_shift,
        ];
        let d_skip = match &self.shortcut {
            Some(conv) => {
                let g = conv.backward(&d_pre2, &cache.input)?;
                grads.push(g.d_kernels);
                grads.push(g.d_bias);
                g.d_input
            }
            None => d_pre2,
        };
        let d_input = add(&conv1.d_input, &d_skip)?;
        Ok((d_input, grads))
    }

    /// Trainable tensors with their local names, in canonical order.
    pub fn parameters(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![
            ("conv1.weight", &self.conv1.weight),
            ("conv1.bias", &self.conv1.bias),
            ("bn1.scale", &self.bn1.scale),
            ("bn1.shift", &self.bn1.shift),
            ("conv2.weight", &self.conv2.weight),
            ("conv2.bias", &self.conv2.bias),
            ("bn2.scale", &self.bn2.scale),
            ("bn2.shift", &self.bn2.shift),
        ];
        if let Some(conv) = &self.shortcut {
            out.push(("shortcut.weight", &conv.weight));
            out.push(("shortcut.bias", &conv.bias));
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.bn1.scale,
            &mut self.bn1.shift,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.bn2.scale,
            &mut self.bn2.shift,
        ];
        if let Some(conv) = &mut self.shortcut {
            out.push(&mut conv.weight);
            out.push(&mut conv.bias);
        }
        out
    }
}
