use super::{
    dims4, pool2d, pool2d_grad, relu, relu_grad, BatchNorm, BatchNormCache, BlockCache, Conv,
    ConvSpec, Dense, DenseSpec, Mode, NnError, PoolMode, PoolOutput, PoolSpec, ResidualBlock,
    Result, RunningStats,
};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Declarative description of a small residual network.
///
/// Layout: 3x3 stem convolution to `stage_widths[0]` channels with batch
/// norm and ReLU, an optional 2x2 max-pool, then one stage per entry of
/// `stage_widths` with `blocks_per_stage` residual blocks each (every stage
/// after the first halves the resolution in its first block), global
/// average pooling and a dense head with `num_classes` outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    /// `[channels, height, width]` of a single input image.
    pub input_shape: [usize; 3],
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub num_classes: usize,
    pub stem_pool: bool,
}

impl ModelConfig {
    /// Two stages of one block, widths 8 and 16, pooled stem. The default for
    /// desk-scale runs on 32x32 grayscale images.
    pub fn desk(image_size: usize) -> Self {
        Self {
            input_shape: [1, image_size, image_size],
            stage_widths: vec![8, 16],
            blocks_per_stage: 1,
            num_classes: 2,
            stem_pool: true,
        }
    }

    /// 8x8 single-channel input, widths `[4, 8]`. Small enough for exhaustive
    /// finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            input_shape: [1, 8, 8],
            stage_widths: vec![4, 8],
            blocks_per_stage: 1,
            num_classes: 2,
            stem_pool: false,
        }
    }

    /// The ResNet-18 stage layout: widths 64/128/256/512, two blocks each.
    pub fn resnet18(input_shape: [usize; 3], num_classes: usize) -> Self {
        Self {
            input_shape,
            stage_widths: vec![64, 128, 256, 512],
            blocks_per_stage: 2,
            num_classes,
            stem_pool: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(NnError::InvalidConfig(msg.to_string()));
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        if self.stage_widths.is_empty() || self.stage_widths.contains(&0) {
            return bad("stage widths must be non-empty and positive");
        }
        if self.blocks_per_stage == 0 {
            return bad("blocks_per_stage must be at least 1");
        }
        if self.input_shape.contains(&0) {
            return bad("input dimensions must be positive");
        }
        if self.stem_pool && (self.input_shape[1] < 2 || self.input_shape[2] < 2) {
            return bad("stem pooling needs an input of at least 2x2");
        }
        Ok(())
    }

    /// Spatial size of the last feature map.
    pub fn final_feature_size(&self) -> (usize, usize) {
        let (mut h, mut w) = (self.input_shape[1], self.input_shape[2]);
        if self.stem_pool {
            h /= 2;
            w /= 2;
        }
        for _ in 1..self.stage_widths.len() {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
        }
        (h, w)
    }
}

/// A configured network with its parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    stem: Conv,
    stem_bn: BatchNorm,
    blocks: Vec<ResidualBlock>,
    head: Dense,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ModelCache {
    input: Tensor,
    stem_bn: BatchNormCache,
    stem_pre_relu: Tensor,
    stem_pool: Option<PoolOutput>,
    blocks: Vec<BlockCache>,
    global_pool: PoolOutput,
    global_spec: PoolSpec,
    features: Tensor,
}

const STEM_POOL: PoolSpec = PoolSpec {
    window_h: 2,
    window_w: 2,
    stride: 2,
    mode: PoolMode::Max,
};

impl Model {
    /// Builds a model with parameters drawn from a generator seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Conv::init(
            ConvSpec::new(config.input_shape[0], config.stage_widths[0]).padding(1),
            &mut rng,
        )?;
        let stem_bn = BatchNorm::new(config.stage_widths[0])?;
        let mut blocks = Vec::new();
        let mut channels = config.stage_widths[0];
        for (stage, &width) in config.stage_widths.iter().enumerate() {
            for b in 0..config.blocks_per_stage {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                blocks.push(ResidualBlock::init(channels, width, stride, &mut rng)?);
                channels = width;
            }
        }
        let head = Dense::init(
            DenseSpec {
                in_features: channels,
                out_features: config.num_classes,
            },
            &mut rng,
        )?;
        Ok(Self {
            config,
            stem,
            stem_bn,
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[ResidualBlock] {
        &self.blocks
    }

    pub fn head_mut(&mut self) -> &mut Dense {
        &mut self.head
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let [_, c, h, w] = dims4(batch, "model input")?;
        if [c, h, w] != self.config.input_shape {
            return Err(NnError::ShapeMismatch(format!(
                "model expects images of shape {:?}, got {:?}",
                self.config.input_shape,
                [c, h, w]
            )));
        }
        Ok(())
    }

    /// Forward pass without side effects. Returns logits, the backward cache
    /// and the running statistics the pass would leave behind.
    pub fn forward_pass(
        &self,
        batch: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, ModelCache, Vec<RunningStats>)> {
        self.check_batch(batch)?;
        let mut stats = Vec::with_capacity(1 + 2 * self.blocks.len());

        let a = self.stem.forward(batch)?;
        let (stem_pre_relu, stem_bn, s) = self.stem_bn.forward(&a, mode)?;
        stats.push(s);
        let mut x = relu(&stem_pre_relu);
        let stem_pool = if self.config.stem_pool {
            let pooled = pool2d(&x, &STEM_POOL)?;
            x = pooled.output.clone();
            Some(pooled)
        } else {
            None
        };

        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache, [s1, s2]) = block.forward(&x, mode)?;
            stats.push(s1);
            stats.push(s2);
            block_caches.push(cache);
            x = y;
        }

        let [n, c, h, w] = dims4(&x, "final feature map")?;
        let global_spec = PoolSpec::new(PoolMode::Average).window(h, w).stride(1);
        let global_pool = pool2d(&x, &global_spec)?;
        let features = global_pool.output.reshape(&[n, c])?;
        let logits = self.head.forward(&features)?;
        Ok((
            logits,
            ModelCache {
                input: batch.clone(),
                stem_bn,
                stem_pre_relu,
                stem_pool,
                blocks: block_caches,
                global_pool,
                global_spec,
                features,
            },
            stats,
        ))
    }

    /// Logits for a batch. Train mode normalizes with batch statistics and
    /// updates the running statistics.
    pub fn forward(&mut self, batch: &Tensor, mode: Mode) -> Result<Tensor> {
        let (logits, _, stats) = self.forward_pass(batch, mode)?;
        if mode == Mode::Train {
            self.set_running_stats(stats);
        }
        Ok(logits)
    }

    /// Train-mode forward pass that keeps the cache for [`Self::backward`].
    pub fn forward_train(&mut self, batch: &Tensor) -> Result<(Tensor, ModelCache)> {
        let (logits, cache, stats) = self.forward_pass(batch, Mode::Train)?;
        self.set_running_stats(stats);
        Ok((logits, cache))
    }

    /// Eval-mode logits; never changes the model.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward_pass(batch, Mode::Eval)?.0)
    }

    /// Gradients of a scalar cost with respect to every parameter, given the
    /// cost's gradient with respect to the logits. Ordered like
    /// [`Self::named_parameters`].
    pub fn backward(&self, cache: &ModelCache, d_logits: &Tensor) -> Result<Vec<Tensor>> {
        let head = self.head.backward(d_logits, &cache.features)?;
        let d_pooled = head
            .d_input
            .reshape(cache.global_pool.output.shape())?;
        let mut d_x = pool2d_grad(&d_pooled, &cache.global_pool, &cache.global_spec)?;

        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for (block, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (d_in, grads) = block.backward(&d_x, bc)?;
            block_grads.push(grads);
            d_x = d_in;
        }
        if let Some(pooled) = &cache.stem_pool {
            d_x = pool2d_grad(&d_x, pooled, &STEM_POOL)?;
        }
        let d_pre = relu_grad(&d_x, &cache.stem_pre_relu)?;
        let bn = self.stem_bn.backward(&d_pre, &cache.stem_bn)?;
        let conv = self.stem.backward(&bn.d_input, &cache.input)?;

        let mut grads = vec![conv.d_kernels, conv.d_bias, bn.d_scale, bn.d_shift];
        for g in block_grads.into_iter().rev() {
            grads.extend(g);
        }
        grads.push(head.d_weights);
        grads.push(head.d_bias);
        Ok(grads)
    }

    fn block_prefixes(&self) -> Vec<String> {
        let per = self.config.blocks_per_stage;
        (0..self.blocks.len())
            .map(|i| format!("stage{}.block{}", i / per + 1, i % per + 1))
            .collect()
    }

    /// Trainable tensors in canonical (construction) order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("stem.conv.weight".to_string(), &self.stem.weight),
            ("stem.conv.bias".to_string(), &self.stem.bias),
            ("stem.bn.scale".to_string(), &self.stem_bn.scale),
            ("stem.bn.shift".to_string(), &self.stem_bn.shift),
        ];
        for (prefix, block) in self.block_prefixes().into_iter().zip(&self.blocks) {
            for (name, t) in block.parameters() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out.push(("head.weight".to_string(), &self.head.weight));
        out.push(("head.bias".to_string(), &self.head.bias));
        out
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.stem.weight,
            &mut self.stem.bias,
            &mut self.stem_bn.scale,
            &mut self.stem_bn.shift,
        ];
        for block in &mut self.blocks {
            out.extend(block.parameters_mut());
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    /// Replaces every parameter, in canonical order. Shapes must match.
    pub fn set_parameters(&mut self, values: Vec<Tensor>) -> Result<()> {
        let slots = self.parameters_mut();
        if slots.len() != values.len() {
            return Err(NnError::ShapeMismatch(format!(
                "model has {} parameter tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        if let Some((slot, value)) = slots
            .iter()
            .zip(&values)
            .find(|(slot, value)| slot.shape() != value.shape())
        {
            return Err(NnError::ShapeMismatch(format!(
                "parameter shape {:?} does not match {:?}",
                value.shape(),
                slot.shape()
            )));
        }
        for (slot, value) in slots.into_iter().zip(values) {
            *slot = value;
        }
        Ok(())
    }

    fn batch_norms(&self) -> Vec<&BatchNorm> {
        let mut out = vec![&self.stem_bn];
        for block in &self.blocks {
            out.push(&block.bn1);
            out.push(&block.bn2);
        }
        out
    }

    fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm> {
        let mut out = vec![&mut self.stem_bn];
        for block in &mut self.blocks {
            out.push(&mut block.bn1);
            out.push(&mut block.bn2);
        }
        out
    }

    /// Running statistics of every batch-norm layer, in canonical order.
    pub fn running_stats(&self) -> Vec<&RunningStats> {
        self.batch_norms().into_iter().map(|bn| &bn.stats).collect()
    }

    /// Running means and variances as named tensors, mean before variance.
    pub fn named_running_stats(&self) -> Vec<(String, &Tensor)> {
        let mut prefixes = vec!["stem.bn".to_string()];
        for p in self.block_prefixes() {
            prefixes.push(format!("{p}.bn1"));
            prefixes.push(format!("{p}.bn2"));
        }
        prefixes
            .into_iter()
            .zip(self.running_stats())
            .flat_map(|(p, s)| {
                [
                    (format!("{p}.running_mean"), &s.mean),
                    (format!("{p}.running_var"), &s.var),
                ]
            })
            .collect()
    }

    pub fn set_running_stats(&mut self, stats: Vec<RunningStats>) {
        for (bn, s) in self.batch_norms_mut().into_iter().zip(stats) {
            bn.stats = s;
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }
}
