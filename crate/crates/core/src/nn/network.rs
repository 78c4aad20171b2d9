//! Network assembly: the two architectures, forward/backward through the
//! block stack, and the head-reset used after every clustering step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{BatchNorm2d, Conv2d, Linear, MaxPool2, Relu};
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Supported feature extractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// conv(6@5×5) → pool → conv(16@5×5) → pool; feature dim 256 at 28×28.
    Lenet5,
    /// Five 3×3 conv blocks (48, 126, 192, 192, 128 filters), pools after
    /// blocks 1, 2, 5; feature dim 2048 at 32×32.
    MiniAlexnet,
}

/// Filter counts of the mini-AlexNet blocks.
pub const MINI_ALEXNET_FILTERS: [usize; 5] = [48, 126, 192, 192, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything needed to construct a network (head width equals the cluster
/// count during pseudo-label training).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    pub input_channels: usize,
    pub input_size: usize,
    pub use_batchnorm: bool,
    pub use_sobel: bool,
    pub num_classes: usize,
}

impl NetworkConfig {
    /// Channels the network actually sees: Sobel preprocessing replaces the
    /// image with a 2-channel gradient field.
    pub fn effective_input_channels(&self) -> usize {
        if self.use_sobel {
            2
        } else {
            self.input_channels
        }
    }
}

#[derive(Debug, Clone)]
struct Block<S> {
    name: String,
    conv: Conv2d<S>,
    bn: Option<BatchNorm2d<S>>,
    relu: Relu<S>,
    pool: Option<MaxPool2>,
}

/// A feature extractor plus a linear head.
#[derive(Debug, Clone)]
pub struct Network<S = f32> {
    pub config: NetworkConfig,
    blocks: Vec<Block<S>>,
    head: Linear<S>,
    mode: Mode,
    feature_dim: usize,
    feature_map: (usize, usize, usize), // (C, H, W) before flattening
}

/// How far `forward` should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upto {
    /// Flattened output of the topmost conv block (post ReLU and pooling) —
    /// the space used for clustering and linear probing.
    Features,
    /// Head applied on top of the features.
    Logits,
}

/// Builds a network with deterministic Kaiming-uniform initialization: each
/// layer draws from its own stream derived from (`seed`, layer name), biases
/// start at zero, and batchnorm starts as the identity mapping.
pub fn build_network<S: Scalar>(config: &NetworkConfig, seed: u64) -> Result<Network<S>> {
    if config.num_classes < 2 {
        return Err(Error::Config(format!(
            "num_classes must be at least 2, got {}",
            config.num_classes
        )));
    }
    let in_ch = config.effective_input_channels();
    if in_ch == 0 {
        return Err(Error::Config("input_channels must be positive".into()));
    }
    let s = config.input_size;

    let plan: Vec<(usize, usize, usize, bool)> = match config.architecture {
        // (out_channels, kernel, pad, pooled)
        Architecture::Lenet5 => vec![(6, 5, 0, true), (16, 5, 0, true)],
        Architecture::MiniAlexnet => MINI_ALEXNET_FILTERS
            .iter()
            .enumerate()
            .map(|(i, &f)| (f, 3, 1, matches!(i, 0 | 1 | 4)))
            .collect(),
    };

    let mut blocks = Vec::with_capacity(plan.len());
    let mut ch = in_ch;
    let mut side = s;
    for (i, &(out_ch, k, pad, pooled)) in plan.iter().enumerate() {
        let name = format!("conv{}", i + 1);
        let conv = Conv2d::new(ch, out_ch, k, pad, &mut stream(seed, &name, 0));
        if side + 2 * pad < k {
            return Err(Error::Config(format!(
                "input size {s} too small for {name} of {:?}",
                config.architecture
            )));
        }
        side = side + 2 * pad + 1 - k;
        if pooled {
            if side % 2 != 0 || side == 0 {
                return Err(Error::Config(format!(
                    "input size {s} incompatible with the pooling schedule of {:?} \
                     ({name} output is {side}×{side})",
                    config.architecture
                )));
            }
            side /= 2;
        }
        blocks.push(Block {
            name,
            conv,
            bn: config.use_batchnorm.then(|| BatchNorm2d::new(out_ch)),
            relu: Relu::new(),
            pool: pooled.then(MaxPool2::new),
        });
        ch = out_ch;
    }

    let feature_dim = ch * side * side;
    let head = Linear::new(feature_dim, config.num_classes, &mut stream(seed, "head", 0));
    Ok(Network {
        config: config.clone(),
        blocks,
        head,
        mode: Mode::Eval,
        feature_dim,
        feature_map: (ch, side, side),
    })
}

impl<S: Scalar> Network<S> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Dimension of the flattened feature space.
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Identifier of the layer that provides features for clustering and
    /// probing: the topmost conv block output.
    pub fn feature_layer(&self) -> &'static str {
        match self.config.architecture {
            Architecture::Lenet5 => "conv2",
            Architecture::MiniAlexnet => "relu5",
        }
    }

    /// Runs the network on an NCHW batch. In `Mode::Train` batchnorm uses
    /// batch statistics and the layers cache what `backward` needs.
    pub fn forward(&mut self, x: &Tensor<S>, upto: Upto) -> Result<Tensor<S>> {
        let (_, c, h, w) = x.dims4();
        let expect_c = self.config.effective_input_channels();
        let s = self.config.input_size;
        if c != expect_c || h != s || w != s {
            return Err(Error::Invalid(format!(
                "input shape {c}×{h}×{w} does not match configured {expect_c}×{s}×{s}"
            )));
        }
        let train = self.mode == Mode::Train;
        let mut cur = None::<Tensor<S>>;
        for block in &mut self.blocks {
            let mut t = block.conv.forward(cur.as_ref().unwrap_or(x), train);
            if let Some(bn) = block.bn.as_mut() {
                t = bn.forward(&t, train);
            }
            t = block.relu.forward(&t, train);
            if let Some(pool) = block.pool.as_mut() {
                t = pool.forward(&t, train);
            }
            cur = Some(t);
        }
        let feats = cur.expect("network has at least one block");
        let n = feats.shape()[0];
        let feats = feats.reshape(&[n, self.feature_dim]);
        let out = match upto {
            Upto::Features => feats,
            Upto::Logits => self.head.forward(&feats, train),
        };
        out.check_finite("network activations")?;
        Ok(out)
    }

    /// Backpropagates d(loss)/d(logits) into every parameter gradient.
    /// Requires a preceding `forward(.., Upto::Logits)` in `Mode::Train`.
    pub fn backward(&mut self, dlogits: &Tensor<S>) -> Result<()> {
        let mut grad = self.head.backward(dlogits);
        let n = grad.shape()[0];
        let (c, h, w) = self.feature_map;
        grad = grad.reshape(&[n, c, h, w]);
        for bi in (0..self.blocks.len()).rev() {
            let block = &mut self.blocks[bi];
            if let Some(pool) = block.pool.as_mut() {
                grad = pool.backward(&grad);
            }
            grad = block.relu.backward(&grad);
            if let Some(bn) = block.bn.as_mut() {
                grad = bn.backward(&grad);
            }
            match block.conv.backward(&grad, bi > 0) {
                Some(g) => grad = g,
                None => break,
            }
        }
        let mut finite = true;
        self.visit_params(|_, _, g| finite &= g.iter().all(|v| v.is_finite()));
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite("parameter gradients".into()))
        }
    }

    pub fn zero_grad(&mut self) {
        for block in &mut self.blocks {
            block.conv.zero_grad();
            if let Some(bn) = block.bn.as_mut() {
                bn.zero_grad();
            }
        }
        self.head.zero_grad();
    }

    /// Replaces the head with a freshly initialized layer of width `k`; the
    /// feature extractor is untouched.
    pub fn reset_head(&mut self, k: usize, seed: u64) -> Result<()> {
        if k < 2 {
            return Err(Error::Invalid(format!("head width must be at least 2, got {k}")));
        }
        self.head = Linear::new(self.feature_dim, k, &mut stream(seed, "head", 0));
        self.config.num_classes = k;
        Ok(())
    }

    /// Visits (name, parameter, gradient) for every trainable tensor, in a
    /// fixed order.
    pub fn visit_params(&mut self, mut f: impl FnMut(&str, &mut [S], &mut [S])) {
        for block in &mut self.blocks {
            f(&format!("{}.weight", block.name), &mut block.conv.w, &mut block.conv.dw);
            f(&format!("{}.bias", block.name), &mut block.conv.b, &mut block.conv.db);
            if let Some(bn) = block.bn.as_mut() {
                let bn_name = block.name.replace("conv", "bn");
                f(&format!("{bn_name}.gamma"), &mut bn.gamma, &mut bn.dgamma);
                f(&format!("{bn_name}.beta"), &mut bn.beta, &mut bn.dbeta);
            }
        }
        f("head.weight", &mut self.head.w, &mut self.head.dw);
        f("head.bias", &mut self.head.b, &mut self.head.db);
    }

    /// Visits (name, tensor, shape) for every state tensor — parameters plus
    /// batchnorm running statistics — in a fixed order. This is the
    /// checkpoint payload.
    pub fn visit_state(&self, mut f: impl FnMut(&str, &[S], &[usize])) {
        for block in &self.blocks {
            let c = &block.conv;
            f(
                &format!("{}.weight", block.name),
                &c.w,
                &[c.out_ch, c.in_ch, c.k, c.k],
            );
            f(&format!("{}.bias", block.name), &c.b, &[c.out_ch]);
            if let Some(bn) = block.bn.as_ref() {
                let bn_name = block.name.replace("conv", "bn");
                f(&format!("{bn_name}.gamma"), &bn.gamma, &[bn.ch]);
                f(&format!("{bn_name}.beta"), &bn.beta, &[bn.ch]);
                f(&format!("{bn_name}.running_mean"), &bn.running_mean, &[bn.ch]);
                f(&format!("{bn_name}.running_var"), &bn.running_var, &[bn.ch]);
            }
        }
        f("head.weight", &self.head.w, &[self.head.out_dim, self.head.in_dim]);
        f("head.bias", &self.head.b, &[self.head.out_dim]);
    }

    /// Mutable version of [`visit_state`], used when loading checkpoints.
    pub fn visit_state_mut(&mut self, mut f: impl FnMut(&str, &mut [S])) {
        for block in &mut self.blocks {
            f(&format!("{}.weight", block.name), &mut block.conv.w);
            f(&format!("{}.bias", block.name), &mut block.conv.b);
            if let Some(bn) = block.bn.as_mut() {
                let bn_name = block.name.replace("conv", "bn");
                f(&format!("{bn_name}.gamma"), &mut bn.gamma);
                f(&format!("{bn_name}.beta"), &mut bn.beta);
                f(&format!("{bn_name}.running_mean"), &mut bn.running_mean);
                f(&format!("{bn_name}.running_var"), &mut bn.running_var);
            }
        }
        f("head.weight", &mut self.head.w);
        f("head.bias", &mut self.head.b);
    }

    /// FNV-1a hash of all feature-extractor state (parameters and running
    /// statistics), excluding the head — used to assert freeze/isolation
    /// contracts.
    pub fn extractor_fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        self.visit_state(|name, data, _| {
            if name.starts_with("head.") {
                return;
            }
            for v in data {
                for b in v.to_f64().to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        });
        h
    }

    /// Recasts every state tensor to another element type (used to mirror an
    /// f32 network into f64 for finite-difference oracles).
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let mut out: Network<U> =
            build_network(&self.config, 0).expect("config was already validated");
        let mut src: Vec<Vec<U>> = Vec::new();
        self.visit_state(|_, data, _| {
            src.push(data.iter().map(|v| U::from_f64(v.to_f64())).collect());
        });
        let mut i = 0;
        out.visit_state_mut(|_, dst| {
            dst.copy_from_slice(&src[i]);
            i += 1;
        });
        out.mode = match self.mode {
            Mode::Train => Mode::Train,
            Mode::Eval => Mode::Eval,
        };
        out
    }
}
