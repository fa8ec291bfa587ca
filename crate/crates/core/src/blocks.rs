//! Convolutional building blocks of the backbone and neck.
//!
//! * [`ConvBnAct`]: convolution, frozen batch norm, activation.
//! * [`DenseBlock`]: each layer sees the channel concatenation of the block input
//!   and every earlier layer output; the block returns all of them concatenated,
//!   `C + n·g` channels.
//! * [`CspBlock`]: even channel split; the first half runs through residual
//!   bottlenecks, the second half bypasses; both are concatenated and fused by a
//!   1×1 unit.
//! * [`SppBlock`]: input concatenated with stride-1 max pools (padding `k/2`),
//!   `4C` channels fused back to `C`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{join, Parameterized};
use crate::tensor::{
    activation, batch_norm_inference, concat, conv2d, pool2d, Activation, BatchNormParams, PoolKind, Tensor,
};

pub const BN_EPS: f32 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// Zero-initialized `out×in×k×k` convolution with "same" padding `k/2`.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, with_bias: bool) -> Self {
        Self {
            weight: Tensor::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: with_bias.then(|| Tensor::zeros(&[out_channels])),
            stride,
            padding: kernel / 2,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, self.bias.as_ref(), self.stride, self.padding)
    }

    /// Multiply-accumulates for an input of `h×w`.
    pub fn macs(&self, h: usize, w: usize) -> u64 {
        let (oh, ow) = self.output_hw(h, w);
        let k = self.kernel();
        (self.out_channels() * oh * ow * self.in_channels() * k * k) as u64
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        ((h + 2 * self.padding - k) / self.stride + 1, (w + 2 * self.padding - k) / self.stride + 1)
    }
}

impl Parameterized for Conv2d {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

impl Parameterized for BatchNormParams {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "mean"), &self.mean);
        f(&join(prefix, "var"), &self.var);
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "mean"), &mut self.mean);
        f(&join(prefix, "var"), &mut self.var);
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }
}

/// Channel and depth parameters shared by the block constructors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Dense layers or CSP bottlenecks.
    pub depth: usize,
    /// Dense growth rate.
    pub growth: usize,
    /// SPP pooling kernels.
    pub kernels: Vec<usize>,
    pub activation: Activation,
}

impl BlockConfig {
    pub fn new(in_channels: usize, out_channels: usize, activation: Activation) -> Self {
        Self { in_channels, out_channels, depth: 1, growth: 16, kernels: vec![5, 9, 13], activation }
    }

    pub fn depth(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn growth(mut self, growth: usize) -> Self {
        self.growth = growth;
        self
    }

    pub fn kernels(mut self, kernels: Vec<usize>) -> Self {
        self.kernels = kernels;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBnAct {
    pub conv: Conv2d,
    pub bn: BatchNormParams,
    pub act: Activation,
}

impl ConvBnAct {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, act: Activation) -> Self {
        Self {
            conv: Conv2d::new(in_channels, out_channels, kernel, stride, false),
            bn: BatchNormParams::identity(out_channels, BN_EPS),
            act,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.conv.forward(x)?;
        let y = batch_norm_inference(&y, &self.bn)?;
        Ok(activation(self.act, &y))
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }
}

impl Parameterized for ConvBnAct {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv.visit_params(&join(prefix, "conv"), f);
        self.bn.visit_params(&join(prefix, "bn"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.conv.visit_params_mut(&join(prefix, "conv"), f);
        self.bn.visit_params_mut(&join(prefix, "bn"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseBlock {
    pub in_channels: usize,
    pub growth: usize,
    pub layers: Vec<ConvBnAct>,
}

impl DenseBlock {
    /// `cfg.depth` layers of 3×3 units producing `cfg.growth` channels each.
    pub fn new(cfg: &BlockConfig) -> Result<Self> {
        if cfg.depth == 0 || cfg.growth == 0 || cfg.in_channels == 0 {
            return Err(Error::Config(format!(
                "dense block needs positive channels, depth and growth (got {}, {}, {})",
                cfg.in_channels, cfg.depth, cfg.growth
            )));
        }
        let layers = (0..cfg.depth)
            .map(|i| ConvBnAct::new(cfg.in_channels + i * cfg.growth, cfg.growth, 3, 1, cfg.activation))
            .collect();
        Ok(Self { in_channels: cfg.in_channels, growth: cfg.growth, layers })
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels + self.layers.len() * self.growth
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut features = x.clone();
        for layer in &self.layers {
            let y = layer.forward(&features)?;
            features = concat(&[&features, &y], 0)?;
        }
        Ok(features)
    }
}

impl Parameterized for DenseBlock {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.layers.visit_params(&join(prefix, "layers"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.layers.visit_params_mut(&join(prefix, "layers"), f);
    }
}

/// 1×1 reduce to half width, 3×3 expand back, residual add.
#[derive(Clone, Debug, PartialEq)]
pub struct Bottleneck {
    pub reduce: ConvBnAct,
    pub expand: ConvBnAct,
}

impl Bottleneck {
    pub fn new(channels: usize, act: Activation) -> Self {
        let hidden = (channels / 2).max(1);
        Self {
            reduce: ConvBnAct::new(channels, hidden, 1, 1, act),
            expand: ConvBnAct::new(hidden, channels, 3, 1, act),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = self.expand.forward(&self.reduce.forward(x)?)?;
        x.add(&y)
    }
}

impl Parameterized for Bottleneck {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.reduce.visit_params(&join(prefix, "reduce"), f);
        self.expand.visit_params(&join(prefix, "expand"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.reduce.visit_params_mut(&join(prefix, "reduce"), f);
        self.expand.visit_params_mut(&join(prefix, "expand"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CspBlock {
    pub in_channels: usize,
    pub bottlenecks: Vec<Bottleneck>,
    pub fuse: ConvBnAct,
}

impl CspBlock {
    pub fn new(cfg: &BlockConfig) -> Result<Self> {
        if cfg.in_channels == 0 || !cfg.in_channels.is_multiple_of(2) {
            return Err(Error::Config(format!("CSP block needs an even channel count, got {}", cfg.in_channels)));
        }
        let half = cfg.in_channels / 2;
        Ok(Self {
            in_channels: cfg.in_channels,
            bottlenecks: (0..cfg.depth).map(|_| Bottleneck::new(half, cfg.activation)).collect(),
            fuse: ConvBnAct::new(cfg.in_channels, cfg.out_channels, 1, 1, cfg.activation),
        })
    }

    pub fn out_channels(&self) -> usize {
        self.fuse.out_channels()
    }

    /// The processed and bypass halves, before fusion.
    pub fn forward_parts(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (c, _, _) = x.chw()?;
        if c != self.in_channels {
            return Err(Error::shape(format!("CSP block built for {} channels got {c}", self.in_channels)));
        }
        let mut processed = x.slice(0, 0, c / 2)?;
        let bypass = x.slice(0, c / 2, c)?;
        for b in &self.bottlenecks {
            processed = b.forward(&processed)?;
        }
        Ok((processed, bypass))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (processed, bypass) = self.forward_parts(x)?;
        self.fuse.forward(&concat(&[&processed, &bypass], 0)?)
    }
}

impl Parameterized for CspBlock {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.bottlenecks.visit_params(&join(prefix, "bottlenecks"), f);
        self.fuse.visit_params(&join(prefix, "fuse"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.bottlenecks.visit_params_mut(&join(prefix, "bottlenecks"), f);
        self.fuse.visit_params_mut(&join(prefix, "fuse"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SppBlock {
    pub kernels: Vec<usize>,
    pub fuse: ConvBnAct,
}

impl SppBlock {
    pub fn new(cfg: &BlockConfig) -> Result<Self> {
        if cfg.kernels.is_empty() || cfg.kernels.iter().any(|&k| k % 2 == 0) {
            return Err(Error::Config(format!("SPP kernels must be odd and non-empty, got {:?}", cfg.kernels)));
        }
        let branches = cfg.kernels.len() + 1;
        Ok(Self {
            kernels: cfg.kernels.clone(),
            fuse: ConvBnAct::new(branches * cfg.in_channels, cfg.out_channels, 1, 1, cfg.activation),
        })
    }

    pub fn min_spatial(&self) -> usize {
        self.kernels.iter().max().copied().unwrap_or(1) / 2
    }

    /// `[x, maxpool_k1(x), maxpool_k2(x), …]` along channels.
    pub fn forward_branches(&self, x: &Tensor) -> Result<Tensor> {
        let (_, h, w) = x.chw()?;
        let min = self.min_spatial();
        if h < min || w < min {
            return Err(Error::shape(format!("SPP needs at least {min}×{min} spatial input, got {h}×{w}")));
        }
        let mut parts = vec![x.clone()];
        for &k in &self.kernels {
            parts.push(pool2d(x, PoolKind::Max, k, 1, k / 2)?);
        }
        concat(&parts.iter().collect::<Vec<_>>(), 0)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fuse.forward(&self.forward_branches(x)?)
    }
}

impl Parameterized for SppBlock {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.fuse.visit_params(&join(prefix, "fuse"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.fuse.visit_params_mut(&join(prefix, "fuse"), f);
    }
}
