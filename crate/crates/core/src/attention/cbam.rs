use super::AttentionConfig;
use crate::blocks::Conv2d;
use crate::error::{Error, Result};
use crate::params::{join, Parameterized};
use crate::tensor::{global_pool, linear, sigmoid, PoolKind, Tensor};

/// Shared two-layer MLP over the average- and max-pooled channel descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAttention {
    /// `C/r × C`
    pub reduce: Tensor,
    /// `C × C/r`
    pub expand: Tensor,
}

impl ChannelAttention {
    pub fn new(channels: usize, reduction: usize) -> Self {
        let hidden = channels / reduction;
        Self { reduce: Tensor::zeros(&[hidden, channels]), expand: Tensor::zeros(&[channels, hidden]) }
    }

    /// `C×1×1` gate.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (c, _, _) = x.chw()?;
        if self.reduce.shape()[1] != c {
            return Err(Error::shape(format!(
                "channel attention built for {} channels got {c}",
                self.reduce.shape()[1]
            )));
        }
        let avg = global_pool(x, PoolKind::Avg)?;
        let max = global_pool(x, PoolKind::Max)?;
        let mut desc = avg.into_data();
        desc.extend_from_slice(max.data());
        let desc = Tensor::new(vec![2, c], desc)?;
        let hidden = linear(&desc, &self.reduce, None)?.map(|v| v.max(0.0));
        let out = linear(&hidden, &self.expand, None)?;
        let (a, m) = out.data().split_at(c);
        Tensor::new(vec![c, 1, 1], a.iter().zip(m).map(|(&a, &m)| sigmoid(a as f64 + m as f64) as f32).collect())
    }
}

/// Convolution over the channel-wise mean and max maps.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialAttention {
    pub conv: Conv2d,
}

impl SpatialAttention {
    pub fn new(kernel: usize) -> Self {
        Self { conv: Conv2d::new(2, 1, kernel, 1, false) }
    }

    /// `[mean; max]` along channels, `2×H×W`.
    pub fn descriptors(x: &Tensor) -> Result<Tensor> {
        let (c, h, w) = x.chw()?;
        let hw = h * w;
        let mut out = vec![0.0f32; 2 * hw];
        for p in 0..hw {
            let mut sum = 0.0f64;
            let mut max = f32::NEG_INFINITY;
            for ch in 0..c {
                let v = x.data()[ch * hw + p];
                sum += v as f64;
                max = max.max(v);
            }
            out[p] = (sum / c as f64) as f32;
            out[hw + p] = max;
        }
        Tensor::new(vec![2, h, w], out)
    }

    /// `1×H×W` gate.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let logits = self.conv.forward(&Self::descriptors(x)?)?;
        Ok(logits.map(|v| sigmoid(v as f64) as f32))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cbam {
    pub channel: ChannelAttention,
    pub spatial: SpatialAttention,
}

impl Cbam {
    pub fn new(cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            channel: ChannelAttention::new(cfg.channels, cfg.reduction),
            spatial: SpatialAttention::new(cfg.spatial_kernel),
        })
    }

    /// Channel gate, then spatial gate computed on the channel-gated map.
    pub fn forward_with_gates(&self, x: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let (c, h, w) = x.chw()?;
        let hw = h * w;
        let mc = self.channel.forward(x)?;
        let mut refined = x.clone();
        for (ch, plane) in refined.data_mut().chunks_exact_mut(hw).enumerate() {
            let g = mc.data()[ch];
            plane.iter_mut().for_each(|v| *v *= g);
        }
        let ms = self.spatial.forward(&refined)?;
        for plane in refined.data_mut().chunks_exact_mut(hw) {
            plane.iter_mut().zip(ms.data()).for_each(|(v, g)| *v *= g);
        }
        debug_assert_eq!(refined.shape(), [c, h, w]);
        Ok((refined, mc, ms))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_with_gates(x).map(|(y, _, _)| y)
    }
}

impl Parameterized for Cbam {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "channel.reduce.weight"), &self.channel.reduce);
        f(&join(prefix, "channel.expand.weight"), &self.channel.expand);
        self.spatial.conv.visit_params(&join(prefix, "spatial"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "channel.reduce.weight"), &mut self.channel.reduce);
        f(&join(prefix, "channel.expand.weight"), &mut self.channel.expand);
        self.spatial.conv.visit_params_mut(&join(prefix, "spatial"), f);
    }
}
