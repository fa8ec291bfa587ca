use serde::Serialize;

use super::config::{DetectorConfig, LEVEL_STRIDES};
use crate::attention::{complexity, Cbam, Complexity, StrBlockPair};
use crate::blocks::{BlockConfig, Conv2d, ConvBnAct, CspBlock, DenseBlock, SppBlock};
use crate::error::{Error, Result};
use crate::params::{join, Parameterized};
use crate::tensor::{concat, upsample_nearest2x, Tensor};

/// Raw predictions of one head: `B·(5+K) × S × S`, anchor-major channels
/// `(tx, ty, tw, th, obj, cls…)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutput {
    pub scale: usize,
    pub stride: usize,
    pub tensor: Tensor,
}

impl HeadOutput {
    pub fn grid(&self) -> usize {
        self.tensor.shape()[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub down: ConvBnAct,
    pub dense: DenseBlock,
    pub csp: CspBlock,
}

impl Parameterized for Stage {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.down.visit_params(&join(prefix, "down"), f);
        self.dense.visit_params(&join(prefix, "dense"), f);
        self.csp.visit_params(&join(prefix, "csp"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.down.visit_params_mut(&join(prefix, "down"), f);
        self.dense.visit_params_mut(&join(prefix, "dense"), f);
        self.csp.visit_params_mut(&join(prefix, "csp"), f);
    }
}

/// Stem, four dense-CSP stages, SPP on the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    pub stem: ConvBnAct,
    pub stages: Vec<Stage>,
    pub spp: SppBlock,
}

impl Backbone {
    fn new(cfg: &DetectorConfig) -> Result<Self> {
        let act = cfg.activation;
        let mut prev = cfg.stem_width;
        let mut stages = Vec::with_capacity(4);
        for level in 0..4 {
            let w = cfg.widths[level];
            let dense = DenseBlock::new(
                &BlockConfig::new(w, 0, act).depth(cfg.dense_layers[level]).growth(cfg.dense_growth[level]),
            )?;
            let csp = CspBlock::new(&BlockConfig::new(dense.out_channels(), w, act).depth(cfg.csp_depths[level]))?;
            stages.push(Stage { down: ConvBnAct::new(prev, w, 3, 2, act), dense, csp });
            prev = w;
        }
        Ok(Self {
            stem: ConvBnAct::new(3, cfg.stem_width, 3, 2, act),
            stages,
            spp: SppBlock::new(&BlockConfig::new(prev, prev, act).kernels(cfg.spp_kernels.clone()))?,
        })
    }

    /// Level features at strides 4, 8, 16, 32.
    pub fn forward(&self, image: &Tensor) -> Result<Vec<Tensor>> {
        let mut x = self.stem.forward(image)?;
        let mut levels = Vec::with_capacity(4);
        for stage in &self.stages {
            x = stage.csp.forward(&stage.dense.forward(&stage.down.forward(&x)?)?)?;
            levels.push(x.clone());
        }
        let last = levels.last_mut().expect("four stages");
        *last = self.spp.forward(last)?;
        Ok(levels)
    }
}

impl Parameterized for Backbone {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.stem.visit_params(&join(prefix, "stem"), f);
        self.stages.visit_params(&join(prefix, "stages"), f);
        self.spp.visit_params(&join(prefix, "spp"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.stem.visit_params_mut(&join(prefix, "stem"), f);
        self.stages.visit_params_mut(&join(prefix, "stages"), f);
        self.spp.visit_params_mut(&join(prefix, "spp"), f);
    }
}

/// One fusion step: concatenate, CSP, CBAM.
#[derive(Clone, Debug, PartialEq)]
pub struct Fusion {
    pub resample: ConvBnAct,
    pub csp: CspBlock,
    pub cbam: Cbam,
}

impl Fusion {
    fn new(cfg: &DetectorConfig, from: usize, to: usize, kernel: usize, stride: usize) -> Result<Self> {
        let act = cfg.activation;
        Ok(Self {
            resample: ConvBnAct::new(from, to, kernel, stride, act),
            csp: CspBlock::new(&BlockConfig::new(2 * to, to, act).depth(cfg.neck_depth))?,
            cbam: Cbam::new(&cfg.attention(to))?,
        })
    }

    fn fuse(&self, moved: &Tensor, skip: &Tensor) -> Result<Tensor> {
        self.cbam.forward(&self.csp.forward(&concat(&[moved, skip], 0)?)?)
    }
}

impl Parameterized for Fusion {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.resample.visit_params(&join(prefix, "resample"), f);
        self.csp.visit_params(&join(prefix, "csp"), f);
        self.cbam.visit_params(&join(prefix, "cbam"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.resample.visit_params_mut(&join(prefix, "resample"), f);
        self.csp.visit_params_mut(&join(prefix, "csp"), f);
        self.cbam.visit_params_mut(&join(prefix, "cbam"), f);
    }
}

/// Top-down then bottom-up path aggregation over the head levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Neck {
    /// `top_down[i]` produces level `i` from level `i+1`.
    pub top_down: Vec<Fusion>,
    /// `bottom_up[i]` produces level `i+1` from level `i`.
    pub bottom_up: Vec<Fusion>,
}

impl Neck {
    fn new(cfg: &DetectorConfig) -> Result<Self> {
        let widths: Vec<usize> = cfg.head_levels().map(|l| cfg.widths[l]).collect();
        let n = widths.len();
        let top_down = (0..n - 1).map(|i| Fusion::new(cfg, widths[i + 1], widths[i], 1, 1)).collect::<Result<_>>()?;
        let bottom_up = (0..n - 1).map(|i| Fusion::new(cfg, widths[i], widths[i + 1], 3, 2)).collect::<Result<_>>()?;
        Ok(Self { top_down, bottom_up })
    }

    fn forward(&self, levels: &[Tensor]) -> Result<Vec<Tensor>> {
        let n = levels.len();
        let mut td = levels.to_vec();
        for i in (0..n - 1).rev() {
            let step = &self.top_down[i];
            let up = upsample_nearest2x(&step.resample.forward(&td[i + 1])?)?;
            td[i] = step.fuse(&up, &levels[i])?;
        }
        let mut out = Vec::with_capacity(n);
        out.push(td[0].clone());
        for i in 0..n - 1 {
            let step = &self.bottom_up[i];
            let down = step.resample.forward(&out[i])?;
            out.push(step.fuse(&down, &td[i + 1])?);
        }
        Ok(out)
    }
}

impl Parameterized for Neck {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.top_down.visit_params(&join(prefix, "top_down"), f);
        self.bottom_up.visit_params(&join(prefix, "bottom_up"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.top_down.visit_params_mut(&join(prefix, "top_down"), f);
        self.bottom_up.visit_params_mut(&join(prefix, "bottom_up"), f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub transformer: StrBlockPair,
    pub predict: Conv2d,
}

impl Parameterized for Head {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.transformer.visit_params(&join(prefix, "transformer"), f);
        self.predict.visit_params(&join(prefix, "predict"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.transformer.visit_params_mut(&join(prefix, "transformer"), f);
        self.predict.visit_params_mut(&join(prefix, "predict"), f);
    }
}

/// One row of [`Detector::profile`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerProfile {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: usize,
    pub macs: u64,
    pub attention: Option<Complexity>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detector {
    pub config: DetectorConfig,
    pub backbone: Backbone,
    pub neck: Neck,
    pub heads: Vec<Head>,
}

impl Detector {
    /// Builds the graph with zero weights and identity normalization.
    pub fn build(config: &DetectorConfig) -> Result<Self> {
        config.validate()?;
        let heads = config
            .head_levels()
            .map(|l| {
                let c = config.widths[l];
                Ok(Head {
                    transformer: StrBlockPair::new(&config.attention(c))?,
                    predict: Conv2d::new(c, config.head_channels(), 1, 1, true),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { config: config.clone(), backbone: Backbone::new(config)?, neck: Neck::new(config)?, heads })
    }

    /// Built and filled uniformly from `[-scale, scale]`.
    pub fn with_random_weights(config: &DetectorConfig, seed: u64, scale: f32) -> Result<Self> {
        let mut d = Self::build(config)?;
        d.randomize(seed, scale);
        Ok(d)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let s = self.config.input_size;
        if image.shape() != [3, s, s] {
            return Err(Error::shape(format!("detector expects a 3×{s}×{s} image, got {:?}", image.shape())));
        }
        Ok(())
    }

    /// Head inputs after the transformer pair, before the prediction convolution.
    pub fn forward_features(&self, image: &Tensor) -> Result<Vec<Tensor>> {
        self.check_input(image)?;
        let levels = self.backbone.forward(image)?;
        let active: Vec<Tensor> = self.config.head_levels().map(|l| levels[l].clone()).collect();
        let fused = self.neck.forward(&active)?;
        fused.iter().zip(&self.heads).map(|(x, h)| h.transformer.forward_chw(x)).collect()
    }

    pub fn predict(&self, features: &[Tensor]) -> Result<Vec<HeadOutput>> {
        let strides = self.config.strides();
        features
            .iter()
            .zip(&self.heads)
            .enumerate()
            .map(|(scale, (x, h))| Ok(HeadOutput { scale, stride: strides[scale], tensor: h.predict.forward(x)? }))
            .collect()
    }

    pub fn forward(&self, image: &Tensor) -> Result<Vec<HeadOutput>> {
        self.predict(&self.forward_features(image)?)
    }

    /// Per-layer output shapes, parameter counts and multiply-accumulate estimates.
    pub fn profile(&self) -> Result<Vec<LayerProfile>> {
        let cfg = &self.config;
        let mut rows = Vec::new();
        let mut push = |name: String,
                        module: &dyn Parameterized,
                        shape: Vec<usize>,
                        macs: u64,
                        att: Option<Complexity>| {
            rows.push(LayerProfile { name, output_shape: shape, params: module.param_count(), macs, attention: att });
        };
        let s = cfg.input_size;
        let hw = |stride: usize| (s / stride, s / stride);

        let (h, w) = hw(2);
        push(
            "backbone.stem".into(),
            &self.backbone.stem,
            vec![cfg.stem_width, h, w],
            self.backbone.stem.conv.macs(s, s),
            None,
        );
        let mut prev_hw = (h, w);
        for (level, stage) in self.backbone.stages.iter().enumerate() {
            let (h, w) = hw(LEVEL_STRIDES[level]);
            let down = stage.down.conv.macs(prev_hw.0, prev_hw.1);
            let dense: u64 = stage.dense.layers.iter().map(|l| l.conv.macs(h, w)).sum();
            let csp: u64 =
                stage.csp.bottlenecks.iter().map(|b| b.reduce.conv.macs(h, w) + b.expand.conv.macs(h, w)).sum::<u64>()
                    + stage.csp.fuse.conv.macs(h, w);
            let p = format!("backbone.stages.{level}");
            push(format!("{p}.down"), &stage.down, vec![cfg.widths[level], h, w], down, None);
            push(format!("{p}.dense"), &stage.dense, vec![stage.dense.out_channels(), h, w], dense, None);
            push(format!("{p}.csp"), &stage.csp, vec![cfg.widths[level], h, w], csp, None);
            prev_hw = (h, w);
        }
        let spp = &self.backbone.spp;
        push(
            "backbone.spp".into(),
            spp,
            vec![cfg.widths[3], prev_hw.0, prev_hw.1],
            spp.fuse.conv.macs(prev_hw.0, prev_hw.1),
            None,
        );

        let levels: Vec<usize> = cfg.head_levels().collect();
        let fusion_macs = |f: &Fusion, in_hw: (usize, usize), out_hw: (usize, usize)| -> u64 {
            let (h, w) = out_hw;
            f.resample.conv.macs(in_hw.0, in_hw.1)
                + f.csp.bottlenecks.iter().map(|b| b.reduce.conv.macs(h, w) + b.expand.conv.macs(h, w)).sum::<u64>()
                + f.csp.fuse.conv.macs(h, w)
        };
        for (i, f) in self.neck.top_down.iter().enumerate().rev() {
            let (lo, hi) = (hw(LEVEL_STRIDES[levels[i]]), hw(LEVEL_STRIDES[levels[i + 1]]));
            push(
                format!("neck.top_down.{i}"),
                f,
                vec![cfg.widths[levels[i]], lo.0, lo.1],
                fusion_macs(f, hi, lo),
                None,
            );
        }
        for (i, f) in self.neck.bottom_up.iter().enumerate() {
            let (lo, hi) = (hw(LEVEL_STRIDES[levels[i]]), hw(LEVEL_STRIDES[levels[i + 1]]));
            push(
                format!("neck.bottom_up.{i}"),
                f,
                vec![cfg.widths[levels[i + 1]], hi.0, hi.1],
                fusion_macs(f, lo, hi),
                None,
            );
        }
        for (i, head) in self.heads.iter().enumerate() {
            let level = levels[i];
            let c = cfg.widths[level];
            let (h, w) = hw(LEVEL_STRIDES[level]);
            let cost = complexity(h, w, c, cfg.window)?;
            let mlp = 2 * (h * w * c * c * cfg.mlp_ratio) as u64;
            let str_macs = 2 * (u64::try_from(cost.w_msa).unwrap_or(u64::MAX) + mlp);
            push(format!("heads.{i}.transformer"), &head.transformer, vec![c, h, w], str_macs, Some(cost));
            push(
                format!("heads.{i}.predict"),
                &head.predict,
                vec![cfg.head_channels(), h, w],
                head.predict.macs(h, w),
                None,
            );
        }
        Ok(rows)
    }
}

impl Parameterized for Detector {
    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.backbone.visit_params(&join(prefix, "backbone"), f);
        self.neck.visit_params(&join(prefix, "neck"), f);
        self.heads.visit_params(&join(prefix, "heads"), f);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.backbone.visit_params_mut(&join(prefix, "backbone"), f);
        self.neck.visit_params_mut(&join(prefix, "neck"), f);
        self.heads.visit_params_mut(&join(prefix, "heads"), f);
    }
}
