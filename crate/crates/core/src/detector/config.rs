use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::error::{Error, Result};
use crate::tensor::Activation;

/// Strides of the four backbone levels; the stride-4 level feeds the additional head.
pub const LEVEL_STRIDES: [usize; 4] = [4, 8, 16, 32];

/// Anchor shapes `(w, h)` in input pixels, three per level, finest first.
pub const FALLBACK_ANCHORS: [[(f64, f64); 3]; 4] = [
    [(5.0, 6.0), (8.0, 14.0), (15.0, 11.0)],
    [(10.0, 13.0), (16.0, 30.0), (33.0, 23.0)],
    [(30.0, 61.0), (62.0, 45.0), (59.0, 119.0)],
    [(116.0, 90.0), (156.0, 198.0), (373.0, 326.0)],
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub coord: f64,
    pub cls: f64,
    pub obj: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { coord: 1.0, cls: 1.0, obj: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Square input side in pixels.
    pub input_size: usize,
    pub num_classes: usize,
    /// Predict from the stride-4 level as well as strides 8/16/32.
    pub additional_head: bool,
    /// Per level, finest first; always four levels, the first is unused without the additional head.
    pub anchors: Vec<Vec<(f64, f64)>>,
    pub stem_width: usize,
    /// Output channels of the four backbone levels.
    pub widths: [usize; 4],
    pub dense_layers: [usize; 4],
    pub dense_growth: [usize; 4],
    pub csp_depths: [usize; 4],
    pub neck_depth: usize,
    pub spp_kernels: Vec<usize>,
    pub activation: Activation,
    pub cbam_reduction: usize,
    pub window: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub scale_logits: bool,
    pub loss_weights: LossWeights,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            input_size: 416,
            num_classes: 8,
            additional_head: true,
            anchors: FALLBACK_ANCHORS.iter().map(|l| l.to_vec()).collect(),
            stem_width: 16,
            widths: [32, 64, 128, 256],
            dense_layers: [4; 4],
            dense_growth: [16; 4],
            csp_depths: [3, 6, 6, 3],
            neck_depth: 1,
            spp_kernels: vec![5, 9, 13],
            activation: Activation::Silu,
            cbam_reduction: 16,
            window: 4,
            heads: 4,
            mlp_ratio: 4,
            scale_logits: true,
            loss_weights: LossWeights::default(),
        }
    }
}

impl DetectorConfig {
    /// Narrow, shallow variant for fast end-to-end runs.
    pub fn tiny() -> Self {
        Self {
            input_size: 192,
            stem_width: 8,
            widths: [8, 16, 32, 64],
            dense_layers: [2; 4],
            dense_growth: [8; 4],
            csp_depths: [1, 2, 2, 1],
            cbam_reduction: 4,
            heads: 2,
            mlp_ratio: 2,
            ..Self::default()
        }
    }

    /// Levels that carry a prediction head.
    pub fn head_levels(&self) -> std::ops::Range<usize> {
        if self.additional_head {
            0..4
        } else {
            1..4
        }
    }

    pub fn strides(&self) -> Vec<usize> {
        self.head_levels().map(|l| LEVEL_STRIDES[l]).collect()
    }

    pub fn grid_sizes(&self) -> Vec<usize> {
        self.strides().iter().map(|s| self.input_size / s).collect()
    }

    /// Anchors of each head, aligned with [`DetectorConfig::strides`].
    pub fn head_anchors(&self) -> Vec<&[(f64, f64)]> {
        self.head_levels().map(|l| self.anchors[l].as_slice()).collect()
    }

    pub fn anchors_per_scale(&self) -> usize {
        self.anchors.first().map_or(0, Vec::len)
    }

    pub fn outputs_per_anchor(&self) -> usize {
        5 + self.num_classes
    }

    pub fn head_channels(&self) -> usize {
        self.anchors_per_scale() * self.outputs_per_anchor()
    }

    pub fn attention(&self, channels: usize) -> AttentionConfig {
        AttentionConfig {
            channels,
            reduction: self.cbam_reduction,
            spatial_kernel: 7,
            window: self.window,
            heads: self.heads,
            mlp_ratio: self.mlp_ratio,
            scale_logits: self.scale_logits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_classes == 0 {
            return fail("class count must be at least 1".into());
        }
        if self.input_size == 0 {
            return fail("input size must be positive".into());
        }
        for &stride in &LEVEL_STRIDES {
            if !self.input_size.is_multiple_of(stride) {
                return fail(format!("input size {} is not divisible by stride {stride}", self.input_size));
            }
        }
        if self.anchors.len() != 4 {
            return fail(format!("expected anchors for 4 levels, got {}", self.anchors.len()));
        }
        let b = self.anchors_per_scale();
        if b == 0 || self.anchors.iter().any(|l| l.len() != b) {
            return fail("every level needs the same positive number of anchors".into());
        }
        if let Some((w, h)) =
            self.anchors.iter().flatten().find(|(w, h)| !(w.is_finite() && *w > 0.0 && h.is_finite() && *h > 0.0))
        {
            return fail(format!("anchor ({w}, {h}) must be positive"));
        }
        if self.stem_width == 0 || self.widths.iter().any(|&w| w == 0 || w % 2 != 0) {
            return fail(format!("level widths must be positive and even, got {:?}", self.widths));
        }
        for (level, (&w, (&n, &g))) in
            self.widths.iter().zip(self.dense_layers.iter().zip(&self.dense_growth)).enumerate()
        {
            if n == 0 || g == 0 || (w + n * g) % 2 != 0 {
                return fail(format!("level {level}: dense output {w}+{n}·{g} must be positive and even"));
            }
        }
        let p5 = self.input_size / LEVEL_STRIDES[3];
        let need = self.spp_kernels.iter().max().copied().unwrap_or(1) / 2;
        if p5 < need {
            return fail(format!("input size {} leaves a {p5}×{p5} stride-32 map; SPP needs {need}", self.input_size));
        }
        for l in self.head_levels() {
            self.attention(self.widths[l]).validate()?;
        }
        Ok(())
    }
}
