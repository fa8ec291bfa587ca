//! CBAM gating and shifted-window self-attention.
//!
//! CBAM operates on channel-major `C×H×W` maps. The window attention and the
//! transformer block pair operate on token-major `H×W×C` maps.

mod cbam;
mod window;

pub use cbam::{Cbam, ChannelAttention, SpatialAttention};
pub use window::{
    cyclic_shift, shifted_window_mask, window_partition, window_reverse, AttentionOutput, LayerNormParams, Linear,
    StrBlock, StrBlockPair, WindowAttention, WindowGrid,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub channels: usize,
    /// CBAM channel-MLP reduction ratio.
    pub reduction: usize,
    /// CBAM spatial convolution kernel.
    pub spatial_kernel: usize,
    pub window: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Scale attention logits by `1/√(C/heads)`.
    pub scale_logits: bool,
}

impl AttentionConfig {
    pub fn new(channels: usize) -> Self {
        Self { channels, reduction: 16, spatial_kernel: 7, window: 4, heads: 4, mlp_ratio: 4, scale_logits: true }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.channels == 0 {
            return fail("attention channels must be positive".into());
        }
        if self.reduction == 0 || !self.channels.is_multiple_of(self.reduction) {
            return fail(format!("channels {} not divisible by reduction ratio {}", self.channels, self.reduction));
        }
        if self.heads == 0 || !self.channels.is_multiple_of(self.heads) {
            return fail(format!("channels {} not divisible by head count {}", self.channels, self.heads));
        }
        if self.window == 0 {
            return fail("window size must be at least 1".into());
        }
        if self.spatial_kernel.is_multiple_of(2) {
            return fail(format!("spatial kernel must be odd, got {}", self.spatial_kernel));
        }
        if self.mlp_ratio == 0 {
            return fail("mlp expansion ratio must be positive".into());
        }
        Ok(())
    }
}

/// Operation counts of global and windowed self-attention over `h×w` tokens of width `c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub msa: u128,
    pub w_msa: u128,
}

impl Complexity {
    pub fn ratio(&self) -> f64 {
        self.msa as f64 / self.w_msa as f64
    }
}

/// `msa = 4·HW·C² + 2·(HW)²·C`, `w_msa = 4·HW·C² + 2·HW·m²·C`.
pub fn complexity(h: usize, w: usize, c: usize, m: usize) -> Result<Complexity> {
    if h == 0 || w == 0 || c == 0 || m == 0 {
        return Err(Error::invalid(format!("complexity needs positive arguments, got H={h} W={w} C={c} m={m}")));
    }
    let overflow = || Error::invalid("complexity overflows 128 bits");
    let (h, w, c, m) = (h as u128, w as u128, c as u128, m as u128);
    let hw = h * w;
    let projections = hw.checked_mul(c * c).and_then(|v| v.checked_mul(4)).ok_or_else(overflow)?;
    let global = hw.checked_mul(hw).and_then(|v| v.checked_mul(2 * c)).ok_or_else(overflow)?;
    let windowed = hw.checked_mul(m * m).and_then(|v| v.checked_mul(2 * c)).ok_or_else(overflow)?;
    Ok(Complexity {
        msa: projections.checked_add(global).ok_or_else(overflow)?,
        w_msa: projections.checked_add(windowed).ok_or_else(overflow)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complexity_examples() {
        assert_eq!(complexity(8, 8, 16, 4).unwrap(), Complexity { msa: 196608, w_msa: 98304 });
        let one = complexity(4, 4, 32, 4).unwrap();
        assert_eq!(one.msa, one.w_msa);
        assert!(complexity(0, 4, 4, 4).is_err());
        let huge = usize::MAX;
        assert!(complexity(huge, huge, huge, 1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AttentionConfig::new(64).validate().is_ok());
        assert!(AttentionConfig::new(24).validate().is_err());
        let mut cfg = AttentionConfig::new(32);
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
        cfg.heads = 4;
        cfg.window = 0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn windowed_cost_never_exceeds_global(h in 1usize..200, w in 1usize..200, c in 1usize..512, m in 1usize..16) {
            let k = complexity(h, w, c, m).unwrap();
            if m * m <= h * w {
                prop_assert!(k.w_msa <= k.msa);
            }
        }

        #[test]
        fn windowed_attention_term_is_linear_in_tokens(h in 1usize..200, w in 1usize..200, c in 1usize..512, m in 1usize..16) {
            let base = complexity(h, w, c, m).unwrap();
            let doubled = complexity(2 * h, w, c, m).unwrap();
            let shared = |h: usize| 4 * (h * w) as u128 * (c * c) as u128;
            let term = |h: usize| 2 * (h * w) as u128 * (m * m) as u128 * c as u128;
            prop_assert_eq!(term(2 * h), 2 * term(h));
            prop_assert_eq!(doubled.w_msa - shared(2 * h), 2 * (base.w_msa - shared(h)));
        }
    }
}
