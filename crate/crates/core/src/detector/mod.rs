//! Dense-CSP backbone with SPP, path-aggregation neck with CBAM after every
//! fusion, and prediction heads that run a shifted-window transformer pair
//! before a 1×1 output convolution. Four heads at strides 4/8/16/32 by default;
//! the stride-4 head can be switched off.
//!
//! Head outputs are raw logits. [`decode`] turns them into boxes,
//! [`assign_targets`] and [`total_loss`] go the other way.

mod anchors;
mod config;
mod fit;
mod loss;
mod network;
mod targets;
mod weights;

pub use anchors::{fit_level_anchors, kmeans_anchors, shape_iou};
pub use config::{DetectorConfig, LossWeights, FALLBACK_ANCHORS, LEVEL_STRIDES};
pub use fit::{descend_logits, fit_heads};
pub use loss::{bce_with_logits, loss_and_gradient, total_loss, LossBreakdown};
pub use network::{Backbone, Detector, Fusion, Head, HeadOutput, LayerProfile, Neck, Stage};
pub use targets::{assign_targets, decode, decode_box, encode_box, Assignment, SIZE_LOGIT_CLAMP};
pub use weights::{load_weights, read_sections, save_weights, DW1_MAGIC};

use crate::error::Result;
use crate::geometry::{nms, Detection};
use crate::tensor::Tensor;

/// Forward, decode, per-class suppression.
pub fn detect(detector: &Detector, image: &Tensor, score_threshold: f64, nms_threshold: f64) -> Result<Vec<Detection>> {
    let outputs = detector.forward(image)?;
    Ok(nms(&decode(&outputs, &detector.config, score_threshold)?, nms_threshold))
}

/// Zero logits shaped like the heads of `cfg`.
pub fn zero_outputs(cfg: &DetectorConfig) -> Vec<HeadOutput> {
    cfg.strides()
        .iter()
        .zip(cfg.grid_sizes())
        .enumerate()
        .map(|(scale, (&stride, g))| HeadOutput { scale, stride, tensor: Tensor::zeros(&[cfg.head_channels(), g, g]) })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{iou, BBox};
    use crate::metrics::GroundTruth;
    use crate::params::Parameterized;

    #[test]
    fn tiny_forward_shapes_and_determinism() {
        let cfg = DetectorConfig::tiny();
        let d = Detector::with_random_weights(&cfg, 3, 0.1).unwrap();
        let image = Tensor::zeros(&[3, 192, 192]);
        let a = d.forward(&image).unwrap();
        let shapes: Vec<Vec<usize>> = a.iter().map(|o| o.tensor.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![39, 48, 48], vec![39, 24, 24], vec![39, 12, 12], vec![39, 6, 6]]);
        assert!(a.iter().all(|o| o.tensor.is_finite()));
        assert_eq!(a, d.forward(&image).unwrap());
        assert!(d.forward(&Tensor::zeros(&[3, 191, 192])).is_err());

        let no_adh = DetectorConfig { additional_head: false, ..cfg };
        let d = Detector::with_random_weights(&no_adh, 3, 0.1).unwrap();
        let grids: Vec<usize> = d.forward(&image).unwrap().iter().map(HeadOutput::grid).collect();
        assert_eq!(grids, vec![24, 12, 6]);
    }

    #[test]
    fn parameter_names_are_unique_and_profile_adds_up() {
        let d = Detector::build(&DetectorConfig::tiny()).unwrap();
        let names: Vec<String> = d.named_params("").into_iter().map(|(n, _)| n).collect();
        let unique: std::collections::HashSet<&String> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        let rows = d.profile().unwrap();
        assert_eq!(rows.iter().map(|r| r.params).sum::<usize>(), d.param_count());
    }

    #[test]
    fn fitted_heads_find_the_box() {
        let cfg = DetectorConfig::tiny();
        let mut d = Detector::build(&cfg).unwrap();
        d.init_fan_in(11);
        let mut image = Tensor::full(&[3, 192, 192], 0.1);
        let gt = BBox::from_corners(60.0, 70.0, 110.0, 105.0);
        for c in 0..3 {
            for y in 70..105 {
                for x in 60..110 {
                    image.data_mut()[(c * 192 + y) * 192 + x] = 0.9;
                }
            }
        }
        let trace = fit_heads(&mut d, &image, &[GroundTruth::new(gt, 2)], 0.01, 400).unwrap();
        assert!(trace.last().unwrap().total < trace[0].total);
        let dets = detect(&d, &image, 0.25, 0.5).unwrap();
        assert!(dets.iter().any(|det| det.class_id == 2 && iou(&det.bbox, &gt) >= 0.5), "{dets:?}");
    }
}
