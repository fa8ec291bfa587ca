use serde::{Deserialize, Serialize};

use super::config::DetectorConfig;
use super::network::HeadOutput;
use super::targets::{cell_logits, decode_box, Assignment, SIZE_LOGIT_CLAMP};
use crate::error::{Error, Result};
use crate::geometry::{ciou_gradient, ciou_loss};
use crate::tensor::{sigmoid, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    /// Mean CIoU loss over assignments.
    pub coord: f64,
    /// Mean class BCE over assignments and classes.
    pub cls: f64,
    /// Mean objectness BCE over every prediction slot.
    pub obj: f64,
}

/// Binary cross-entropy of `σ(x)` against `t`, without forming `σ(x)`.
pub fn bce_with_logits(x: f64, t: f64) -> f64 {
    x.max(0.0) - x * t + (-x.abs()).exp().ln_1p()
}

fn check(outputs: &[HeadOutput], assignments: &[Assignment], cfg: &DetectorConfig) -> Result<()> {
    let grids = cfg.grid_sizes();
    if outputs.len() != grids.len() {
        return Err(Error::shape(format!("expected {} head outputs, got {}", grids.len(), outputs.len())));
    }
    for (o, &g) in outputs.iter().zip(&grids) {
        if o.tensor.shape() != [cfg.head_channels(), g, g] {
            return Err(Error::shape(format!("head {} has shape {:?}", o.scale, o.tensor.shape())));
        }
    }
    for a in assignments {
        let bad = a.scale >= grids.len()
            || a.anchor >= cfg.anchors_per_scale()
            || a.gx >= grids[a.scale]
            || a.gy >= grids[a.scale]
            || a.class_id >= cfg.num_classes;
        if bad {
            return Err(Error::invalid(format!("assignment for ground truth {} is out of range", a.gt_index)));
        }
    }
    Ok(())
}

fn slot_index(cfg: &DetectorConfig, out: &HeadOutput, anchor: usize, channel: usize, gx: usize, gy: usize) -> usize {
    let s = out.grid();
    ((anchor * cfg.outputs_per_anchor() + channel) * s + gy) * s + gx
}

/// Loss terms, combined with the configured weights.
pub fn total_loss(outputs: &[HeadOutput], assignments: &[Assignment], cfg: &DetectorConfig) -> Result<LossBreakdown> {
    evaluate(outputs, assignments, cfg, false).map(|(l, _)| l)
}

/// Loss terms and `∂total/∂logit` for every head output.
///
/// The coordinate part follows the CIoU gradient (trade-off weight held
/// constant) through the decode; clamped size logits get zero gradient.
pub fn loss_and_gradient(
    outputs: &[HeadOutput],
    assignments: &[Assignment],
    cfg: &DetectorConfig,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    evaluate(outputs, assignments, cfg, true)
}

fn evaluate(
    outputs: &[HeadOutput],
    assignments: &[Assignment],
    cfg: &DetectorConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    check(outputs, assignments, cfg)?;
    let weights = cfg.loss_weights;
    let per_anchor = cfg.outputs_per_anchor();
    let k = cfg.num_classes;
    let anchors = cfg.head_anchors();
    let mut grads: Vec<Tensor> =
        if want_grad { outputs.iter().map(|o| Tensor::zeros(o.tensor.shape())).collect() } else { Vec::new() };

    // objectness targets
    let mut positive: Vec<Vec<bool>> =
        outputs.iter().map(|o| vec![false; cfg.anchors_per_scale() * o.grid() * o.grid()]).collect();
    for a in assignments {
        let s = outputs[a.scale].grid();
        positive[a.scale][(a.anchor * s + a.gy) * s + a.gx] = true;
    }
    let slots: usize = positive.iter().map(Vec::len).sum();
    let mut obj_sum = 0.0;
    for (scale, out) in outputs.iter().enumerate() {
        let s = out.grid();
        for anchor in 0..cfg.anchors_per_scale() {
            for gy in 0..s {
                for gx in 0..s {
                    let idx = slot_index(cfg, out, anchor, 4, gx, gy);
                    let x = out.tensor.data()[idx] as f64;
                    let t = if positive[scale][(anchor * s + gy) * s + gx] { 1.0 } else { 0.0 };
                    obj_sum += bce_with_logits(x, t);
                    if want_grad {
                        grads[scale].data_mut()[idx] = (weights.obj * (sigmoid(x) - t) / slots as f64) as f32;
                    }
                }
            }
        }
    }
    let obj = obj_sum / slots as f64;

    let n = assignments.len();
    let (mut coord_sum, mut cls_sum) = (0.0, 0.0);
    let mut buf = Vec::with_capacity(per_anchor);
    for a in assignments {
        let out = &outputs[a.scale];
        cell_logits(out, a.anchor, per_anchor, a.gx, a.gy, &mut buf);
        let t = [buf[0], buf[1], buf[2], buf[3]];
        let anchor = anchors[a.scale][a.anchor];
        let pred = decode_box(t, a.gx, a.gy, out.stride, anchor);
        coord_sum += ciou_loss(&pred, &a.target);
        for (c, &x) in buf[5..].iter().enumerate() {
            cls_sum += bce_with_logits(x, if c == a.class_id { 1.0 } else { 0.0 });
        }
        if want_grad {
            let g = ciou_gradient(&pred, &a.target);
            let stride = out.stride as f64;
            let d_center = |v: f64| sigmoid(v) * (1.0 - sigmoid(v)) * stride;
            let d_size = |v: f64, size: f64| if v.abs() < SIZE_LOGIT_CLAMP { size } else { 0.0 };
            let chain = [
                g[0] * d_center(t[0]),
                g[1] * d_center(t[1]),
                g[2] * d_size(t[2], pred.w),
                g[3] * d_size(t[3], pred.h),
            ];
            let grad = grads[a.scale].data_mut();
            for (j, d) in chain.iter().enumerate() {
                grad[slot_index(cfg, out, a.anchor, j, a.gx, a.gy)] += (weights.coord * d / n as f64) as f32;
            }
            for (c, &x) in buf[5..].iter().enumerate() {
                let target = if c == a.class_id { 1.0 } else { 0.0 };
                grad[slot_index(cfg, out, a.anchor, 5 + c, a.gx, a.gy)] +=
                    (weights.cls * (sigmoid(x) - target) / (n * k) as f64) as f32;
            }
        }
    }
    let (coord, cls) = if n == 0 { (0.0, 0.0) } else { (coord_sum / n as f64, cls_sum / (n * k) as f64) };
    let total = weights.coord * coord + weights.cls * cls + weights.obj * obj;
    Ok((LossBreakdown { total, coord, cls, obj }, grads))
}
