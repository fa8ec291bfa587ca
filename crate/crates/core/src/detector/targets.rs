use serde::{Deserialize, Serialize};

use super::config::DetectorConfig;
use super::network::HeadOutput;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Detection};
use crate::metrics::GroundTruth;
use crate::tensor::sigmoid;

/// Bound on `tw`, `th` before exponentiation.
pub const SIZE_LOGIT_CLAMP: f64 = 4.0;

/// Box described by the four regression logits at one cell and anchor.
pub fn decode_box(t: [f64; 4], gx: usize, gy: usize, stride: usize, anchor: (f64, f64)) -> BBox {
    let s = stride as f64;
    BBox {
        cx: (gx as f64 + sigmoid(t[0])) * s,
        cy: (gy as f64 + sigmoid(t[1])) * s,
        w: anchor.0 * t[2].clamp(-SIZE_LOGIT_CLAMP, SIZE_LOGIT_CLAMP).exp(),
        h: anchor.1 * t[3].clamp(-SIZE_LOGIT_CLAMP, SIZE_LOGIT_CLAMP).exp(),
    }
}

/// Inverse of [`decode_box`] for a box whose center lies in cell `(gx, gy)`.
pub fn encode_box(b: &BBox, gx: usize, gy: usize, stride: usize, anchor: (f64, f64)) -> [f64; 4] {
    let s = stride as f64;
    let logit = |p: f64| (p / (1.0 - p)).ln();
    [logit(b.cx / s - gx as f64), logit(b.cy / s - gy as f64), (b.w / anchor.0).ln(), (b.h / anchor.1).ln()]
}

/// Reads `(tx, ty, tw, th, obj, cls…)` for one anchor and cell.
pub(crate) fn cell_logits(
    out: &HeadOutput,
    anchor: usize,
    per_anchor: usize,
    gx: usize,
    gy: usize,
    buf: &mut Vec<f64>,
) {
    let s = out.grid();
    let plane = s * s;
    buf.clear();
    buf.extend((0..per_anchor).map(|j| out.tensor.data()[(anchor * per_anchor + j) * plane + gy * s + gx] as f64));
}

fn check_outputs(outputs: &[HeadOutput], cfg: &DetectorConfig) -> Result<()> {
    let grids = cfg.grid_sizes();
    if outputs.len() != grids.len() {
        return Err(Error::shape(format!("expected {} head outputs, got {}", grids.len(), outputs.len())));
    }
    for (o, &g) in outputs.iter().zip(&grids) {
        if o.tensor.shape() != [cfg.head_channels(), g, g] {
            return Err(Error::shape(format!(
                "head {} output {:?}, expected [{}, {g}, {g}]",
                o.scale,
                o.tensor.shape(),
                cfg.head_channels()
            )));
        }
    }
    Ok(())
}

/// Every cell and anchor scoring at least `score_threshold`, before suppression.
///
/// The score is `σ(obj)·max σ(cls)`; the class is the first maximizing index.
pub fn decode(outputs: &[HeadOutput], cfg: &DetectorConfig, score_threshold: f64) -> Result<Vec<Detection>> {
    check_outputs(outputs, cfg)?;
    let per_anchor = cfg.outputs_per_anchor();
    let anchors = cfg.head_anchors();
    let mut dets = Vec::new();
    let mut buf = Vec::with_capacity(per_anchor);
    for (out, anchors) in outputs.iter().zip(anchors) {
        let s = out.grid();
        for (a, &anchor) in anchors.iter().enumerate() {
            for gy in 0..s {
                for gx in 0..s {
                    cell_logits(out, a, per_anchor, gx, gy, &mut buf);
                    let (mut class_id, mut best) = (0, f64::NEG_INFINITY);
                    for (k, &v) in buf[5..].iter().enumerate() {
                        if v > best {
                            (class_id, best) = (k, v);
                        }
                    }
                    let score = sigmoid(buf[4]) * sigmoid(best);
                    if score >= score_threshold {
                        let bbox = decode_box([buf[0], buf[1], buf[2], buf[3]], gx, gy, out.stride, anchor);
                        dets.push(Detection::new(bbox, class_id, score));
                    }
                }
            }
        }
    }
    Ok(dets)
}

/// The prediction slot responsible for one ground-truth box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub gt_index: usize,
    pub scale: usize,
    pub anchor: usize,
    pub gx: usize,
    pub gy: usize,
    pub target: BBox,
    pub class_id: usize,
}

/// Best anchor shape over all heads (ties to the smaller head, then anchor),
/// in the cell containing the box center.
pub fn assign_targets(gts: &[GroundTruth], cfg: &DetectorConfig) -> Result<Vec<Assignment>> {
    let strides = cfg.strides();
    let anchors = cfg.head_anchors();
    let size = cfg.input_size as f64;
    let mut out = Vec::with_capacity(gts.len());
    for (i, gt) in gts.iter().enumerate() {
        let b = gt.bbox;
        if !(b.is_valid() && b.w > 1.0 && b.h > 1.0) {
            return Err(Error::invalid(format!("ground truth {i} is degenerate (w={}, h={})", b.w, b.h)));
        }
        if !(0.0..=size).contains(&b.cx) || !(0.0..=size).contains(&b.cy) {
            return Err(Error::invalid(format!("ground truth {i} center ({}, {}) lies outside the image", b.cx, b.cy)));
        }
        if gt.class_id >= cfg.num_classes {
            return Err(Error::invalid(format!("ground truth {i} has class {} of {}", gt.class_id, cfg.num_classes)));
        }
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (scale, list) in anchors.iter().enumerate() {
            for (a, &(aw, ah)) in list.iter().enumerate() {
                let v = iou(&b, &BBox::new(b.cx, b.cy, aw, ah));
                if v > best.0 {
                    best = (v, scale, a);
                }
            }
        }
        let (_, scale, anchor) = best;
        let stride = strides[scale] as f64;
        let last = cfg.input_size / strides[scale] - 1;
        let cell = |c: f64| ((c / stride).floor() as usize).min(last);
        out.push(Assignment {
            gt_index: i,
            scale,
            anchor,
            gx: cell(b.cx),
            gy: cell(b.cy),
            target: b,
            class_id: gt.class_id,
        });
    }
    Ok(out)
}
