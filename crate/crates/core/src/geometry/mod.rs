//! Axis-aligned box algebra: the IoU family, the CIoU regression loss with its
//! analytic gradient, grid confidence and greedy per-class NMS.

mod records;

pub use records::{read_detections, write_detections_jsonl, write_detections_tsv, DetectionRecord, TSV_HEADER};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Center/extent box. Units are whatever the caller uses, consistently per call.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        debug_assert!(w > 0.0 && h > 0.0, "box extents must be positive: {w}×{h}");
        Self { cx, cy, w, h }
    }

    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.cx + self.w / 2.0, self.cy + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_array(v: &[f64]) -> Self {
        Self { cx: v[0], cy: v[1], w: v[2], h: v[3] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: usize, score: f64) -> Self {
        Self { bbox, class_id, score }
    }
}

/// Area from the corner form, so that an identical pair has intersection == union bit for bit.
fn corner_area(b: &BBox) -> f64 {
    let (x1, y1, x2, y2) = b.corners();
    (x2 - x1) * (y2 - y1)
}

fn intersection(a: &BBox, b: &BBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    iw * ih
}

/// Width and height of the smallest box enclosing both.
fn enclosing(a: &BBox, b: &BBox) -> (f64, f64) {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    (ax2.max(bx2) - ax1.min(bx1), ay2.max(by2) - ay1.min(by1))
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection(a, b);
    let union = corner_area(a) + corner_area(b) - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// IoU minus the fraction of the enclosing box not covered by the union.
pub fn giou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection(a, b);
    let union = corner_area(a) + corner_area(b) - inter;
    let (cw, ch) = enclosing(a, b);
    let hull = cw * ch;
    inter / union - (hull - union) / hull
}

fn center_distance_sq(a: &BBox, b: &BBox) -> f64 {
    (a.cx - b.cx).powi(2) + (a.cy - b.cy).powi(2)
}

/// IoU minus squared center distance over squared enclosing diagonal.
pub fn diou(a: &BBox, b: &BBox) -> f64 {
    let (cw, ch) = enclosing(a, b);
    iou(a, b) - center_distance_sq(a, b) / (cw * cw + ch * ch)
}

/// `ξ = (4/π²)·(atan(w_gt/h_gt) − atan(w_p/h_p))²`, in `[0, 1)`.
pub fn aspect_consistency(pred: &BBox, gt: &BBox) -> f64 {
    let delta = (gt.w / gt.h).atan() - (pred.w / pred.h).atan();
    4.0 / (PI * PI) * delta * delta
}

/// The pieces of the CIoU loss for one pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CiouTerms {
    pub iou: f64,
    /// Aspect consistency `ξ`.
    pub aspect: f64,
    /// Trade-off `β = ξ / ((1 − IoU) + ξ)`, zero when both parts vanish.
    pub tradeoff: f64,
    pub center_distance_sq: f64,
    pub enclosing_diagonal_sq: f64,
}

impl CiouTerms {
    pub fn new(pred: &BBox, gt: &BBox) -> Self {
        let iou = iou(pred, gt);
        let aspect = aspect_consistency(pred, gt);
        let denom = (1.0 - iou) + aspect;
        let tradeoff = if denom > 0.0 { aspect / denom } else { 0.0 };
        let (cw, ch) = enclosing(pred, gt);
        Self {
            iou,
            aspect,
            tradeoff,
            center_distance_sq: center_distance_sq(pred, gt),
            enclosing_diagonal_sq: cw * cw + ch * ch,
        }
    }

    /// `1 + βξ + ρ²/η² − IoU`.
    pub fn loss(&self) -> f64 {
        self.loss_with_tradeoff(self.tradeoff)
    }

    fn loss_with_tradeoff(&self, tradeoff: f64) -> f64 {
        1.0 + tradeoff * self.aspect + self.center_distance_sq / self.enclosing_diagonal_sq - self.iou
    }
}

pub fn ciou_loss(pred: &BBox, gt: &BBox) -> f64 {
    CiouTerms::new(pred, gt).loss()
}

/// CIoU loss with the trade-off weight `β` supplied instead of computed.
///
/// Holding `β` fixed is the function whose derivative [`ciou_gradient`] returns.
pub fn ciou_loss_with_tradeoff(pred: &BBox, gt: &BBox, tradeoff: f64) -> f64 {
    CiouTerms::new(pred, gt).loss_with_tradeoff(tradeoff)
}

/// Analytic `∂L/∂(cx, cy, w, h)` of the CIoU loss with respect to the prediction,
/// treating `β` as a constant.
///
/// Where a prediction edge coincides with a ground-truth edge the min/max picks
/// the ground-truth edge, so that edge contributes nothing. For `pred == gt` this
/// gives `(0, 0, 1/w, 1/h)`, the derivative for growing the prediction.
pub fn ciou_gradient(pred: &BBox, gt: &BBox) -> [f64; 4] {
    let terms = CiouTerms::new(pred, gt);
    let (px1, py1, px2, py2) = pred.corners();
    let (gx1, gy1, gx2, gy2) = gt.corners();

    // Intersection, as derivatives w.r.t. the four prediction edges.
    let iw = px2.min(gx2) - px1.max(gx1);
    let ih = py2.min(gy2) - py1.max(gy1);
    let overlapping = iw > 0.0 && ih > 0.0;
    let inter = if overlapping { iw * ih } else { 0.0 };
    let (d_inter_x1, d_inter_x2, d_inter_y1, d_inter_y2) = if overlapping {
        (
            if px1 > gx1 { -ih } else { 0.0 },
            if px2 < gx2 { ih } else { 0.0 },
            if py1 > gy1 { -iw } else { 0.0 },
            if py2 < gy2 { iw } else { 0.0 },
        )
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    let edge_to_center = |d1: f64, d2: f64| (d1 + d2, (d2 - d1) / 2.0);
    let (di_cx, di_w) = edge_to_center(d_inter_x1, d_inter_x2);
    let (di_cy, di_h) = edge_to_center(d_inter_y1, d_inter_y2);
    let d_inter = [di_cx, di_cy, di_w, di_h];
    let d_area_pred = [0.0, 0.0, py2 - py1, px2 - px1];

    let union = corner_area(pred) + corner_area(gt) - inter;
    let d_iou: Vec<f64> = (0..4)
        .map(|k| {
            let d_union = d_area_pred[k] - d_inter[k];
            (d_inter[k] * union - inter * d_union) / (union * union)
        })
        .collect();

    // Enclosing diagonal.
    let cw = px2.max(gx2) - px1.min(gx1);
    let ch = py2.max(gy2) - py1.min(gy1);
    let d_cw_x1 = if px1 < gx1 { -1.0 } else { 0.0 };
    let d_cw_x2 = if px2 > gx2 { 1.0 } else { 0.0 };
    let d_ch_y1 = if py1 < gy1 { -1.0 } else { 0.0 };
    let d_ch_y2 = if py2 > gy2 { 1.0 } else { 0.0 };
    let (dcw_cx, dcw_w) = edge_to_center(d_cw_x1, d_cw_x2);
    let (dch_cy, dch_h) = edge_to_center(d_ch_y1, d_ch_y2);
    let d_diag = [2.0 * cw * dcw_cx, 2.0 * ch * dch_cy, 2.0 * cw * dcw_w, 2.0 * ch * dch_h];

    let rho2 = terms.center_distance_sq;
    let eta2 = terms.enclosing_diagonal_sq;
    let d_rho = [2.0 * (pred.cx - gt.cx), 2.0 * (pred.cy - gt.cy), 0.0, 0.0];

    let delta = (gt.w / gt.h).atan() - (pred.w / pred.h).atan();
    let norm = pred.w * pred.w + pred.h * pred.h;
    let k = 8.0 / (PI * PI) * delta;
    let d_aspect = [0.0, 0.0, -k * pred.h / norm, k * pred.w / norm];

    let mut grad = [0.0; 4];
    for i in 0..4 {
        let d_dist = (d_rho[i] * eta2 - rho2 * d_diag[i]) / (eta2 * eta2);
        grad[i] = -d_iou[i] + d_dist + terms.tradeoff * d_aspect[i];
    }
    grad
}

/// Grid confidence `Pr(obj)·IoU` with `Pr(obj) ∈ {0, 1}`.
pub fn confidence(pr_obj: u8, iou: f64) -> Result<f64> {
    match pr_obj {
        0 => Ok(0.0),
        1 => Ok(iou),
        other => Err(Error::invalid(format!("objectness indicator must be 0 or 1, got {other}"))),
    }
}

/// Greedy per-class non-maximum suppression.
///
/// Detections are visited by descending score (ties: smaller class id, then input
/// order). A detection is kept when its IoU with every already-kept detection of
/// the same class is at most `iou_threshold`. Output is in keep order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut kept: Vec<Detection> = Vec::new();
    for i in score_order(dets) {
        let d = &dets[i];
        let suppressed = kept.iter().any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(*d);
        }
    }
    kept
}

/// Indices sorted by descending score, then ascending class id, then index.
pub fn score_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b].score.total_cmp(&dets[a].score).then(dets[a].class_id.cmp(&dets[b].class_id)).then(a.cmp(&b))
    });
    order
}
