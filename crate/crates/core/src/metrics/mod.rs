//! Detection evaluation: greedy TP/FP matching, precision/recall/F1, all-point
//! interpolated AP, IoU-threshold sweeps, size-stratified AP and mAP.
//!
//! Conventions:
//! * A zero denominator in precision, recall or F1 yields 0.
//! * Detections with equal scores form one group in the precision/recall sweep;
//!   a curve point is emitted only after the whole group, so AP depends on the
//!   score ranking alone.
//! * AP integrates the precision envelope (made non-increasing from the right)
//!   over recall.
//! * Size buckets follow the COCO edges: small `< 32²`, medium `< 96²`, large
//!   otherwise. Each bucket keeps only the ground truths and the detections whose
//!   own area falls in it; the rest are ignored rather than penalized.

mod report;

pub use report::{pr_curve_csv, ClassMetrics, MetricsReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Detection};

/// IoU thresholds 0.50, 0.55, …, 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const MEDIUM_AREA: f64 = 96.0 * 96.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: usize,
}

impl GroundTruth {
    pub fn new(bbox: BBox, class_id: usize) -> Self {
        Self { bbox, class_id }
    }
}

/// Detections and ground truths of one image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImageEval {
    pub image_id: String,
    pub detections: Vec<Detection>,
    pub ground_truths: Vec<GroundTruth>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    TruePositive,
    FalsePositive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// One label per detection, in input order.
    pub labels: Vec<Label>,
    /// Ground-truth index claimed by each detection.
    pub assigned: Vec<Option<usize>>,
    /// Per ground truth; unmatched ones are false negatives.
    pub gt_matched: Vec<bool>,
    pub iou_threshold: f64,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::TruePositive).count()
    }

    pub fn false_positives(&self) -> usize {
        self.labels.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.gt_matched.iter().filter(|&&m| !m).count()
    }
}

/// Greedy matching of one image.
///
/// Detections are visited by descending score (ties: input order). Each claims
/// the still-unmatched ground truth of its class with the highest IoU, provided
/// that IoU is at least `iou_threshold`; IoU ties go to the lower index.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut gt_matched = vec![false; gts.len()];
    let mut labels = vec![Label::FalsePositive; dets.len()];
    let mut assigned = vec![None; dets.len()];
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_matched[g] || gt.class_id != d.class_id {
                continue;
            }
            let v = iou(&d.bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            gt_matched[g] = true;
            labels[i] = Label::TruePositive;
            assigned[i] = Some(g);
        }
    }
    MatchResult { labels, assigned, gt_matched, iou_threshold }
}

pub fn precision(tp: usize, fp: usize) -> f64 {
    ratio(tp, tp + fp)
}

pub fn recall(tp: usize, fn_count: usize) -> f64 {
    ratio(tp, tp + fn_count)
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
    /// Lowest score included at this point.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub class_id: usize,
    pub iou_threshold: f64,
    pub num_ground_truths: usize,
    pub points: Vec<PrPoint>,
    pub ap: f64,
}

impl PrCurve {
    /// No ground truths of this class: AP is reported as 0 but carries no information.
    pub fn is_degenerate(&self) -> bool {
        self.num_ground_truths == 0
    }
}

/// Scored TP/FP outcomes of one class across all images, plus the ground-truth count.
fn class_outcomes(images: &[ImageEval], class_id: usize, iou_threshold: f64) -> (Vec<(f64, bool)>, usize) {
    let mut outcomes = Vec::new();
    let mut n_gt = 0;
    for img in images {
        let dets: Vec<Detection> = img.detections.iter().filter(|d| d.class_id == class_id).copied().collect();
        let gts: Vec<GroundTruth> = img.ground_truths.iter().filter(|g| g.class_id == class_id).copied().collect();
        n_gt += gts.len();
        let m = match_detections(&dets, &gts, iou_threshold);
        outcomes.extend(dets.iter().zip(&m.labels).map(|(d, &l)| (d.score, l == Label::TruePositive)));
    }
    (outcomes, n_gt)
}

/// Precision/recall sweep and all-point interpolated AP for one class.
pub fn average_precision(images: &[ImageEval], class_id: usize, iou_threshold: f64) -> PrCurve {
    let (mut outcomes, n_gt) = class_outcomes(images, class_id, iou_threshold);
    outcomes.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < outcomes.len() {
        let score = outcomes[i].0;
        while i < outcomes.len() && outcomes[i].0 == score {
            if outcomes[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint { recall: ratio(tp, n_gt), precision: precision(tp, fp), score });
    }
    let ap = if n_gt == 0 { 0.0 } else { envelope_area(&points) };
    PrCurve { class_id, iou_threshold, num_ground_truths: n_gt, points, ap }
}

fn envelope_area(points: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (p, env) in points.iter().zip(envelope) {
        area += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    area
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApSweep {
    /// AP at each of [`coco_thresholds`].
    pub per_threshold: [f64; 10],
    pub ap50: f64,
    pub ap75: f64,
    pub ap50_95: f64,
}

pub fn ap_sweep(images: &[ImageEval], class_id: usize) -> ApSweep {
    let per_threshold = coco_thresholds().map(|t| average_precision(images, class_id, t).ap);
    ApSweep {
        per_threshold,
        ap50: per_threshold[0],
        ap75: per_threshold[5],
        ap50_95: per_threshold.iter().sum::<f64>() / per_threshold.len() as f64,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 3] = [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large];

    pub fn of(bbox: &BBox) -> Self {
        let area = bbox.area();
        if area < SMALL_AREA {
            SizeBucket::Small
        } else if area < MEDIUM_AREA {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

/// Images reduced to the ground truths and detections of one size bucket.
pub fn bucket_subset(images: &[ImageEval], bucket: SizeBucket) -> Vec<ImageEval> {
    images
        .iter()
        .map(|img| ImageEval {
            image_id: img.image_id.clone(),
            detections: img.detections.iter().filter(|d| SizeBucket::of(&d.bbox) == bucket).copied().collect(),
            ground_truths: img.ground_truths.iter().filter(|g| SizeBucket::of(&g.bbox) == bucket).copied().collect(),
        })
        .collect()
}

/// AP50:95 per size bucket; `None` where the bucket has no ground truth of the class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SizeAp {
    pub small: Option<f64>,
    pub medium: Option<f64>,
    pub large: Option<f64>,
}

pub fn size_stratified_ap(images: &[ImageEval], class_id: usize) -> SizeAp {
    let per_bucket = |bucket| {
        let subset = bucket_subset(images, bucket);
        let has_gt = subset.iter().any(|img| img.ground_truths.iter().any(|g| g.class_id == class_id));
        has_gt.then(|| ap_sweep(&subset, class_id).ap50_95)
    };
    SizeAp {
        small: per_bucket(SizeBucket::Small),
        medium: per_bucket(SizeBucket::Medium),
        large: per_bucket(SizeBucket::Large),
    }
}

/// Arithmetic mean of per-class APs.
pub fn mean_ap(per_class: &[f64]) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::invalid("mean AP of an empty class list"));
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}
