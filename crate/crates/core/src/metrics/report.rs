use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    ap_sweep, average_precision, f1, match_detections, mean_ap, precision, recall, size_stratified_ap, ImageEval,
    PrCurve,
};
use crate::error::{Error, Result};
use crate::geometry::Detection;

/// IoU threshold of the operating point and of the headline AP.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub name: String,
    pub ground_truths: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ap50_95: f64,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

/// Per-class and aggregate detection metrics.
///
/// P, R and F1 are taken at one operating point: detections scoring at least
/// `score_threshold`, matched at IoU 0.5. AP values use every detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub score_threshold: f64,
    pub iou_threshold: f64,
    pub images: usize,
    pub classes: Vec<ClassMetrics>,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean AP50 over classes that have ground truth.
    pub map50: f64,
    pub map50_95: f64,
    #[serde(skip)]
    pub curves: Vec<PrCurve>,
}

impl MetricsReport {
    pub fn evaluate(images: &[ImageEval], class_names: &[&str], score_threshold: f64) -> Result<Self> {
        let total_gt: usize = images.iter().map(|i| i.ground_truths.len()).sum();
        if total_gt == 0 {
            return Err(Error::invalid("evaluation needs at least one ground-truth box"));
        }
        if let Some(bad) = images
            .iter()
            .flat_map(|i| i.ground_truths.iter().map(|g| g.class_id).chain(i.detections.iter().map(|d| d.class_id)))
            .find(|&c| c >= class_names.len())
        {
            return Err(Error::invalid(format!("class id {bad} outside the {}-class taxonomy", class_names.len())));
        }

        // operating-point counts
        let mut counts = vec![(0usize, 0usize, 0usize); class_names.len()];
        for img in images {
            let kept: Vec<Detection> = img.detections.iter().filter(|d| d.score >= score_threshold).copied().collect();
            let m = match_detections(&kept, &img.ground_truths, MATCH_IOU);
            for (d, l) in kept.iter().zip(&m.labels) {
                let c = &mut counts[d.class_id];
                match l {
                    super::Label::TruePositive => c.0 += 1,
                    super::Label::FalsePositive => c.1 += 1,
                }
            }
            for (g, matched) in img.ground_truths.iter().zip(&m.gt_matched) {
                if !matched {
                    counts[g.class_id].2 += 1;
                }
            }
        }

        let mut classes = Vec::with_capacity(class_names.len());
        let mut curves = Vec::with_capacity(class_names.len());
        for (class_id, name) in class_names.iter().enumerate() {
            let (tp, fp, fn_count) = counts[class_id];
            let p = precision(tp, fp);
            let r = recall(tp, fn_count);
            let sweep = ap_sweep(images, class_id);
            let sizes = size_stratified_ap(images, class_id);
            let curve = average_precision(images, class_id, MATCH_IOU);
            classes.push(ClassMetrics {
                class_id,
                name: name.to_string(),
                ground_truths: curve.num_ground_truths,
                tp,
                fp,
                fn_count,
                precision: p,
                recall: r,
                f1: f1(p, r),
                ap50: sweep.ap50,
                ap75: sweep.ap75,
                ap50_95: sweep.ap50_95,
                ap_small: sizes.small,
                ap_medium: sizes.medium,
                ap_large: sizes.large,
            });
            curves.push(curve);
        }

        let present: Vec<&ClassMetrics> = classes.iter().filter(|c| c.ground_truths > 0).collect();
        let map50 = mean_ap(&present.iter().map(|c| c.ap50).collect::<Vec<_>>())?;
        let map50_95 = mean_ap(&present.iter().map(|c| c.ap50_95).collect::<Vec<_>>())?;
        let tp = classes.iter().map(|c| c.tp).sum();
        let fp = classes.iter().map(|c| c.fp).sum();
        let fn_count = classes.iter().map(|c| c.fn_count).sum();
        let (p, r) = (precision(tp, fp), recall(tp, fn_count));
        Ok(Self {
            score_threshold,
            iou_threshold: MATCH_IOU,
            images: images.len(),
            classes,
            tp,
            fp,
            fn_count,
            precision: p,
            recall: r,
            f1: f1(p, r),
            map50,
            map50_95,
            curves,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("metrics report: {e}")))
    }

    /// Fixed-width table, one row per class plus an aggregate row.
    pub fn to_text(&self) -> String {
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), pct);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "images: {}  score threshold: {}  match IoU: {}",
            self.images, self.score_threshold, self.iou_threshold
        );
        let _ = writeln!(
            out,
            "{:<6} {:>5} {:>5} {:>5} {:>5} {:>8} {:>8} {:>8} {:>9} {:>9} {:>12} {:>9} {:>9} {:>9}",
            "Class",
            "GT",
            "TP",
            "FP",
            "FN",
            "P (%)",
            "R (%)",
            "F1 (%)",
            "AP50 (%)",
            "AP75 (%)",
            "AP50:95 (%)",
            "APs (%)",
            "APm (%)",
            "APl (%)"
        );
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<6} {:>5} {:>5} {:>5} {:>5} {:>8} {:>8} {:>8} {:>9} {:>9} {:>12} {:>9} {:>9} {:>9}",
                c.name,
                c.ground_truths,
                c.tp,
                c.fp,
                c.fn_count,
                pct(c.precision),
                pct(c.recall),
                pct(c.f1),
                pct(c.ap50),
                pct(c.ap75),
                pct(c.ap50_95),
                opt(c.ap_small),
                opt(c.ap_medium),
                opt(c.ap_large)
            );
        }
        let gt: usize = self.classes.iter().map(|c| c.ground_truths).sum();
        let _ = writeln!(
            out,
            "{:<6} {:>5} {:>5} {:>5} {:>5} {:>8} {:>8} {:>8}",
            "all",
            gt,
            self.tp,
            self.fp,
            self.fn_count,
            pct(self.precision),
            pct(self.recall),
            pct(self.f1)
        );
        let _ = writeln!(out, "mAP (%): {}  mAP50:95 (%): {}", pct(self.map50), pct(self.map50_95));
        out
    }
}

/// Two-column `recall,precision` CSV.
pub fn pr_curve_csv(curve: &PrCurve) -> String {
    let mut out = String::from("recall,precision\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{}", p.recall, p.precision);
    }
    out
}
