//! Annotations, images and augmentation.
//!
//! Boxes in this module use corner coordinates in pixels, `[0, width] × [0, height]`.

mod augment;
mod image;
mod synth;
mod voc;

pub use augment::{cutmix, mixup, mosaic, mosaic_at, random_region, Region, WeightedBox, MIN_VISIBLE_FRACTION};
pub use image::{letterbox, Image, Letterbox, LETTERBOX_FILL};
pub use synth::{SynthDataset, SYNTH_HEIGHT, SYNTH_WIDTH};
pub use voc::{parse_voc, write_voc, VocParse};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::metrics::{GroundTruth, ImageEval};

/// Road-damage class identifiers in index order.
pub const RDD2018_CLASSES: [&str; 8] = ["D00", "D01", "D10", "D11", "D20", "D40", "D43", "D44"];
pub const RDD2018_IMAGES: usize = 9053;
pub const RDD2018_BOXES: usize = 15435;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTaxonomy {
    names: Vec<String>,
}

impl Default for ClassTaxonomy {
    fn default() -> Self {
        Self::rdd2018()
    }
}

impl ClassTaxonomy {
    pub fn rdd2018() -> Self {
        Self { names: RDD2018_CLASSES.iter().map(|s| s.to_string()).collect() }
    }

    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        if names.is_empty() || !names.iter().all(|n| !n.is_empty() && seen.insert(n.as_str())) {
            return Err(Error::Config("class names must be non-empty and distinct".into()));
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> Vec<&str> {
        self.names.iter().map(String::as_str).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub class_id: usize,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoxAnnotation {
    pub fn new(class_id: usize, x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { class_id, x1, y1, x2, y2 }
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_corners(self.x1, self.y1, self.x2, self.y2)
    }

    pub fn from_bbox(class_id: usize, b: &BBox) -> Self {
        let (x1, y1, x2, y2) = b.corners();
        Self { class_id, x1, y1, x2, y2 }
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    /// Finite, positive extent, inside `[0, width] × [0, height]`.
    pub fn is_within(&self, width: usize, height: usize) -> bool {
        let finite = [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite());
        finite
            && 0.0 <= self.x1
            && self.x1 < self.x2
            && self.x2 <= width as f64
            && 0.0 <= self.y1
            && self.y1 < self.y2
            && self.y2 <= height as f64
    }

    /// Intersection with a rectangle, `None` when empty.
    pub fn clip(&self, x1: f64, y1: f64, x2: f64, y2: f64) -> Option<Self> {
        let c = Self {
            class_id: self.class_id,
            x1: self.x1.max(x1),
            y1: self.y1.max(y1),
            x2: self.x2.min(x2),
            y2: self.y2.min(y2),
        };
        (c.x1 < c.x2 && c.y1 < c.y2).then_some(c)
    }

    /// `x·scale + offset` on both axes.
    pub fn transform(&self, sx: f64, sy: f64, ox: f64, oy: f64) -> Self {
        Self {
            class_id: self.class_id,
            x1: self.x1 * sx + ox,
            y1: self.y1 * sy + oy,
            x2: self.x2 * sx + ox,
            y2: self.y2 * sy + oy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageAnnotation {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<BoxAnnotation>,
}

impl ImageAnnotation {
    pub fn ground_truths(&self) -> Vec<GroundTruth> {
        self.objects.iter().map(|o| GroundTruth::new(o.bbox(), o.class_id)).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<ImageAnnotation>,
}

impl AnnotationSet {
    pub fn box_count(&self) -> usize {
        self.images.iter().map(|i| i.objects.len()).sum()
    }

    /// Checks image and box totals against the published dataset size.
    pub fn check_counts(&self, images: usize, boxes: usize) -> Result<()> {
        if self.images.len() != images || self.box_count() != boxes {
            return Err(Error::invalid(format!(
                "expected {images} images with {boxes} boxes, found {} with {}",
                self.images.len(),
                self.box_count()
            )));
        }
        Ok(())
    }

    /// Evaluation records pairing these annotations with detections keyed by image id.
    pub fn to_eval(
        &self,
        detections: &std::collections::HashMap<String, Vec<crate::geometry::Detection>>,
    ) -> Vec<ImageEval> {
        self.images
            .iter()
            .map(|img| ImageEval {
                image_id: img.id.clone(),
                detections: detections.get(&img.id).cloned().unwrap_or_default(),
                ground_truths: img.ground_truths(),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { seed: 0, train_fraction: 0.8 }
    }
}

/// Seeded shuffle; the first `round(fraction·n)` ids train, the rest validate.
pub fn split<T: Clone>(ids: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>)> {
    if ids.is_empty() {
        return Err(Error::invalid("cannot split an empty id list"));
    }
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(Error::invalid(format!("train fraction {} outside [0, 1]", spec.train_fraction)));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = (spec.train_fraction * ids.len() as f64).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| ids[i].clone()).collect::<Vec<T>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}
