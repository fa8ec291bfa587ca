use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BoxAnnotation, Image};
use crate::error::{Error, Result};

/// Boxes whose visible area falls below this fraction of their full area are dropped.
pub const MIN_VISIBLE_FRACTION: f64 = 0.01;

fn keep_visible(full: &BoxAnnotation, x1: f64, y1: f64, x2: f64, y2: f64) -> Option<BoxAnnotation> {
    let clipped = full.clip(x1, y1, x2, y2)?;
    (clipped.area() >= MIN_VISIBLE_FRACTION * full.area()).then_some(clipped)
}

/// Four-image mosaic with a seeded split point in the middle half of the canvas.
pub fn mosaic(
    images: [&Image; 4],
    boxes: [&[BoxAnnotation]; 4],
    size: usize,
    seed: u64,
) -> Result<(Image, Vec<BoxAnnotation>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = size as f64 * 0.25;
    let hi = size as f64 * 0.75;
    let cx = rng.gen_range(lo..=hi).round();
    let cy = rng.gen_range(lo..=hi).round();
    mosaic_at(images, boxes, size, (cx, cy))
}

/// Mosaic split at `center`.
///
/// Sources fill the top-left, top-right, bottom-left and bottom-right
/// quadrants in that order. Each is scaled to cover its quadrant with its
/// corner pinned at the center, so the part farthest from the center is
/// cropped.
pub fn mosaic_at(
    images: [&Image; 4],
    boxes: [&[BoxAnnotation]; 4],
    size: usize,
    center: (f64, f64),
) -> Result<(Image, Vec<BoxAnnotation>)> {
    let s = size as f64;
    let (cx, cy) = center;
    if size == 0 || !(0.0..=s).contains(&cx) || !(0.0..=s).contains(&cy) {
        return Err(Error::invalid(format!("mosaic center ({cx}, {cy}) outside a {size}×{size} canvas")));
    }
    let quadrants = [(0.0, 0.0, cx, cy), (cx, 0.0, s, cy), (0.0, cy, cx, s), (cx, cy, s, s)];
    let mut canvas = Image::filled(size, size, [0.0; 3]);
    let mut out = Vec::new();
    for (q, &(qx1, qy1, qx2, qy2)) in quadrants.iter().enumerate() {
        let (qw, qh) = (qx2 - qx1, qy2 - qy1);
        if qw <= 0.0 || qh <= 0.0 {
            continue;
        }
        let img = images[q];
        let (w, h) = (img.width() as f64, img.height() as f64);
        let scale = (qw / w).max(qh / h);
        let ox = if q % 2 == 0 { cx - w * scale } else { cx };
        let oy = if q < 2 { cy - h * scale } else { cy };
        for py in (qy1 as usize)..(qy2 as usize) {
            let sy = (((py as f64 + 0.5 - oy) / scale).floor().max(0.0) as usize).min(img.height() - 1);
            for px in (qx1 as usize)..(qx2 as usize) {
                let sx = (((px as f64 + 0.5 - ox) / scale).floor().max(0.0) as usize).min(img.width() - 1);
                canvas.set_pixel(px, py, img.pixel(sx, sy));
            }
        }
        out.extend(
            boxes[q].iter().filter_map(|b| keep_visible(&b.transform(scale, scale, ox, oy), qx1, qy1, qx2, qy2)),
        );
    }
    Ok((canvas, out))
}

/// A box from one of the two mixup sources, with that source's blend weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedBox {
    pub annotation: BoxAnnotation,
    pub weight: f64,
}

/// `λ·a + (1−λ)·b`, with every box of `a` weighted `λ` and every box of `b` weighted `1−λ`.
pub fn mixup(
    a: &Image,
    boxes_a: &[BoxAnnotation],
    b: &Image,
    boxes_b: &[BoxAnnotation],
    lambda: f64,
) -> Result<(Image, Vec<WeightedBox>)> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::shape(format!(
            "mixup of {}×{} and {}×{} images",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("mixup weight {lambda} outside [0, 1]")));
    }
    let (la, lb) = (lambda as f32, (1.0 - lambda) as f32);
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| la * x + lb * y).collect();
    let boxes = boxes_a
        .iter()
        .map(|&annotation| WeightedBox { annotation, weight: lambda })
        .chain(boxes_b.iter().map(|&annotation| WeightedBox { annotation, weight: 1.0 - lambda }))
        .collect();
    Ok((Image::from_data(a.width(), a.height(), data)?, boxes))
}

/// Pixel rectangle `[x1, x2) × [y1, y2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
}

impl Region {
    pub fn is_empty(&self) -> bool {
        self.x2 <= self.x1 || self.y2 <= self.y1
    }
}

/// Seeded region covering a uniformly drawn fraction of the image, aspect matching the image.
pub fn random_region(width: usize, height: usize, seed: u64) -> Region {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frac: f64 = rng.gen_range(0.0..1.0);
    let rw = (width as f64 * frac.sqrt()).round() as usize;
    let rh = (height as f64 * frac.sqrt()).round() as usize;
    let x1 = rng.gen_range(0..=width - rw);
    let y1 = rng.gen_range(0..=height - rh);
    Region { x1, y1, x2: x1 + rw, y2: y1 + rh }
}

/// Pastes `region` of `b` into `a` at the same place.
///
/// Boxes of `a` keep their coordinates unless the pasted region hides all
/// but a sliver of them; boxes of `b` are clipped to the region. Both use
/// the 1% visibility rule.
pub fn cutmix(
    a: &Image,
    boxes_a: &[BoxAnnotation],
    b: &Image,
    boxes_b: &[BoxAnnotation],
    region: Region,
) -> Result<(Image, Vec<BoxAnnotation>)> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::shape("cutmix sources differ in size"));
    }
    if region.x2 > a.width() || region.y2 > a.height() {
        return Err(Error::invalid(format!("cutmix region {region:?} exceeds the image")));
    }
    if region.is_empty() {
        return Ok((a.clone(), boxes_a.to_vec()));
    }
    let mut out = a.clone();
    for y in region.y1..region.y2 {
        for x in region.x1..region.x2 {
            out.set_pixel(x, y, b.pixel(x, y));
        }
    }
    let (rx1, ry1, rx2, ry2) = (region.x1 as f64, region.y1 as f64, region.x2 as f64, region.y2 as f64);
    let mut boxes: Vec<BoxAnnotation> = boxes_a
        .iter()
        .filter(|bx| {
            let hidden = bx.clip(rx1, ry1, rx2, ry2).map_or(0.0, |c| c.area());
            bx.area() - hidden >= MIN_VISIBLE_FRACTION * bx.area()
        })
        .copied()
        .collect();
    boxes.extend(boxes_b.iter().filter_map(|bx| keep_visible(bx, rx1, ry1, rx2, ry2)));
    Ok((out, boxes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn solid(w: usize, h: usize, v: f32) -> Image {
        Image::filled(w, h, [v, v / 2.0, 1.0 - v])
    }

    #[test]
    fn identical_sources_fill_the_canvas() {
        let img = solid(50, 40, 0.3);
        let (out, _) = mosaic([&img; 4], [&[]; 4], 64, 5).unwrap();
        assert!(out.data().chunks_exact(3).all(|p| p == img.pixel(0, 0)));
    }

    #[test]
    fn inner_box_maps_exactly() {
        let imgs = [solid(100, 100, 0.1), solid(100, 100, 0.2), solid(100, 100, 0.3), solid(100, 100, 0.4)];
        let b = BoxAnnotation::new(4, 10.0, 20.0, 30.0, 50.0);
        let (_, out) =
            mosaic_at([&imgs[0], &imgs[1], &imgs[2], &imgs[3]], [&[], &[], &[], &[b]], 200, (80.0, 90.0)).unwrap();
        // bottom-right quadrant is 120×110, so the source is scaled by 1.2 and pinned at (80, 90)
        let s = 1.2;
        assert_eq!(
            out,
            vec![BoxAnnotation::new(4, 10.0 * s + 80.0, 20.0 * s + 90.0, 30.0 * s + 80.0, 50.0 * s + 90.0)]
        );
    }

    #[test]
    fn corner_center_gives_one_source() {
        let imgs = [solid(30, 30, 0.1), solid(30, 30, 0.2), solid(30, 30, 0.3), solid(30, 30, 0.9)];
        let (out, _) = mosaic_at([&imgs[0], &imgs[1], &imgs[2], &imgs[3]], [&[]; 4], 48, (0.0, 0.0)).unwrap();
        assert!(out.data().chunks_exact(3).all(|p| p == imgs[3].pixel(0, 0)));
    }

    #[test]
    fn mixup_examples() {
        let a = solid(5, 4, 0.0);
        let b = Image::filled(5, 4, [1.0; 3]);
        let ba = [BoxAnnotation::new(0, 1.0, 1.0, 2.0, 2.0)];
        let (img, boxes) = mixup(&a, &ba, &b, &ba, 1.0).unwrap();
        assert_eq!(img, a);
        assert_eq!((boxes[0].weight, boxes[1].weight), (1.0, 0.0));
        let (img, _) = mixup(&Image::filled(5, 4, [0.0; 3]), &[], &b, &[], 0.5).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.5));
        assert!(mixup(&a, &[], &solid(4, 4, 0.0), &[], 0.5).is_err());
    }

    #[test]
    fn cutmix_examples() {
        let a = solid(10, 10, 0.2);
        let b = solid(10, 10, 0.7);
        let ba = [BoxAnnotation::new(1, 0.0, 0.0, 4.0, 4.0)];
        let bb = [BoxAnnotation::new(2, 5.0, 5.0, 9.0, 9.0), BoxAnnotation::new(3, 0.0, 0.0, 2.0, 2.0)];
        let empty = Region { x1: 3, y1: 3, x2: 3, y2: 8 };
        assert_eq!(cutmix(&a, &ba, &b, &bb, empty).unwrap(), (a.clone(), ba.to_vec()));
        let (img, boxes) = cutmix(&a, &ba, &b, &bb, Region { x1: 4, y1: 4, x2: 10, y2: 10 }).unwrap();
        assert_eq!(img.pixel(5, 5), b.pixel(5, 5));
        assert_eq!(img.pixel(3, 3), a.pixel(3, 3));
        assert_eq!(boxes, vec![ba[0], bb[0]]);
    }

    proptest! {
        #[test]
        fn augmented_boxes_stay_valid(seed in any::<u64>(), n in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let imgs: Vec<Image> = (0..4).map(|i| solid(rng.gen_range(20..90), rng.gen_range(20..90), i as f32 / 4.0)).collect();
            let boxes: Vec<Vec<BoxAnnotation>> = imgs.iter().map(|img| (0..n).map(|_| {
                let (w, h) = (img.width() as f64, img.height() as f64);
                let x1 = rng.gen_range(0.0..w - 2.0);
                let y1 = rng.gen_range(0.0..h - 2.0);
                BoxAnnotation::new(0, x1, y1, rng.gen_range(x1 + 1.0..=w), rng.gen_range(y1 + 1.0..=h))
            }).collect()).collect();
            let (canvas, out) = mosaic([&imgs[0], &imgs[1], &imgs[2], &imgs[3]],
                                       [&boxes[0], &boxes[1], &boxes[2], &boxes[3]], 96, seed).unwrap();
            prop_assert!(out.iter().all(|b| b.is_within(canvas.width(), canvas.height())));

            let a = &imgs[0];
            let b = a.map(|v| 1.0 - v);
            let region = random_region(a.width(), a.height(), seed);
            let (img, out) = cutmix(a, &boxes[0], &b, &boxes[0], region).unwrap();
            prop_assert!(out.iter().all(|bx| bx.is_within(img.width(), img.height())));
        }
    }
}
