//! Deterministic inputs shared by the benchmarks.

use dmgdet_core::geometry::BBox;
use dmgdet_core::metrics::{GroundTruth, ImageEval};
use dmgdet_core::{Detection, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn random_box(rng: &mut ChaCha8Rng, extent: f64) -> BBox {
    BBox::new(
        rng.gen_range(0.0..extent),
        rng.gen_range(0.0..extent),
        rng.gen_range(4.0..80.0),
        rng.gen_range(4.0..80.0),
    )
}

/// `n` detections over `classes` classes on a `416×416` canvas.
pub fn random_detections(n: usize, classes: usize, seed: u64) -> Vec<Detection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Detection::new(random_box(&mut rng, 416.0), rng.gen_range(0..classes), rng.gen_range(0.0..1.0)))
        .collect()
}

/// Images with a few ground truths each and jittered detections plus clutter.
pub fn evaluation_set(images: usize, classes: usize, seed: u64) -> Vec<ImageEval> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..images)
        .map(|i| {
            let gts: Vec<GroundTruth> = (0..rng.gen_range(1..6))
                .map(|_| GroundTruth::new(random_box(&mut rng, 416.0), rng.gen_range(0..classes)))
                .collect();
            let mut dets = Vec::new();
            for g in &gts {
                let b = g.bbox;
                let jitter = BBox::new(b.cx + rng.gen_range(-5.0..5.0), b.cy + rng.gen_range(-5.0..5.0), b.w, b.h);
                dets.push(Detection::new(jitter, g.class_id, rng.gen_range(0.0..1.0)));
            }
            for _ in 0..rng.gen_range(0..10) {
                dets.push(Detection::new(
                    random_box(&mut rng, 416.0),
                    rng.gen_range(0..classes),
                    rng.gen_range(0.0..1.0),
                ));
            }
            ImageEval { image_id: format!("img{i}"), detections: dets, ground_truths: gts }
        })
        .collect()
}
