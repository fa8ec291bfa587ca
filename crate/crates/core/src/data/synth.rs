//! Procedural road-damage-like scenes for tests and demos.
//!
//! Every sample is a pure function of `(seed, index)`, so datasets of any
//! size are generated lazily and reproduce exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BoxAnnotation, Image, ImageAnnotation, RDD2018_CLASSES};

pub const SYNTH_WIDTH: usize = 256;
pub const SYNTH_HEIGHT: usize = 192;

const MIN_SIDE: f64 = 8.0;
const MAX_OBJECTS: usize = 4;

// one fill per class so the classes stay separable by appearance
const CLASS_COLORS: [[f32; 3]; 8] = [
    [0.10, 0.10, 0.10],
    [0.85, 0.20, 0.20],
    [0.20, 0.75, 0.25],
    [0.20, 0.30, 0.85],
    [0.85, 0.80, 0.20],
    [0.05, 0.05, 0.25],
    [0.95, 0.95, 0.95],
    [0.80, 0.35, 0.80],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthDataset {
    pub seed: u64,
    pub len: usize,
}

impl SynthDataset {
    pub fn new(seed: u64, len: usize) -> Self {
        Self { seed, len }
    }

    pub fn num_classes(&self) -> usize {
        RDD2018_CLASSES.len()
    }

    fn rng(&self, index: usize, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * index as u64 + stream);
        rng
    }

    pub fn id(index: usize) -> String {
        format!("synth_{index:05}")
    }

    /// Panics when `index >= len`.
    pub fn annotation(&self, index: usize) -> ImageAnnotation {
        assert!(index < self.len, "sample {index} out of range for {} samples", self.len);
        let mut rng = self.rng(index, 0);
        let (w, h) = (SYNTH_WIDTH as f64, SYNTH_HEIGHT as f64);
        let n = rng.gen_range(1..=MAX_OBJECTS);
        let objects = (0..n)
            .map(|_| {
                let class_id = rng.gen_range(0..RDD2018_CLASSES.len());
                let bw = rng.gen_range(MIN_SIDE.max(w * 0.08)..=w * 0.45).round();
                let bh = rng.gen_range(MIN_SIDE.max(h * 0.08)..=h * 0.45).round();
                let x1 = rng.gen_range(0.0..=w - bw).round();
                let y1 = rng.gen_range(0.0..=h - bh).round();
                BoxAnnotation::new(class_id, x1, y1, x1 + bw, y1 + bh)
            })
            .collect();
        ImageAnnotation { id: Self::id(index), width: SYNTH_WIDTH, height: SYNTH_HEIGHT, objects }
    }

    /// Renders the sample; objects are painted in annotation order over a noisy asphalt texture.
    pub fn image(&self, index: usize) -> Image {
        let anno = self.annotation(index);
        let mut rng = self.rng(index, 1);
        let base: f32 = rng.gen_range(0.35..0.55);
        let data = (0..SYNTH_WIDTH * SYNTH_HEIGHT)
            .flat_map(|_| {
                let v = (base + rng.gen_range(-0.06f32..0.06)).clamp(0.0, 1.0);
                [v, v, v * 0.97]
            })
            .collect();
        let mut img = Image::from_data(SYNTH_WIDTH, SYNTH_HEIGHT, data).expect("buffer matches dimensions");
        for o in &anno.objects {
            paint(&mut img, o);
        }
        img
    }

    pub fn sample(&self, index: usize) -> (Image, ImageAnnotation) {
        (self.image(index), self.annotation(index))
    }

    pub fn annotations(&self) -> Vec<ImageAnnotation> {
        (0..self.len).map(|i| self.annotation(i)).collect()
    }
}

fn paint(img: &mut Image, o: &BoxAnnotation) {
    let color = CLASS_COLORS[o.class_id % CLASS_COLORS.len()];
    let (w, h) = (o.width(), o.height());
    match o.class_id {
        // thin stroke along the long side, framed so the box stays tight
        0 | 2 => {
            img.fill_rect(o.x1, o.y1, o.x2, o.y2, color);
            if w > h {
                img.fill_rect(o.x1, o.y1 + h * 0.3, o.x2, o.y2 - h * 0.3, [0.0; 3]);
            } else {
                img.fill_rect(o.x1 + w * 0.3, o.y1, o.x2 - w * 0.3, o.y2, [0.0; 3]);
            }
        }
        // checkerboard
        4 => {
            let cell = (w.min(h) / 4.0).max(2.0);
            let mut y = o.y1;
            let mut row = 0;
            while y < o.y2 {
                let mut x = o.x1;
                let mut col = 0;
                while x < o.x2 {
                    let c = if (row + col) % 2 == 0 { color } else { [0.15; 3] };
                    img.fill_rect(x, y, (x + cell).min(o.x2), (y + cell).min(o.y2), c);
                    x += cell;
                    col += 1;
                }
                y += cell;
                row += 1;
            }
        }
        // filled ellipse inside a frame
        5 => {
            let (cx, cy) = ((o.x1 + o.x2) / 2.0, (o.y1 + o.y2) / 2.0);
            img.fill_rect(o.x1, o.y1, o.x2, o.y2, [0.3, 0.25, 0.2]);
            for py in (o.y1 as usize)..(o.y2 as usize).min(img.height()) {
                for px in (o.x1 as usize)..(o.x2 as usize).min(img.width()) {
                    let dx = (px as f64 + 0.5 - cx) / (w / 2.0);
                    let dy = (py as f64 + 0.5 - cy) / (h / 2.0);
                    if dx * dx + dy * dy <= 1.0 {
                        img.set_pixel(px, py, color);
                    }
                }
            }
        }
        // stripes
        6 | 7 => {
            let n = 4.0;
            img.fill_rect(o.x1, o.y1, o.x2, o.y2, [0.2; 3]);
            for k in 0..4 {
                let t = k as f64 / n;
                if o.class_id == 6 {
                    img.fill_rect(o.x1 + t * w, o.y1, o.x1 + (t + 0.5 / n) * w, o.y2, color);
                } else {
                    img.fill_rect(o.x1, o.y1 + t * h, o.x2, o.y1 + (t + 0.5 / n) * h, color);
                }
            }
        }
        _ => img.fill_rect(o.x1, o.y1, o.x2, o.y2, color),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_deterministic_and_index_local() {
        let a = SynthDataset::new(3, 50);
        let b = SynthDataset::new(3, 10);
        assert_eq!(a.sample(7), b.sample(7));
        assert_ne!(a.annotation(7), SynthDataset::new(4, 50).annotation(7));
        assert_eq!(a.annotation(12).id, "synth_00012");
    }

    #[test]
    fn boxes_are_inside_and_large_enough() {
        let ds = SynthDataset::new(0, 200);
        for anno in ds.annotations() {
            assert!((1..=MAX_OBJECTS).contains(&anno.objects.len()));
            for o in &anno.objects {
                assert!(o.is_within(SYNTH_WIDTH, SYNTH_HEIGHT));
                assert!(o.width() >= MIN_SIDE && o.height() >= MIN_SIDE);
                assert!(o.class_id < 8);
            }
        }
    }

    #[test]
    fn classes_are_roughly_uniform() {
        let ds = SynthDataset::new(11, 800);
        let mut hist = [0usize; 8];
        for o in ds.annotations().iter().flat_map(|a| a.objects.clone()) {
            hist[o.class_id] += 1;
        }
        let total: usize = hist.iter().sum();
        let expected = total as f64 / 8.0;
        // 2000 draws over 8 bins; 25% relative slack is about 6 standard deviations
        assert!(hist.iter().all(|&c| (c as f64 - expected).abs() < 0.25 * expected), "{hist:?}");
    }

    #[test]
    fn image_pixels_are_in_range() {
        let img = SynthDataset::new(1, 3).image(2);
        assert_eq!((img.width(), img.height()), (SYNTH_WIDTH, SYNTH_HEIGHT));
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
