use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::FALLBACK_ANCHORS;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 300;

/// IoU of two shapes sharing a center.
pub fn shape_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0) * a.1.min(b.1);
    inter / (a.0 * a.1 + b.0 * b.1 - inter)
}

fn nearest(centroids: &[(f64, f64)], b: (f64, f64)) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, &c) in centroids.iter().enumerate() {
        let v = shape_iou(b, c);
        if v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

/// k-means over box shapes with `1 − IoU` as distance, seeded with k-means++.
///
/// Centroids are returned sorted by area, smallest first.
pub fn kmeans_anchors(shapes: &[(f64, f64)], k: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if k == 0 || shapes.len() < k {
        return Err(Error::invalid(format!("k-means needs at least k={k} shapes, got {}", shapes.len())));
    }
    if let Some(bad) = shapes.iter().find(|(w, h)| !(*w > 0.0 && *h > 0.0 && w.is_finite() && h.is_finite())) {
        return Err(Error::invalid(format!("shape {bad:?} is not positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![shapes[rng.gen_range(0..shapes.len())]];
    while centroids.len() < k {
        let dist: Vec<f64> = shapes.iter().map(|&s| 1.0 - shape_iou(s, centroids[nearest(&centroids, s)])).collect();
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            dist.iter()
                .position(|&d| {
                    r -= d;
                    r < 0.0
                })
                .unwrap_or(shapes.len() - 1)
        } else {
            rng.gen_range(0..shapes.len())
        };
        centroids.push(shapes[pick]);
    }

    let mut labels = vec![usize::MAX; shapes.len()];
    for _ in 0..MAX_ITERATIONS {
        let next: Vec<usize> = shapes.iter().map(|&s| nearest(&centroids, s)).collect();
        if next == labels {
            break;
        }
        labels = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let (mut sw, mut sh, mut n) = (0.0, 0.0, 0usize);
            for (s, _) in shapes.iter().zip(&labels).filter(|(_, &l)| l == c) {
                sw += s.0;
                sh += s.1;
                n += 1;
            }
            if n > 0 {
                *centroid = (sw / n as f64, sh / n as f64);
            }
        }
    }
    centroids.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)).then(a.0.total_cmp(&b.0)));
    Ok(centroids)
}

/// Anchors for all four levels, three per level, from ground-truth shapes.
///
/// Without the additional head only the three coarse levels are fitted and the
/// finest level keeps its fallback shapes.
pub fn fit_level_anchors(shapes: &[(f64, f64)], additional_head: bool, seed: u64) -> Result<Vec<Vec<(f64, f64)>>> {
    let levels = if additional_head { 4 } else { 3 };
    let centroids = kmeans_anchors(shapes, 3 * levels, seed)?;
    let mut out: Vec<Vec<(f64, f64)>> = FALLBACK_ANCHORS.iter().map(|l| l.to_vec()).collect();
    for (i, chunk) in centroids.chunks(3).enumerate() {
        out[4 - levels + i] = chunk.to_vec();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_separated_clusters() {
        let mut shapes = Vec::new();
        for (i, &(w, h)) in [(10.0, 10.0), (40.0, 20.0), (100.0, 150.0)].iter().enumerate() {
            for j in 0..20 {
                let d = 1.0 + 0.01 * (j as f64 - 10.0) + 0.001 * i as f64;
                shapes.push((w * d, h * d));
            }
        }
        let c = kmeans_anchors(&shapes, 3, 7).unwrap();
        assert!((c[0].0 - 10.0).abs() < 0.5 && (c[1].0 - 40.0).abs() < 1.0 && (c[2].1 - 150.0).abs() < 3.0, "{c:?}");
        assert_eq!(kmeans_anchors(&shapes, 3, 7).unwrap(), c);
    }

    #[test]
    fn level_layout() {
        let shapes: Vec<(f64, f64)> = (1..=60).map(|i| (i as f64 * 3.0, i as f64 * 2.0 + 5.0)).collect();
        let all = fit_level_anchors(&shapes, true, 1).unwrap();
        let flat: Vec<f64> = all.iter().flatten().map(|(w, h)| w * h).collect();
        assert!(flat.windows(2).all(|p| p[0] <= p[1]));
        let coarse = fit_level_anchors(&shapes, false, 1).unwrap();
        assert_eq!(coarse[0], FALLBACK_ANCHORS[0].to_vec());
        assert!(kmeans_anchors(&shapes[..5], 12, 0).is_err());
    }
}
