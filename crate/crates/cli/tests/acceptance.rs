//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dmgdet_core::attention::{
    complexity, window_partition, window_reverse, AttentionConfig, Cbam, StrBlockPair, WindowAttention,
};
use dmgdet_core::data::{letterbox, SynthDataset};
use dmgdet_core::detector::{
    assign_targets, decode_box, descend_logits, encode_box, Assignment, Detector, DetectorConfig, SIZE_LOGIT_CLAMP,
};
use dmgdet_core::geometry::{ciou_gradient, ciou_loss, ciou_loss_with_tradeoff, nms, CiouTerms};
use dmgdet_core::metrics::{ap_sweep, average_precision, GroundTruth, ImageEval};
use dmgdet_core::params::Parameterized;
use dmgdet_core::{BBox, Detection, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    ensure(elapsed < budget, || format!("took {elapsed:.2?}, budget {budget:.0?}"))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_box(r: &mut ChaCha8Rng, extent: f64, min_side: f64, max_side: f64) -> BBox {
    BBox::new(
        r.gen_range(0.0..extent),
        r.gen_range(0.0..extent),
        r.gen_range(min_side..max_side),
        r.gen_range(min_side..max_side),
    )
}

fn noise(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.gen_range(-2.0f32..2.0))
}

// ---------------------------------------------------------------------------

fn ciou_checks() -> Check {
    let start = Instant::now();
    let mut r = rng(1);
    for _ in 0..1000 {
        let a = random_box(&mut r, 500.0, 0.5, 200.0);
        let l = ciou_loss(&a, &a);
        ensure(l == 0.0, || format!("ciou_loss(a, a) = {l:e} for {a:?}"))?;
    }

    // The analytic gradient holds the aspect trade-off weight fixed, so the
    // finite differences do too.
    let h = 1e-6;
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 1000 {
        let pred = random_box(&mut r, 100.0, 2.0, 60.0);
        let gt = random_box(&mut r, 100.0, 2.0, 60.0);
        let (p, g) = (pred.corners(), gt.corners());
        let edges = [(p.0, g.0), (p.2, g.2), (p.0, g.2), (p.2, g.0), (p.1, g.1), (p.3, g.3), (p.1, g.3), (p.3, g.1)];
        if edges.iter().any(|(a, b)| (a - b).abs() < 1e-3) {
            continue;
        }
        let beta = CiouTerms::new(&pred, &gt).tradeoff;
        let analytic = ciou_gradient(&pred, &gt);
        for k in 0..4 {
            let mut plus = pred.as_array();
            let mut minus = pred.as_array();
            plus[k] += h;
            minus[k] -= h;
            let numeric = (ciou_loss_with_tradeoff(&BBox::from_array(&plus), &gt, beta)
                - ciou_loss_with_tradeoff(&BBox::from_array(&minus), &gt, beta))
                / (2.0 * h);
            let err = (analytic[k] - numeric).abs();
            let tol = (1e-3 * numeric.abs()).max(1e-6);
            worst = worst.max(err / tol);
            ensure(err <= tol, || format!("d/d{k} analytic {} vs numeric {numeric} for {pred:?} {gt:?}", analytic[k]))?;
        }
        checked += 1;
    }

    let disjoint = ciou_loss(&BBox::new(0.0, 0.0, 1.0, 1.0), &BBox::new(10.0, 0.0, 1.0, 1.0));
    let expected = 1.0 + 100.0 / 121.0;
    ensure((disjoint - expected).abs() <= 1e-6, || {
        format!(
            "disjoint unit squares give {disjoint:.7}, expected {expected:.7} (1 + 100/122 = {:.7})",
            1.0 + 100.0 / 122.0
        )
    })?;
    within_budget(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("gradient error at most {worst:.3} of tolerance"))
}

fn descent_checks() -> Check {
    let start = Instant::now();
    let cfg = DetectorConfig::default();
    let ds = SynthDataset::new(42, 1);
    let (image, anno) = ds.sample(0);
    let (boxed, boxes, _) = letterbox(&image, &anno.objects, cfg.input_size).map_err(|e| e.to_string())?;
    let target = &boxes[0];
    let gts = [GroundTruth::new(target.bbox(), target.class_id)];

    let detector = Detector::with_random_weights(&cfg, 42, 0.1).map_err(|e| e.to_string())?;
    let mut outputs = detector.forward(&boxed.to_tensor()).map_err(|e| e.to_string())?;
    let trace = descend_logits(&mut outputs, &gts, &cfg, 1.0, 200).map_err(|e| e.to_string())?;

    let coords: Vec<f64> = trace.iter().map(|l| l.coord).collect();
    let reached = coords.iter().position(|&c| c < 0.01);
    ensure(reached.is_some(), || format!("coordinate term ends at {:.4}", coords.last().unwrap()))?;
    if let Some(step) = coords.windows(2).skip(10).position(|w| w[1] > w[0]) {
        return Err(format!("coordinate term rises at step {}", step + 11));
    }
    within_budget(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("{:.4} -> below 0.01 at step {}", coords[0], reached.unwrap()))
}

/// Textbook NMS: repeatedly take the best remaining box and discard its overlaps.
fn nms_oracle(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    fn overlap(a: &BBox, b: &BBox) -> f64 {
        let (ax1, ay1, ax2, ay2) = a.corners();
        let (bx1, by1, bx2, by2) = b.corners();
        let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
        let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
        let inter = iw * ih;
        inter / ((ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter)
    }
    let mut remaining: Vec<Detection> = dets.to_vec();
    let mut kept = Vec::new();
    while !remaining.is_empty() {
        let best = (0..remaining.len())
            .reduce(|a, b| {
                let (da, db) = (&remaining[a], &remaining[b]);
                if db.score > da.score || (db.score == da.score && db.class_id < da.class_id) {
                    b
                } else {
                    a
                }
            })
            .unwrap();
        let top = remaining.remove(best);
        remaining.retain(|d| d.class_id != top.class_id || overlap(&d.bbox, &top.bbox) <= threshold);
        kept.push(top);
    }
    kept
}

fn nms_checks() -> Check {
    let start = Instant::now();
    let mut r = rng(3);
    let key = |d: &Detection| (d.class_id, d.score.to_bits(), d.bbox.as_array().map(f64::to_bits));
    let mut total_kept = 0;
    for case in 0..200 {
        let threshold = [0.3, 0.5, 0.7][case % 3];
        let n = r.gen_range(0..=50);
        let dets: Vec<Detection> = (0..n)
            .map(|_| Detection::new(random_box(&mut r, 100.0, 5.0, 50.0), r.gen_range(0..3), r.gen_range(0.0..1.0)))
            .collect();
        let mut got: Vec<_> = nms(&dets, threshold).iter().map(key).collect();
        let mut want: Vec<_> = nms_oracle(&dets, threshold).iter().map(key).collect();
        got.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        ensure(got == want, || format!("instance {case}: kept {} vs oracle {}", got.len(), want.len()))?;
        total_kept += got.len();
    }
    within_budget(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("200 instances, {total_kept} boxes kept"))
}

/// AP by explicit envelope: precision at each recall level is replaced by the
/// best precision at any recall at least as large.
fn ap_oracle(images: &[ImageEval], class_id: usize, threshold: f64) -> f64 {
    let mut scored = Vec::new();
    let mut n_gt = 0;
    for img in images {
        let gts: Vec<&GroundTruth> = img.ground_truths.iter().filter(|g| g.class_id == class_id).collect();
        n_gt += gts.len();
        let mut dets: Vec<(usize, &Detection)> =
            img.detections.iter().enumerate().filter(|(_, d)| d.class_id == class_id).collect();
        dets.sort_by(|a, b| b.1.score.partial_cmp(&a.1.score).unwrap().then(a.0.cmp(&b.0)));
        let mut taken = vec![false; gts.len()];
        for (_, d) in dets {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                let v = dmgdet_core::geometry::iou(&d.bbox, &gt.bbox);
                if !taken[g] && v >= threshold && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            scored.push((d.score, best.is_some()));
        }
    }
    if n_gt == 0 {
        return 0.0;
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut curve = Vec::new();
    let mut tp = 0;
    for (i, &(_, hit)) in scored.iter().enumerate() {
        tp += hit as usize;
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (i + 1) as f64));
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for (i, &(rec, _)) in curve.iter().enumerate() {
        let best_after = curve[i..].iter().map(|&(_, p)| p).fold(0.0, f64::max);
        ap += (rec - prev) * best_after;
        prev = rec;
    }
    ap
}

fn random_instance(r: &mut ChaCha8Rng, classes: usize) -> Vec<ImageEval> {
    (0..r.gen_range(1..5))
        .map(|i| {
            let gts: Vec<GroundTruth> = (0..r.gen_range(0..6))
                .map(|_| GroundTruth::new(random_box(r, 200.0, 10.0, 80.0), r.gen_range(0..classes)))
                .collect();
            let mut dets = Vec::new();
            let found: Vec<&GroundTruth> = gts.iter().filter(|_| r.gen_bool(0.7)).collect();
            for g in found {
                let b = g.bbox;
                let moved = BBox::new(b.cx + r.gen_range(-8.0..8.0), b.cy + r.gen_range(-8.0..8.0), b.w, b.h);
                dets.push(Detection::new(moved, g.class_id, r.gen_range(0.0..1.0)));
            }
            for _ in 0..r.gen_range(0..5) {
                dets.push(Detection::new(
                    random_box(r, 200.0, 10.0, 80.0),
                    r.gen_range(0..classes),
                    r.gen_range(0.0..1.0),
                ));
            }
            ImageEval { image_id: format!("img{i}"), detections: dets, ground_truths: gts }
        })
        .collect()
}

fn ap_checks() -> Check {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let images = random_instance(&mut r, 3);
        for class_id in 0..3 {
            for threshold in [0.5, 0.75] {
                let got = average_precision(&images, class_id, threshold).ap;
                let want = ap_oracle(&images, class_id, threshold);
                worst = worst.max((got - want).abs());
                ensure((got - want).abs() <= 1e-9, || format!("instance {case} class {class_id}: {got} vs {want}"))?;
            }
        }
    }

    let gts: Vec<GroundTruth> = (0..12).map(|_| GroundTruth::new(random_box(&mut r, 300.0, 5.0, 90.0), 1)).collect();
    let perfect = vec![ImageEval {
        image_id: "perfect".into(),
        detections: gts.iter().map(|g| Detection::new(g.bbox, 1, 0.9)).collect(),
        ground_truths: gts,
    }];
    let sweep = ap_sweep(&perfect, 1);
    ensure(sweep.ap50_95 == 1.0, || format!("perfect detections give AP50:95 {}", sweep.ap50_95))?;

    for case in 0..100 {
        let images = random_instance(&mut r, 2);
        let squashed: Vec<ImageEval> = images
            .iter()
            .map(|img| ImageEval {
                detections: img
                    .detections
                    .iter()
                    .map(|d| Detection { score: d.score.sqrt() * 0.5 + 0.25, ..*d })
                    .collect(),
                ..img.clone()
            })
            .collect();
        for class_id in 0..2 {
            let (a, b) = (ap_sweep(&images, class_id), ap_sweep(&squashed, class_id));
            ensure(a.per_threshold == b.per_threshold, || format!("instance {case}: rescoring changed AP"))?;
        }
    }
    Ok(format!("largest oracle difference {worst:e}"))
}

fn attention_checks() -> Check {
    let mut r = rng(5);
    let mut rows = 0usize;
    let mut masked = 0usize;
    for case in 0..30 {
        let m = [2, 4, 7][case % 3];
        let cfg = AttentionConfig { window: m, heads: 2, reduction: 1, ..AttentionConfig::new(8) };
        let mut attn = WindowAttention::new(&cfg).map_err(|e| e.to_string())?;
        attn.randomize(case as u64, 0.5);
        let x = noise(&[r.gen_range(1..16), r.gen_range(1..16), 8], &mut r);
        for shift in [0, m / 2] {
            let out = attn.attend(&x, shift).map_err(|e| e.to_string())?;
            let t = out.grid.tokens_per_window();
            for (map, mask) in out.maps.iter().zip(&out.masks) {
                for row in map.data().chunks_exact(t) {
                    let sum: f64 = row.iter().map(|&v| v as f64).sum();
                    ensure((sum - 1.0).abs() <= 1e-6, || format!("attention row sums to {sum}"))?;
                    rows += 1;
                }
                if shift > 0 {
                    for head in map.data().chunks_exact(t * t) {
                        for (w, allowed) in head.iter().zip(mask) {
                            if !allowed {
                                ensure(*w == 0.0, || format!("masked pair carries weight {w}"))?;
                                masked += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    ensure(masked > 0, || "no masked pairs exercised".into())?;

    for case in 0..100 {
        let m = [2, 4, 7][case % 3];
        let x = noise(&[r.gen_range(1..=32), r.gen_range(1..=32), r.gen_range(1..5)], &mut r);
        let (windows, grid) = window_partition(&x, m).map_err(|e| e.to_string())?;
        let back = window_reverse(&windows, &grid).map_err(|e| e.to_string())?;
        ensure(
            back.shape() == x.shape() && back.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
            || format!("partition/reverse changed a {:?} map at m={m}", x.shape()),
        )?;
    }

    let mut pair = StrBlockPair::new(&AttentionConfig { window: 4, heads: 2, ..AttentionConfig::new(16) })
        .map_err(|e| e.to_string())?;
    pair.zero_weights();
    let x = noise(&[9, 11, 16], &mut r);
    let y = pair.forward(&x).map_err(|e| e.to_string())?;
    ensure(y.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
        "zero-weight block pair is not identity".into()
    })?;
    Ok(format!("{rows} rows, {masked} masked weights checked"))
}

fn complexity_checks() -> Check {
    let k = complexity(8, 8, 16, 4).map_err(|e| e.to_string())?;
    ensure((k.msa, k.w_msa) == (196608, 98304), || format!("complexity(8,8,16,4) = {k:?}"))?;
    let mut r = rng(6);
    for _ in 0..1000 {
        let (h, w, c, m) = (r.gen_range(1..128), r.gen_range(1..128), r.gen_range(1..512), r.gen_range(1..16));
        let k = complexity(h, w, c, m).map_err(|e| e.to_string())?;
        if m * m <= h * w {
            ensure(k.w_msa <= k.msa, || format!("windowed cost exceeds global at {h}x{w} C={c} m={m}"))?;
        }
        let windowed = |h: usize, w: usize| {
            let k = complexity(h, w, c, m).unwrap();
            k.w_msa - 4 * (h * w) as u128 * (c * c) as u128
        };
        let per_token = windowed(1, 1);
        ensure(windowed(h, w) == (h * w) as u128 * per_token && windowed(2 * h, w) == 2 * windowed(h, w), || {
            format!("windowed term is not linear in HW at {h}x{w} C={c} m={m}")
        })?;
    }
    Ok("1000 grid points".into())
}

fn shape_checks() -> Check {
    let cfg = DetectorConfig::default();
    let detector = Detector::with_random_weights(&cfg, 7, 0.1).map_err(|e| e.to_string())?;
    let outputs = detector.forward(&Tensor::full(&[3, 416, 416], 0.5)).map_err(|e| e.to_string())?;
    let shapes: Vec<Vec<usize>> = outputs.iter().map(|o| o.tensor.shape().to_vec()).collect();
    let channels = cfg.anchors_per_scale() * (5 + 8);
    let want: Vec<Vec<usize>> = [104, 52, 26, 13].iter().map(|&s| vec![channels, s, s]).collect();
    ensure(shapes == want, || format!("head shapes {shapes:?}"))?;

    let mut r = rng(8);
    let strides = cfg.strides();
    let anchors = cfg.head_anchors();
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let scale = r.gen_range(0..strides.len());
        let anchor = anchors[scale][r.gen_range(0..anchors[scale].len())];
        // sizes stay inside what the clamped size logits can express
        let mut side = |a: f64| (a * r.gen_range(-SIZE_LOGIT_CLAMP..SIZE_LOGIT_CLAMP).exp()).min(416.0);
        let (w, h) = (side(anchor.0), side(anchor.1));
        let b = BBox::new(r.gen_range(1.0..415.0), r.gen_range(1.0..415.0), w, h);
        let s = strides[scale];
        let (gx, gy) = ((b.cx / s as f64) as usize, (b.cy / s as f64) as usize);
        if (b.cx / s as f64).fract() == 0.0 || (b.cy / s as f64).fract() == 0.0 {
            continue;
        }
        let back = decode_box(encode_box(&b, gx, gy, s, anchor), gx, gy, s, anchor);
        for (x, y) in back.as_array().iter().zip(b.as_array()) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst <= 1e-4, || format!("decode(encode(b)) off by {worst:e}"))?;
    Ok(format!("{channels} channels per head, roundtrip error {worst:.1e}"))
}

fn cbam_checks() -> Check {
    let mut r = rng(9);
    for case in 0..100 {
        let c = [8, 16, 32][case % 3];
        let mut cbam =
            Cbam::new(&AttentionConfig { reduction: 4, ..AttentionConfig::new(c) }).map_err(|e| e.to_string())?;
        cbam.randomize(case as u64, 1.0);
        let x = noise(&[c, r.gen_range(1..12), r.gen_range(1..12)], &mut r);
        let y = cbam.forward(&x).map_err(|e| e.to_string())?;
        ensure(y.data().iter().zip(x.data()).all(|(o, i)| o.abs() <= i.abs()), || {
            format!("output exceeds input in case {case}")
        })?;
    }
    let mut cbam = Cbam::new(&AttentionConfig::new(32)).map_err(|e| e.to_string())?;
    cbam.zero_weights();
    let x = noise(&[32, 7, 5], &mut r);
    let y = cbam.forward(&x).map_err(|e| e.to_string())?;
    ensure(y.data().iter().zip(x.data()).all(|(o, i)| *o == 0.25 * i), || {
        "zero-weight gates do not give a quarter".into()
    })?;
    Ok("100 random gates".into())
}

fn run_pipeline(root: &Path) -> Result<Vec<Vec<u8>>, String> {
    let exe = env!("CARGO_BIN_EXE_dmgdet");
    let p = |p: &Path| p.to_str().unwrap().to_string();
    let data = root.join("data");
    let out = root.join("out");
    let steps: [Vec<String>; 3] = [
        vec![
            "synth".into(),
            "--count".into(),
            "200".into(),
            "--train-fraction".into(),
            "0.8".into(),
            "--seed".into(),
            "17".into(),
            "--out-dir".into(),
            p(&data),
        ],
        vec![
            "detect".into(),
            p(&data.join("val/images")),
            "--model".into(),
            "tiny".into(),
            "--random-weights".into(),
            "--seed".into(),
            "17".into(),
            "--out-dir".into(),
            p(&out),
        ],
        vec![
            "eval".into(),
            "--annotations".into(),
            p(&data.join("val/annotations")),
            "--detections".into(),
            p(&out.join("detections.tsv")),
            "--out-dir".into(),
            p(&out),
        ],
    ];
    for args in &steps {
        let status = Command::new(exe).args(args).output().map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("`dmgdet {}` failed: {}", args[0], String::from_utf8_lossy(&status.stderr).trim()));
        }
    }
    ["detections.tsv", "report.json", "report.txt"]
        .iter()
        .map(|f| std::fs::read(out.join(f)).map_err(|e| e.to_string()))
        .collect()
}

fn pipeline_checks() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = run_pipeline(&dir.path().join("first"))?;
    let second = run_pipeline(&dir.path().join("second"))?;
    ensure(first == second, || "reports differ between runs".into())?;
    let val = std::fs::read_dir(dir.path().join("first/data/val/images")).map_err(|e| e.to_string())?.count();
    ensure(val == 40, || format!("{val} validation images"))?;
    within_budget(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("two runs over {val} validation images, {:.1?}", start.elapsed()))
}

/// Exhaustive search: every head, anchor and cell; the responsible slot has the
/// best anchor-shape IoU among slots whose cell contains the box center.
fn assignment_oracle(gts: &[GroundTruth], cfg: &DetectorConfig) -> Vec<Assignment> {
    let strides = cfg.strides();
    let anchors = cfg.head_anchors();
    let grids = cfg.grid_sizes();
    gts.iter()
        .enumerate()
        .map(|(i, gt)| {
            let b = gt.bbox;
            let mut best: Option<(f64, Assignment)> = None;
            for (scale, list) in anchors.iter().enumerate() {
                let s = strides[scale] as f64;
                for (a, &(aw, ah)) in list.iter().enumerate() {
                    let shape = b.w.min(aw) * b.h.min(ah) / (b.w * b.h + aw * ah - b.w.min(aw) * b.h.min(ah));
                    for gy in 0..grids[scale] {
                        for gx in 0..grids[scale] {
                            let last = grids[scale] - 1;
                            let holds = |c: f64, g: usize| c >= g as f64 * s && (c < (g + 1) as f64 * s || g == last);
                            if !(holds(b.cx, gx) && holds(b.cy, gy)) {
                                continue;
                            }
                            if best.as_ref().is_none_or(|(v, _)| shape > *v) {
                                best = Some((
                                    shape,
                                    Assignment {
                                        gt_index: i,
                                        scale,
                                        anchor: a,
                                        gx,
                                        gy,
                                        target: b,
                                        class_id: gt.class_id,
                                    },
                                ));
                            }
                        }
                    }
                }
            }
            best.unwrap().1
        })
        .collect()
}

fn assignment_checks() -> Check {
    let mut r = rng(10);
    let mut total = 0;
    for (case, cfg) in
        (0..100).map(|i| (i, if i % 2 == 0 { DetectorConfig::default() } else { DetectorConfig::tiny() }))
    {
        let size = cfg.input_size as f64;
        let gts: Vec<GroundTruth> = (0..r.gen_range(1..8))
            .map(|_| {
                let w = r.gen_range(2.0..size);
                let h = r.gen_range(2.0..size);
                GroundTruth::new(
                    BBox::new(r.gen_range(0.0..size), r.gen_range(0.0..size), w, h),
                    r.gen_range(0..cfg.num_classes),
                )
            })
            .collect();
        let got = assign_targets(&gts, &cfg).map_err(|e| e.to_string())?;
        let want = assignment_oracle(&gts, &cfg);
        ensure(got == want, || format!("instance {case}: {got:?} vs {want:?}"))?;
        total += got.len();
    }
    Ok(format!("{total} boxes over 100 sets"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("CIoU loss and gradient", ciou_checks),
        ("loss descent on head logits", descent_checks),
        ("NMS against oracle", nms_checks),
        ("AP against oracle", ap_checks),
        ("attention invariants", attention_checks),
        ("attention complexity", complexity_checks),
        ("detector shapes and box coding", shape_checks),
        ("CBAM bound", cbam_checks),
        ("end-to-end pipeline", pipeline_checks),
        ("target assignment against oracle", assignment_checks),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match result {
            Ok(detail) => println!("[{:>2}] PASS  {name}: {detail} ({elapsed:.2?})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[{:>2}] FAIL  {name}: {detail} ({elapsed:.2?})", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
