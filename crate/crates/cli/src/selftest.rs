//! In-process invariant suites, one per core module.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use dmgdet_core::attention::{
    complexity, window_partition, window_reverse, AttentionConfig, Cbam, StrBlockPair, WindowAttention,
};
use dmgdet_core::blocks::{BlockConfig, CspBlock, DenseBlock, SppBlock};
use dmgdet_core::data::{
    letterbox, parse_voc, split, write_voc, BoxAnnotation, ClassTaxonomy, Image, SplitSpec, SynthDataset,
};
use dmgdet_core::detector::{
    assign_targets, decode_box, encode_box, load_weights, save_weights, Detector, DetectorConfig,
};
use dmgdet_core::geometry::{ciou_gradient, ciou_loss, iou, nms};
use dmgdet_core::metrics::{ap_sweep, average_precision, GroundTruth, ImageEval};
use dmgdet_core::params::Parameterized;
use dmgdet_core::tensor::{conv2d, numeric_gradient, pool2d, softmax_lastaxis, Activation, PoolKind};
use dmgdet_core::{BBox, Detection, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelSpec;

type Check = Result<(), String>;
type Suite<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn core<T>(r: dmgdet_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    BBox::new(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0), rng.gen_range(1.0..50.0), rng.gen_range(1.0..50.0))
}

fn noise(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn tensor_suite() -> Check {
    let x = Tensor::full(&[1, 4, 4], 1.0);
    let y = core(conv2d(&x, &Tensor::full(&[1, 1, 3, 3], 1.0), None, 1, 1))?;
    ensure!(y.data()[5] == 9.0 && y.data()[0] == 4.0, "3×3 ones conv: interior {} corner {}", y.data()[5], y.data()[0]);
    let id = core(conv2d(&x, &Tensor::full(&[1, 1, 1, 1], 1.0), None, 1, 0))?;
    ensure!(id == x, "1×1 identity kernel changed its input");
    let q = core(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]))?;
    let max = core(pool2d(&q, PoolKind::Max, 2, 2, 0))?;
    let avg = core(pool2d(&q, PoolKind::Avg, 2, 2, 0))?;
    ensure!(max.data() == [4.0] && avg.data() == [2.5], "2×2 pools gave {:?} and {:?}", max.data(), avg.data());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = core(softmax_lastaxis(&noise(&[7, 9], &mut rng)))?;
    for row in s.data().chunks_exact(9) {
        let total: f64 = row.iter().map(|&v| v as f64).sum();
        ensure!((total - 1.0).abs() < 1e-6, "softmax row sums to {total}");
    }
    let g = core(numeric_gradient(|v| v[0] * v[0] + 3.0 * v[1], &[1.5, -2.0], 1e-5))?;
    ensure!((g[0] - 3.0).abs() < 1e-6 && (g[1] - 3.0).abs() < 1e-6, "numeric gradient {g:?}");
    let silu = dmgdet_core::tensor::activation(Activation::Silu, &Tensor::zeros(&[3]));
    ensure!(silu.data() == [0.0; 3], "silu(0) is not 0");
    Ok(())
}

fn geometry_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let a = random_box(&mut rng);
        ensure!(ciou_loss(&a, &a) == 0.0, "ciou(a, a) = {} for {a:?}", ciou_loss(&a, &a));
    }
    for _ in 0..100 {
        let (p, g) = (random_box(&mut rng), random_box(&mut rng));
        if iou(&p, &g) < 1e-3 {
            continue;
        }
        let analytic = ciou_gradient(&p, &g);
        let beta_frozen = dmgdet_core::geometry::CiouTerms::new(&p, &g).tradeoff;
        let f = |v: &[f64]| dmgdet_core::geometry::ciou_loss_with_tradeoff(&BBox::from_array(v), &g, beta_frozen);
        let numeric = core(numeric_gradient(f, &p.as_array(), 1e-6))?;
        for (a, n) in analytic.iter().zip(&numeric) {
            ensure!((a - n).abs() <= 1e-3 * n.abs().max(1e-3), "ciou gradient {analytic:?} vs {numeric:?}");
        }
    }
    for _ in 0..30 {
        let dets: Vec<Detection> = (0..rng.gen_range(0..30))
            .map(|_| Detection::new(random_box(&mut rng), rng.gen_range(0..3), rng.gen_range(0.0..1.0)))
            .collect();
        let kept = nms(&dets, 0.5);
        for (i, k) in kept.iter().enumerate() {
            ensure!(
                kept[..i].iter().all(|h| h.class_id != k.class_id || iou(&h.bbox, &k.bbox) <= 0.5),
                "nms kept overlapping boxes"
            );
        }
        for d in &dets {
            let survives = kept.contains(d);
            let covered = kept
                .iter()
                .any(|k| k.score >= d.score && k != d && k.class_id == d.class_id && iou(&k.bbox, &d.bbox) > 0.5);
            ensure!(survives || covered, "nms dropped an uncovered detection");
        }
    }
    Ok(())
}

fn metrics_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gts: Vec<GroundTruth> = (0..12).map(|i| GroundTruth::new(random_box(&mut rng), i % 3)).collect();
    let perfect = vec![ImageEval {
        image_id: "a".into(),
        detections: gts.iter().map(|g| Detection::new(g.bbox, g.class_id, 1.0)).collect(),
        ground_truths: gts.clone(),
    }];
    for c in 0..3 {
        let sweep = ap_sweep(&perfect, c);
        ensure!(sweep.ap50 == 1.0 && sweep.ap50_95 == 1.0, "perfect detections give AP {sweep:?}");
    }
    let noisy = vec![ImageEval {
        image_id: "a".into(),
        detections: (0..20)
            .map(|_| Detection::new(random_box(&mut rng), rng.gen_range(0..3), rng.gen_range(0.01..1.0)))
            .collect(),
        ground_truths: gts,
    }];
    let mut squashed = noisy.clone();
    squashed[0].detections.iter_mut().for_each(|d| d.score = d.score.powi(3) / 2.0);
    for c in 0..3 {
        let a = average_precision(&noisy, c, 0.5).ap;
        let b = average_precision(&squashed, c, 0.5).ap;
        ensure!((0.0..=1.0).contains(&a), "AP {a} outside [0, 1]");
        ensure!(a == b, "AP changed under a monotone score transform: {a} vs {b}");
    }
    Ok(())
}

fn blocks_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = noise(&[8, 12, 12], &mut rng);
    let mut dense = core(DenseBlock::new(&BlockConfig::new(8, 0, Activation::Silu).depth(3).growth(4)))?;
    dense.randomize(1, 0.1);
    let y = core(dense.forward(&x))?;
    ensure!(y.shape() == [20, 12, 12], "dense block output {:?}", y.shape());
    ensure!(y.data()[..8 * 144] == x.data()[..], "dense block does not pass its input through");
    let mut csp = core(CspBlock::new(&BlockConfig::new(8, 16, Activation::Silu).depth(2)))?;
    csp.randomize(2, 0.1);
    ensure!(core(csp.forward(&x))?.shape() == [16, 12, 12], "csp block output shape");
    let spp = core(SppBlock::new(&BlockConfig::new(8, 8, Activation::Silu).kernels(vec![5, 9, 13])))?;
    let branches = core(spp.forward_branches(&x))?;
    ensure!(branches.shape() == [32, 12, 12], "spp branches {:?}", branches.shape());
    Ok(())
}

fn attention_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (h, w, m) = (rng.gen_range(1..=32), rng.gen_range(1..=32), [2, 4, 7][rng.gen_range(0..3)]);
        let x = noise(&[h, w, 3], &mut rng);
        let (win, grid) = core(window_partition(&x, m))?;
        ensure!(core(window_reverse(&win, &grid))? == x, "partition/reverse changed a {h}×{w} map with m={m}");
    }
    let cfg = AttentionConfig { heads: 2, reduction: 4, ..AttentionConfig::new(8) };
    let mut att = core(WindowAttention::new(&cfg))?;
    att.randomize(6, 0.5);
    let x = noise(&[9, 10, 8], &mut rng);
    let out = core(att.attend(&x, 2))?;
    let t = out.grid.tokens_per_window();
    for (map, mask) in out.maps.iter().zip(&out.masks) {
        for (r, row) in map.data().chunks_exact(t).enumerate() {
            let total: f64 = row.iter().map(|&v| v as f64).sum();
            ensure!((total - 1.0).abs() < 1e-6, "attention row sums to {total}");
            for (j, &v) in row.iter().enumerate() {
                ensure!(mask[(r % t) * t + j] || v == 0.0, "masked pair carries weight {v}");
            }
        }
    }
    let mut pair = core(StrBlockPair::new(&cfg))?;
    pair.zero_weights();
    ensure!(core(pair.forward(&x))? == x, "zero-weight transformer pair is not the identity");
    let cost = core(complexity(8, 8, 16, 4))?;
    ensure!((cost.msa, cost.w_msa) == (196608, 98304), "complexity(8, 8, 16, 4) = {cost:?}");
    let mut cbam = core(Cbam::new(&AttentionConfig { reduction: 4, ..AttentionConfig::new(8) }))?;
    let chw = noise(&[8, 6, 6], &mut rng);
    cbam.zero_weights();
    let quarter = core(cbam.forward(&chw))?;
    ensure!(quarter.data().iter().zip(chw.data()).all(|(o, i)| *o == 0.25 * i), "zero-weight CBAM is not 0.25·x");
    cbam.randomize(7, 1.0);
    let y = core(cbam.forward(&chw))?;
    ensure!(y.data().iter().zip(chw.data()).all(|(o, i)| o.abs() <= i.abs()), "CBAM amplified its input");
    Ok(())
}

fn detector_suite() -> Check {
    let cfg = DetectorConfig::tiny();
    let mut d = core(Detector::build(&cfg))?;
    d.init_fan_in(8);
    let outs = core(d.forward(&Tensor::full(&[3, cfg.input_size, cfg.input_size], 0.5)))?;
    let grids: Vec<usize> = outs.iter().map(|o| o.grid()).collect();
    ensure!(grids == cfg.grid_sizes(), "head grids {grids:?}");
    ensure!(
        outs.iter().all(|o| o.tensor.shape()[0] == cfg.head_channels() && o.tensor.is_finite()),
        "head channels or values"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let (gx, gy) = (rng.gen_range(0..12), rng.gen_range(0..12));
        let b = BBox::new(
            (gx as f64 + rng.gen_range(0.01..0.99)) * 16.0,
            (gy as f64 + rng.gen_range(0.01..0.99)) * 16.0,
            rng.gen_range(2.0..300.0),
            rng.gen_range(2.0..300.0),
        );
        let back = decode_box(encode_box(&b, gx, gy, 16, (30.0, 61.0)), gx, gy, 16, (30.0, 61.0));
        ensure!(
            back.as_array().iter().zip(b.as_array()).all(|(x, y)| (x - y).abs() <= 1e-6 * y.abs().max(1.0)),
            "decode∘encode {b:?} → {back:?}"
        );
    }
    let gts: Vec<GroundTruth> = (0..10)
        .map(|_| {
            GroundTruth::new(
                BBox::new(
                    rng.gen_range(0.0..192.0),
                    rng.gen_range(0.0..192.0),
                    rng.gen_range(2.0..150.0),
                    rng.gen_range(2.0..150.0),
                ),
                rng.gen_range(0..8),
            )
        })
        .collect();
    let strides = cfg.strides();
    for a in core(assign_targets(&gts, &cfg))? {
        let b = gts[a.gt_index].bbox;
        let s = strides[a.scale] as f64;
        let last = (cfg.input_size / strides[a.scale] - 1) as f64;
        ensure!(
            a.gx as f64 == (b.cx / s).floor().min(last) && a.gy as f64 == (b.cy / s).floor().min(last),
            "cell misses the center"
        );
        let shape = |(w, h): (f64, f64)| iou(&b, &BBox::new(b.cx, b.cy, w, h));
        let chosen = shape(cfg.head_anchors()[a.scale][a.anchor]);
        ensure!(
            cfg.head_anchors().iter().flat_map(|l| l.iter()).all(|&an| shape(an) <= chosen),
            "a better anchor exists"
        );
    }
    Ok(())
}

fn data_suite() -> Check {
    let tax = ClassTaxonomy::rdd2018();
    let ds = SynthDataset::new(10, 20);
    for anno in ds.annotations() {
        let xml = core(write_voc(&anno, &tax))?;
        let parsed = core(parse_voc(&xml, "selftest.xml", &tax))?;
        ensure!(parsed.annotation == anno, "VOC roundtrip changed {}", anno.id);
    }
    let ids: Vec<usize> = (0..37).collect();
    let (train, val) = core(split(&ids, &SplitSpec::default()))?;
    let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
    all.sort_unstable();
    ensure!(all == ids && train.len() == 30, "split is not an 80/20 partition");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (w, h) = (rng.gen_range(20..700), rng.gen_range(20..700));
        let x1 = rng.gen_range(0.0..w as f64 - 10.0);
        let y1 = rng.gen_range(0.0..h as f64 - 10.0);
        let b = BoxAnnotation::new(0, x1, y1, rng.gen_range(x1 + 5.0..=w as f64), rng.gen_range(y1 + 5.0..=h as f64));
        let (_, boxed, lb) = core(letterbox(&Image::filled(w, h, [0.5; 3]), &[b], 416))?;
        let back = lb.invert(&boxed[0].bbox());
        let orig = b.bbox();
        ensure!(
            back.as_array().iter().zip(orig.as_array()).all(|(p, q)| (p - q).abs() <= 1.0),
            "letterbox inverse drifted"
        );
    }
    Ok(())
}

fn loader_suite(weights: Option<&PathBuf>, model: &ModelSpec) -> Check {
    let cfg = DetectorConfig::tiny();
    let mut a = core(Detector::build(&cfg))?;
    a.init_fan_in(12);
    let mut buf = Vec::new();
    core(save_weights(&a, &mut buf))?;
    let mut b = core(Detector::build(&cfg))?;
    core(load_weights(&mut b, &buf[..]))?;
    ensure!(a.named_params("") == b.named_params(""), "weights changed across save and load");
    if let Some(path) = weights {
        let model_cfg = model.load().map_err(|e| e.to_string())?;
        let mut target = core(Detector::build(&model_cfg))?;
        let file = std::fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
        load_weights(&mut target, std::io::BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub elapsed: Duration,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
    pub elapsed: Duration,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.failure.is_none())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let ms = s.elapsed.as_secs_f64() * 1e3;
            match &s.failure {
                None => writeln!(out, "{:<10} ok      {ms:>9.1} ms", s.name),
                Some(why) => writeln!(out, "{:<10} FAILED  {ms:>9.1} ms  {why}", s.name),
            }
            .expect("string write");
        }
        let failed = self.suites.iter().filter(|s| s.failure.is_some()).count();
        let _ = writeln!(
            out,
            "{} suites, {} passed, {failed} failed in {:.2} s",
            self.suites.len(),
            self.suites.len() - failed,
            self.elapsed.as_secs_f64()
        );
        out
    }
}

/// Runs every suite. `weights`, when given, is loaded into `model` by the loader suite.
pub fn selftest(weights: Option<&PathBuf>, model: &ModelSpec) -> SelftestReport {
    let suites: Vec<Suite<'_>> = vec![
        ("tensor", Box::new(tensor_suite)),
        ("geometry", Box::new(geometry_suite)),
        ("metrics", Box::new(metrics_suite)),
        ("blocks", Box::new(blocks_suite)),
        ("attention", Box::new(attention_suite)),
        ("detector", Box::new(detector_suite)),
        ("data", Box::new(data_suite)),
        ("loader", Box::new(move || loader_suite(weights, model))),
    ];
    let start = Instant::now();
    let results = suites
        .into_iter()
        .map(|(name, run)| {
            let t = Instant::now();
            let failure = match catch_unwind(AssertUnwindSafe(&run)) {
                Ok(Ok(())) => None,
                Ok(Err(why)) => Some(why),
                Err(panic) => Some(format!(
                    "panicked: {}",
                    panic
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default()
                )),
            };
            SuiteResult { name, elapsed: t.elapsed(), failure }
        })
        .collect();
    SelftestReport { suites: results, elapsed: start.elapsed() }
}
