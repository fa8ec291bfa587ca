use dmgdet_core::attention::complexity;
use dmgdet_core::detector::{
    decode_box, descend_logits, detect, encode_box, load_weights, save_weights, zero_outputs, Detector, DetectorConfig,
};
use dmgdet_core::metrics::GroundTruth;
use dmgdet_core::params::Parameterized;
use dmgdet_core::{BBox, Tensor};
use proptest::prelude::*;

// counted once when the default graph was first built
const DEFAULT_PARAMS: usize = 5_263_640;

#[test]
fn default_graph_shapes_and_size() {
    let cfg = DetectorConfig::default();
    let mut d = Detector::build(&cfg).unwrap();
    d.init_fan_in(0);
    assert_eq!(d.param_count(), DEFAULT_PARAMS);
    let outs = d.forward(&Tensor::zeros(&[3, 416, 416])).unwrap();
    let shapes: Vec<Vec<usize>> = outs.iter().map(|o| o.tensor.shape().to_vec()).collect();
    assert_eq!(shapes, vec![vec![39, 104, 104], vec![39, 52, 52], vec![39, 26, 26], vec![39, 13, 13]]);
    assert_eq!(outs.iter().map(|o| o.stride).collect::<Vec<_>>(), vec![4, 8, 16, 32]);
    assert!(outs.iter().all(|o| o.tensor.is_finite()));
}

#[test]
fn profile_rows() {
    let d = Detector::build(&DetectorConfig::default()).unwrap();
    let rows = d.profile().unwrap();
    assert_eq!(rows.iter().map(|r| r.params).sum::<usize>(), DEFAULT_PARAMS);
    let heads: Vec<_> = rows.iter().filter(|r| r.attention.is_some()).collect();
    assert_eq!(heads.iter().map(|r| r.output_shape[1]).collect::<Vec<_>>(), vec![104, 52, 26, 13]);
    let last = heads.last().unwrap();
    assert_eq!(last.output_shape, vec![256, 13, 13]);
    let cost = last.attention.unwrap();
    let (hw, c, m) = (169u128, 256u128, 4u128);
    assert_eq!(cost.msa, 4 * hw * c * c + 2 * hw * hw * c);
    assert_eq!(cost.w_msa, 4 * hw * c * c + 2 * m * m * hw * c);
    assert_eq!(cost, complexity(13, 13, 256, 4).unwrap());
    assert!(rows.iter().all(|r| r.macs > 0 || r.params == 0));
}

#[test]
fn weights_roundtrip_and_mismatch() {
    let cfg = DetectorConfig::tiny();
    let mut a = Detector::build(&cfg).unwrap();
    a.init_fan_in(3);
    let mut buf = Vec::new();
    save_weights(&a, &mut buf).unwrap();
    let mut b = Detector::build(&cfg).unwrap();
    load_weights(&mut b, &buf[..]).unwrap();
    assert_eq!(a.named_params(""), b.named_params(""));

    let mut other = cfg.clone();
    other.num_classes = 3;
    let mut c = Detector::build(&other).unwrap();
    let err = load_weights(&mut c, &buf[..]).unwrap_err().to_string();
    assert!(err.contains("heads.0.predict.weight"), "{err}");
}

#[test]
fn random_weights_detect_deterministically() {
    let cfg = DetectorConfig::tiny();
    let d = Detector::with_random_weights(&cfg, 9, 0.1).unwrap();
    let img = Tensor::from_fn(&[3, 192, 192], |i| ((i * 7919) % 255) as f32 / 255.0);
    let a = detect(&d, &img, 0.2, 0.5).unwrap();
    let b = detect(&d, &img, 0.2, 0.5).unwrap();
    assert_eq!(a, b);
    assert!(detect(&d, &img, 1.0, 0.5).unwrap().is_empty());
}

#[test]
fn descent_reaches_the_box() {
    let cfg = DetectorConfig::default();
    let gts = [GroundTruth::new(BBox::new(203.0, 151.0, 90.0, 50.0), 3)];
    let mut outs = zero_outputs(&cfg);
    let trace = descend_logits(&mut outs, &gts, &cfg, 1.0, 60).unwrap();
    assert!(trace.windows(2).all(|w| w[1].coord <= w[0].coord && w[1].total <= w[0].total));
    assert!(trace.last().unwrap().coord < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]
    #[test]
    fn decode_inverts_encode(fx in 0.01f64..0.99, fy in 0.01f64..0.99, gx in 0usize..13, gy in 0usize..13,
                             w in 4.0f64..400.0, h in 4.0f64..400.0) {
        let anchor = (116.0, 90.0);
        let b = BBox::new((gx as f64 + fx) * 32.0, (gy as f64 + fy) * 32.0, w, h);
        let back = decode_box(encode_box(&b, gx, gy, 32, anchor), gx, gy, 32, anchor);
        for (x, y) in back.as_array().iter().zip(b.as_array()) {
            prop_assert!((x - y).abs() <= 1e-4 * y.abs().max(1.0));
        }
    }
}
