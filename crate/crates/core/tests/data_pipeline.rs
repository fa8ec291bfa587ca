use std::collections::HashMap;

use dmgdet_core::data::{
    letterbox, mosaic, parse_voc, split, write_voc, AnnotationSet, ClassTaxonomy, Image, SplitSpec, SynthDataset,
    RDD2018_BOXES, RDD2018_IMAGES,
};
use dmgdet_core::metrics::MetricsReport;
use dmgdet_core::{BBox, Detection};

#[test]
fn synthetic_annotations_survive_voc() {
    let ds = SynthDataset::new(5, 40);
    let tax = ClassTaxonomy::rdd2018();
    for anno in ds.annotations() {
        let xml = write_voc(&anno, &tax).unwrap();
        let parsed = parse_voc(&xml, &format!("{}.xml", anno.id), &tax).unwrap();
        assert_eq!(parsed.clamped, 0);
        assert_eq!(parsed.annotation, anno);
    }
}

#[test]
fn synthetic_images_survive_ppm() {
    let img = SynthDataset::new(2, 4).image(3);
    let back = Image::from_ppm(&img.to_ppm().unwrap()).unwrap();
    // 8-bit quantization
    assert!(img.data().iter().zip(back.data()).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-6));
}

#[test]
fn letterboxed_truth_scores_perfectly() {
    let ds = SynthDataset::new(8, 30);
    let ids: Vec<usize> = (0..ds.len).collect();
    let (_, val) = split(&ids, &SplitSpec::default()).unwrap();
    assert_eq!(val.len(), 6);
    let mut set = AnnotationSet::default();
    let mut dets = HashMap::new();
    for &i in &val {
        let (img, anno) = ds.sample(i);
        let (_, boxes, lb) = letterbox(&img, &anno.objects, 416).unwrap();
        let back: Vec<Detection> = boxes
            .iter()
            .map(|b| {
                let r = lb.invert(&b.bbox());
                let o = BBox::new(r.cx, r.cy, r.w, r.h);
                Detection::new(o, b.class_id, 1.0)
            })
            .collect();
        dets.insert(anno.id.clone(), back);
        set.images.push(anno);
    }
    let names = ClassTaxonomy::rdd2018();
    let report = MetricsReport::evaluate(&set.to_eval(&dets), &names.names(), 0.5).unwrap();
    assert_eq!((report.precision, report.recall, report.map50), (1.0, 1.0, 1.0));
}

#[test]
fn mosaic_of_synthetic_scenes() {
    let ds = SynthDataset::new(1, 4);
    let samples: Vec<_> = (0..4).map(|i| ds.sample(i)).collect();
    let imgs = [&samples[0].0, &samples[1].0, &samples[2].0, &samples[3].0];
    let boxes =
        [&samples[0].1.objects[..], &samples[1].1.objects[..], &samples[2].1.objects[..], &samples[3].1.objects[..]];
    let (a, ba) = mosaic(imgs, boxes, 320, 4).unwrap();
    let (b, bb) = mosaic(imgs, boxes, 320, 4).unwrap();
    assert_eq!((a, &ba), (b, &bb));
    assert!(ba.iter().all(|o| o.is_within(320, 320)));
}

#[test]
fn dataset_totals_are_checked() {
    let set = AnnotationSet { images: SynthDataset::new(0, 3).annotations() };
    let err = set.check_counts(RDD2018_IMAGES, RDD2018_BOXES).unwrap_err().to_string();
    assert!(err.contains("9053") && err.contains("15435"), "{err}");
    assert!(set.check_counts(3, set.box_count()).is_ok());
}
