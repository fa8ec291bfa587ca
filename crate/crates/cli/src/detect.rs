use dmgdet_core::data::{letterbox, ClassTaxonomy, Image};
use dmgdet_core::detector::{detect as run_detector, Detector};
use dmgdet_core::geometry::{write_detections_tsv, DetectionRecord};
use dmgdet_core::{BBox, Detection};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::inputs::{collect_images, ensure_dir, load_detector, read_image, write_file};

const BOX_COLORS: [[f32; 3]; 8] = [
    [1.0, 0.2, 0.2],
    [0.2, 1.0, 0.2],
    [0.3, 0.5, 1.0],
    [1.0, 1.0, 0.2],
    [1.0, 0.3, 1.0],
    [0.2, 1.0, 1.0],
    [1.0, 0.6, 0.1],
    [1.0, 1.0, 1.0],
];

/// Detections for one image in its own pixel coordinates.
///
/// The image is letterboxed to the detector input; boxes are mapped back and
/// clipped to the image, and boxes left without area are dropped.
pub fn detect_image(detector: &Detector, image: &Image, score: f64, nms: f64) -> CliResult<Vec<Detection>> {
    let (boxed, _, lb) = letterbox(image, &[], detector.config.input_size)?;
    let dets = run_detector(detector, &boxed.to_tensor(), score, nms)?;
    let (w, h) = (image.width() as f64, image.height() as f64);
    Ok(dets
        .into_iter()
        .filter_map(|d| {
            let (x1, y1, x2, y2) = lb.invert(&d.bbox).corners();
            let (x1, y1, x2, y2) = (x1.clamp(0.0, w), y1.clamp(0.0, h), x2.clamp(0.0, w), y2.clamp(0.0, h));
            (x2 > x1 && y2 > y1).then(|| Detection::new(BBox::from_corners(x1, y1, x2, y2), d.class_id, d.score))
        })
        .collect())
}

pub fn class_label(taxonomy: &ClassTaxonomy, class_id: usize) -> String {
    taxonomy.name(class_id).map_or_else(|| class_id.to_string(), str::to_string)
}

/// Box outlines with `class score` labels above each box.
pub fn render(image: &Image, dets: &[Detection], taxonomy: &ClassTaxonomy) -> Image {
    let mut out = image.clone();
    for d in dets {
        let color = BOX_COLORS[d.class_id % BOX_COLORS.len()];
        out.outline_rect(&d.bbox, color, 2.0);
        let (x1, y1, _, _) = d.bbox.corners();
        let label = format!("{} {:.2}", class_label(taxonomy, d.class_id), d.score);
        // above the box, or just inside it when there is no room
        let y = if y1 >= 8.0 { y1 - 7.0 } else { y1.max(0.0) + 3.0 };
        out.draw_label(x1.max(0.0) as usize + 1, y as usize, &label, color, 1);
    }
    out
}

#[derive(Debug)]
pub struct DetectOutcome {
    pub records: Vec<DetectionRecord>,
    pub images: usize,
}

/// Runs every input image, in id order, and writes `detections.tsv` (plus renders when asked).
pub fn detect(cfg: &RunConfig, render_images: bool) -> CliResult<DetectOutcome> {
    let images = collect_images(&cfg.inputs)?;
    let detector = load_detector(cfg)?;
    let taxonomy = ClassTaxonomy::rdd2018();
    ensure_dir(&cfg.out_dir)?;
    let render_dir = cfg.out_dir.join("renders");
    if render_images {
        ensure_dir(&render_dir)?;
    }
    let mut records = Vec::new();
    for (id, path) in &images {
        let image = read_image(path)?;
        let dets = detect_image(&detector, &image, cfg.score_threshold, cfg.nms_threshold)?;
        log::info!("{id}: {} detections", dets.len());
        if render_images {
            render(&image, &dets, &taxonomy).write_ppm(&render_dir.join(format!("{id}.ppm")))?;
        }
        records.extend(dets.iter().map(|d| DetectionRecord::new(id.clone(), d)));
    }
    let mut buf = Vec::new();
    write_detections_tsv(&records, &mut buf)?;
    write_file(&cfg.out_dir.join("detections.tsv"), buf)?;
    Ok(DetectOutcome { records, images: images.len() })
}
