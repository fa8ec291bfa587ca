use std::path::Path;

use dmgdet_core::data::{
    cutmix, mixup, mosaic, random_region, write_voc, BoxAnnotation, ClassTaxonomy, Image, ImageAnnotation, WeightedBox,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliResult, Failure};
use crate::inputs::{annotation_for, collect_images, ensure_dir, read_image, write_file};

#[derive(Clone, Copy, Debug, PartialEq, clap::ValueEnum)]
pub enum AugmentMode {
    /// Copy through the image pipeline unchanged.
    None,
    /// Scale every pixel by the brightness factor, clamped to [0, 1].
    Brightness,
    /// Replace each pixel by its luma in all three channels.
    Grayscale,
    /// One canvas per consecutive group of four images.
    Mosaic,
    /// One blend per consecutive pair.
    Mixup,
    /// One paste per consecutive pair.
    Cutmix,
}

#[derive(Clone, Copy, Debug)]
pub struct AugmentOptions {
    pub mode: AugmentMode,
    pub brightness: f32,
    pub lambda: f64,
    pub size: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self { mode: AugmentMode::None, brightness: 1.0, lambda: 0.5, size: 416 }
    }
}

#[derive(Debug, Serialize)]
struct MixupLabels<'a> {
    id: &'a str,
    boxes: &'a [WeightedBox],
}

/// Output id and box count for each written image.
pub type AugmentSummary = Vec<(String, usize)>;

fn emit(dir: &Path, image: &Image, anno: &ImageAnnotation, taxonomy: &ClassTaxonomy) -> CliResult<()> {
    image.write_ppm(&dir.join(format!("{}.ppm", anno.id)))?;
    write_file(&dir.join(format!("{}.xml", anno.id)), write_voc(anno, taxonomy)?)
}

/// Augments the input images (annotations are looked up by id in `cfg.annotations`).
///
/// Output images and VOC files are named by output id; group modes use
/// `<mode>_<k>` with `k` counting groups, and drop a trailing incomplete group.
pub fn augment(cfg: &RunConfig, opts: &AugmentOptions) -> CliResult<AugmentSummary> {
    let taxonomy = ClassTaxonomy::rdd2018();
    let inputs = collect_images(&cfg.inputs)?;
    let mut samples = Vec::with_capacity(inputs.len());
    for (id, path) in &inputs {
        let image = read_image(path)?;
        let anno = annotation_for(cfg.annotations.as_deref(), id, &image, &taxonomy)?;
        samples.push((image, anno));
    }
    ensure_dir(&cfg.out_dir)?;
    let mut summary = Vec::new();
    let mut write = |image: &Image, id: String, objects: Vec<BoxAnnotation>| -> CliResult<()> {
        let anno = ImageAnnotation { id: id.clone(), width: image.width(), height: image.height(), objects };
        emit(&cfg.out_dir, image, &anno, &taxonomy)?;
        summary.push((id, anno.objects.len()));
        Ok(())
    };
    match opts.mode {
        AugmentMode::None | AugmentMode::Brightness | AugmentMode::Grayscale => {
            if !(opts.brightness >= 0.0 && opts.brightness.is_finite()) {
                return Err(Failure::validation(format!(
                    "brightness {} must be a non-negative number",
                    opts.brightness
                )));
            }
            for (image, anno) in &samples {
                let out = match opts.mode {
                    AugmentMode::Brightness => image.brightness(opts.brightness),
                    AugmentMode::Grayscale => image.grayscale(),
                    _ => image.clone(),
                };
                write(&out, anno.id.clone(), anno.objects.clone())?;
            }
        }
        AugmentMode::Mosaic => {
            if samples.len() < 4 {
                return Err(Failure::validation(format!("mosaic needs four images, got {}", samples.len())));
            }
            for (k, group) in samples.chunks_exact(4).enumerate() {
                let imgs = [&group[0].0, &group[1].0, &group[2].0, &group[3].0];
                let boxes = [
                    &group[0].1.objects[..],
                    &group[1].1.objects[..],
                    &group[2].1.objects[..],
                    &group[3].1.objects[..],
                ];
                let (image, objects) = mosaic(imgs, boxes, opts.size, cfg.seed.wrapping_add(k as u64))?;
                write(&image, format!("mosaic_{k:03}"), objects)?;
            }
        }
        AugmentMode::Mixup | AugmentMode::Cutmix => {
            if samples.len() < 2 {
                return Err(Failure::validation(format!("{:?} needs two images, got {}", opts.mode, samples.len())));
            }
            for (k, pair) in samples.chunks_exact(2).enumerate() {
                let ((a, anno_a), (b, anno_b)) = (&pair[0], &pair[1]);
                if opts.mode == AugmentMode::Mixup {
                    let (image, weighted) = mixup(a, &anno_a.objects, b, &anno_b.objects, opts.lambda)?;
                    let id = format!("mixup_{k:03}");
                    let labels = serde_json::to_string_pretty(&MixupLabels { id: &id, boxes: &weighted })
                        .expect("labels serialize");
                    write_file(&cfg.out_dir.join(format!("{id}.weights.json")), labels + "\n")?;
                    write(&image, id, weighted.iter().map(|w| w.annotation).collect())?;
                } else {
                    let region = random_region(a.width(), a.height(), cfg.seed.wrapping_add(k as u64));
                    let (image, objects) = cutmix(a, &anno_a.objects, b, &anno_b.objects, region)?;
                    write(&image, format!("cutmix_{k:03}"), objects)?;
                }
            }
        }
    }
    Ok(summary)
}
