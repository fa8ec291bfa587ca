use std::path::Path;

use dmgdet_core::data::{split, write_voc, ClassTaxonomy, SplitSpec, SynthDataset};

use crate::error::{CliResult, Failure};
use crate::inputs::{ensure_dir, write_file};

#[derive(Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Writes `train/` and `val/` under `out_dir`, each with `images/*.ppm` and `annotations/*.xml`.
pub fn write_synthetic(out_dir: &Path, count: usize, seed: u64, train_fraction: f64) -> CliResult<SynthSummary> {
    if count == 0 {
        return Err(Failure::validation("synthetic dataset needs at least one image"));
    }
    let ds = SynthDataset::new(seed, count);
    let taxonomy = ClassTaxonomy::rdd2018();
    let indices: Vec<usize> = (0..count).collect();
    let (mut train, mut val) = split(&indices, &SplitSpec { seed, train_fraction })?;
    train.sort_unstable();
    val.sort_unstable();
    for (part, ids) in [("train", &train), ("val", &val)] {
        let images = out_dir.join(part).join("images");
        let annotations = out_dir.join(part).join("annotations");
        ensure_dir(&images)?;
        ensure_dir(&annotations)?;
        for &i in ids {
            let (image, anno) = ds.sample(i);
            image.write_ppm(&images.join(format!("{}.ppm", anno.id)))?;
            write_file(&annotations.join(format!("{}.xml", anno.id)), write_voc(&anno, &taxonomy)?)?;
        }
    }
    let names = |ids: &[usize]| ids.iter().map(|&i| SynthDataset::id(i)).collect();
    Ok(SynthSummary { train: names(&train), val: names(&val) })
}
