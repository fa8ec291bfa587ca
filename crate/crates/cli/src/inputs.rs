//! File discovery and loading shared by the commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dmgdet_core::data::{parse_voc, AnnotationSet, ClassTaxonomy, Image, ImageAnnotation};
use dmgdet_core::detector::{load_weights, Detector};
use dmgdet_core::params::Parameterized;

use crate::config::RunConfig;
use crate::error::{CliResult, Failure};

/// Image id: the file name without its extension.
pub fn image_id(path: &Path) -> CliResult<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Failure::validation(format!("{}: cannot derive an image id", path.display())))
}

fn files_with_extension(dir: &Path, ext: &str) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::validation(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    Ok(files)
}

/// Expands directories to their `.ppm` files and keys everything by image id.
pub fn collect_images(inputs: &[PathBuf]) -> CliResult<BTreeMap<String, PathBuf>> {
    if inputs.is_empty() {
        return Err(Failure::validation("no input images given"));
    }
    let mut out = BTreeMap::new();
    for input in inputs {
        let files = if input.is_dir() {
            files_with_extension(input, "ppm")?
        } else if input.is_file() {
            vec![input.clone()]
        } else {
            return Err(Failure::validation(format!("{} does not exist", input.display())));
        };
        for f in files {
            let id = image_id(&f)?;
            if let Some(prev) = out.insert(id.clone(), f.clone()) {
                return Err(Failure::validation(format!(
                    "image id `{id}` appears twice ({} and {})",
                    prev.display(),
                    f.display()
                )));
            }
        }
    }
    if out.is_empty() {
        return Err(Failure::validation("input directories contain no .ppm images"));
    }
    Ok(out)
}

pub fn read_image(path: &Path) -> CliResult<Image> {
    Image::read_ppm(path).map_err(|e| Failure::from(e).context(path.display()))
}

/// Every `.xml` file of `dir`, parsed and ordered by image id.
pub fn read_annotations(dir: &Path, taxonomy: &ClassTaxonomy) -> CliResult<AnnotationSet> {
    if !dir.is_dir() {
        return Err(Failure::validation(format!("{} is not a directory", dir.display())));
    }
    let mut by_id = BTreeMap::new();
    for f in files_with_extension(dir, "xml")? {
        let text = std::fs::read_to_string(&f).map_err(|e| Failure::validation(format!("{}: {e}", f.display())))?;
        let parsed = parse_voc(&text, &f.display().to_string(), taxonomy)?;
        let id = parsed.annotation.id.clone();
        if by_id.insert(id.clone(), parsed.annotation).is_some() {
            return Err(Failure::validation(format!("annotation id `{id}` appears twice in {}", dir.display())));
        }
    }
    Ok(AnnotationSet { images: by_id.into_values().collect() })
}

/// Annotation for one image id from an optional directory; missing files give an empty list.
pub fn annotation_for(
    dir: Option<&Path>,
    id: &str,
    image: &Image,
    taxonomy: &ClassTaxonomy,
) -> CliResult<ImageAnnotation> {
    let empty = ImageAnnotation { id: id.to_string(), width: image.width(), height: image.height(), objects: vec![] };
    let Some(dir) = dir else { return Ok(empty) };
    let path = dir.join(format!("{id}.xml"));
    if !path.exists() {
        log::warn!("{}: no annotation, treating as empty", path.display());
        return Ok(empty);
    }
    let text = std::fs::read_to_string(&path)?;
    let mut anno = parse_voc(&text, &path.display().to_string(), taxonomy)?.annotation;
    anno.id = id.to_string();
    Ok(anno)
}

/// Detector from the run configuration: seeded random weights or a weight file.
pub fn load_detector(cfg: &RunConfig) -> CliResult<Detector> {
    let model = cfg.model.load()?;
    let mut detector = Detector::build(&model)?;
    if cfg.random_weights {
        detector.init_fan_in(cfg.seed);
        return Ok(detector);
    }
    let path = cfg
        .weights
        .as_ref()
        .ok_or_else(|| Failure::validation("no weights given; pass --weights or --random-weights"))?;
    let file = std::fs::File::open(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    load_weights(&mut detector, std::io::BufReader::new(file)).map_err(|e| Failure::from(e).context(path.display()))?;
    Ok(detector)
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::validation(format!("{}: {e}", dir.display())))
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}
