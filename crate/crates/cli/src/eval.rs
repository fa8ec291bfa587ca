use std::collections::{BTreeSet, HashMap};
use std::io::BufReader;

use dmgdet_core::data::ClassTaxonomy;
use dmgdet_core::geometry::read_detections;
use dmgdet_core::metrics::{pr_curve_csv, MetricsReport};
use dmgdet_core::Detection;

use crate::config::RunConfig;
use crate::error::{CliResult, Failure};
use crate::inputs::{ensure_dir, read_annotations, write_file};

/// Scores a detections file against a directory of annotations.
///
/// Writes `report.txt`, `report.json` and one `pr_<class>.csv` per class.
pub fn evaluate(cfg: &RunConfig) -> CliResult<MetricsReport> {
    let gt_dir = cfg.annotations.as_ref().ok_or_else(|| Failure::validation("no annotation directory given"))?;
    let det_path = cfg.detections.as_ref().ok_or_else(|| Failure::validation("no detections file given"))?;
    let taxonomy = ClassTaxonomy::rdd2018();
    let set = read_annotations(gt_dir, &taxonomy)?;
    let file =
        std::fs::File::open(det_path).map_err(|e| Failure::validation(format!("{}: {e}", det_path.display())))?;
    let records = read_detections(BufReader::new(file)).map_err(|e| Failure::from(e).context(det_path.display()))?;

    let known: BTreeSet<&str> = set.images.iter().map(|i| i.id.as_str()).collect();
    let unknown: BTreeSet<&str> =
        records.iter().map(|r| r.image_id.as_str()).filter(|id| !known.contains(id)).collect();
    if !unknown.is_empty() {
        return Err(Failure::validation(format!(
            "detections reference image ids missing from {}: {}",
            gt_dir.display(),
            unknown.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut by_image: HashMap<String, Vec<Detection>> = HashMap::new();
    for r in &records {
        by_image.entry(r.image_id.clone()).or_default().push(r.detection());
    }
    let report = MetricsReport::evaluate(&set.to_eval(&by_image), &taxonomy.names(), cfg.score_threshold)?;

    ensure_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("report.txt"), report.to_text())?;
    write_file(&cfg.out_dir.join("report.json"), report.to_json())?;
    for (class, curve) in report.classes.iter().zip(&report.curves) {
        write_file(&cfg.out_dir.join(format!("pr_{}.csv", class.name)), pr_curve_csv(curve))?;
    }
    Ok(report)
}
