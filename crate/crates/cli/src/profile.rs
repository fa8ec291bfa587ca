use std::fmt::Write as _;

use dmgdet_core::detector::{Detector, LayerProfile};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::inputs::{ensure_dir, write_file};

#[derive(Debug, Serialize)]
pub struct ProfileReport {
    pub input_size: usize,
    pub total_params: usize,
    pub total_macs: u64,
    pub layers: Vec<LayerProfile>,
}

impl ProfileReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>16} {:>10} {:>14} {:>16} {:>16} {:>8}",
            "layer", "output", "params", "MACs", "MSA cost", "W-MSA cost", "ratio"
        );
        for r in &self.layers {
            let shape = r.output_shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("×");
            let (msa, wmsa, ratio) = match r.attention {
                Some(c) => (c.msa.to_string(), c.w_msa.to_string(), format!("{:.2}", c.ratio())),
                None => ("-".into(), "-".into(), "-".into()),
            };
            let _ = writeln!(
                out,
                "{:<28} {:>16} {:>10} {:>14} {:>16} {:>16} {:>8}",
                r.name, shape, r.params, r.macs, msa, wmsa, ratio
            );
        }
        let _ = writeln!(out, "{:<28} {:>16} {:>10} {:>14}", "total", "", self.total_params, self.total_macs);
        out
    }
}

pub fn profile(cfg: &RunConfig) -> CliResult<ProfileReport> {
    let model = cfg.model.load()?;
    let detector = Detector::build(&model)?;
    let layers = detector.profile()?;
    let report = ProfileReport {
        input_size: model.input_size,
        total_params: layers.iter().map(|r| r.params).sum(),
        total_macs: layers.iter().map(|r| r.macs).sum(),
        layers,
    };
    ensure_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("profile.txt"), report.to_text())?;
    let json = serde_json::to_string_pretty(&report).expect("profile serializes") + "\n";
    write_file(&cfg.out_dir.join("profile.json"), json)?;
    Ok(report)
}
