//! Run configuration: built-in defaults, then a `key = value` file, then flags.
//!
//! File grammar: one `key = value` pair per line; blank lines and text after
//! `#` are ignored; keys may not repeat. Relative paths are resolved against
//! the file's directory. Keys:
//!
//! | key | value |
//! |---|---|
//! | `model` | `default`, `tiny`, or a JSON detector configuration file |
//! | `weights` | weight file written by the detector's saver |
//! | `random_weights` | `true` / `false` |
//! | `seed` | unsigned integer |
//! | `score_thresh` | in (0, 1] |
//! | `nms_thresh` | in (0, 1) |
//! | `out_dir` | output directory, created on demand |
//! | `inputs` | comma-separated images or directories of `.ppm` files |
//! | `annotations` | directory of VOC XML files |
//! | `detections` | detections file (TSV or JSONL) |

use std::path::{Path, PathBuf};

use dmgdet_core::detector::DetectorConfig;

use crate::error::{CliResult, Failure};

pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.25;
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.45;

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Default,
    Tiny,
    File(PathBuf),
}

impl ModelSpec {
    pub fn parse(value: &str, base: &Path) -> Self {
        match value {
            "default" => ModelSpec::Default,
            "tiny" => ModelSpec::Tiny,
            path => ModelSpec::File(base.join(path)),
        }
    }

    pub fn load(&self) -> CliResult<DetectorConfig> {
        let cfg = match self {
            ModelSpec::Default => DetectorConfig::default(),
            ModelSpec::Tiny => DetectorConfig::tiny(),
            ModelSpec::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub weights: Option<PathBuf>,
    pub random_weights: bool,
    pub seed: u64,
    pub score_threshold: f64,
    pub nms_threshold: f64,
    pub out_dir: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub detections: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Default,
            weights: None,
            random_weights: false,
            seed: 0,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            out_dir: PathBuf::from("out"),
            inputs: Vec::new(),
            annotations: None,
            detections: None,
        }
    }
}

/// Flag values; `None` leaves the file or default value in place.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub weights: Option<PathBuf>,
    pub random_weights: bool,
    pub seed: Option<u64>,
    pub score_threshold: Option<f64>,
    pub nms_threshold: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub detections: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_text(text: &str, origin: &str, base: &Path) -> CliResult<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Failure::validation(format!("{origin} line {}: {msg}", idx + 1));
            let (key, value) =
                line.split_once('=').ok_or_else(|| at(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(at(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value, base).map_err(at)?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let number = |v: &str| v.parse::<f64>().map_err(|_| format!("`{key}` expects a number, got `{v}`"));
        match key {
            "model" => self.model = ModelSpec::parse(value, base),
            "weights" => self.weights = Some(base.join(value)),
            "random_weights" => {
                self.random_weights =
                    value.parse().map_err(|_| format!("`{key}` expects true or false, got `{value}`"))?
            }
            "seed" => {
                self.seed = value.parse().map_err(|_| format!("`{key}` expects an unsigned integer, got `{value}`"))?
            }
            "score_thresh" => self.score_threshold = number(value)?,
            "nms_thresh" => self.nms_threshold = number(value)?,
            "out_dir" => self.out_dir = base.join(value),
            "inputs" => {
                self.inputs = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| base.join(s)).collect()
            }
            "annotations" => self.annotations = Some(base.join(value)),
            "detections" => self.detections = Some(base.join(value)),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Defaults, then the file at `path` if any, then `flags`; thresholds are validated.
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| Failure::validation(format!("{}: {e}", p.display())))?;
                Self::from_text(&text, &p.display().to_string(), p.parent().unwrap_or(Path::new("")))?
            }
            None => Self::default(),
        };
        if let Some(m) = &flags.model {
            cfg.model = ModelSpec::parse(m, Path::new(""));
        }
        if flags.weights.is_some() {
            cfg.weights = flags.weights.clone();
        }
        cfg.random_weights |= flags.random_weights;
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(t) = flags.score_threshold {
            cfg.score_threshold = t;
        }
        if let Some(t) = flags.nms_threshold {
            cfg.nms_threshold = t;
        }
        if let Some(d) = &flags.out_dir {
            cfg.out_dir = d.clone();
        }
        if !flags.inputs.is_empty() {
            cfg.inputs = flags.inputs.clone();
        }
        if flags.annotations.is_some() {
            cfg.annotations = flags.annotations.clone();
        }
        if flags.detections.is_some() {
            cfg.detections = flags.detections.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// A score threshold of 1 is allowed and keeps only saturated detections.
    pub fn validate(&self) -> CliResult<()> {
        if !(self.score_threshold > 0.0 && self.score_threshold <= 1.0) {
            return Err(Failure::validation(format!("score threshold {} outside (0, 1]", self.score_threshold)));
        }
        if !(self.nms_threshold > 0.0 && self.nms_threshold < 1.0) {
            return Err(Failure::validation(format!("NMS threshold {} outside (0, 1)", self.nms_threshold)));
        }
        Ok(())
    }
}

/// Fails with the first path that does not exist.
pub fn require_exists<'a>(paths: impl IntoIterator<Item = &'a Path>) -> CliResult<()> {
    for p in paths {
        if !p.exists() {
            return Err(Failure::validation(format!("{} does not exist", p.display())));
        }
    }
    Ok(())
}
