//! Command-line front end: `profile`, `detect`, `eval`, `augment`, `synth`, `selftest`.
//!
//! Exit codes: 0 success, 1 invalid input, 2 internal invariant violation
//! (including a failed self-test). Log verbosity follows `DMGDET_LOG`
//! (`error`, `warn`, `info`, `debug`; default `warn`).

pub mod augment;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod inputs;
pub mod profile;
pub mod selftest;
pub mod synth;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use augment::{augment, AugmentMode, AugmentOptions};
pub use config::{ModelSpec, Overrides, RunConfig};
pub use detect::{detect, detect_image, render};
pub use error::{CliResult, Failure};
pub use eval::evaluate;
pub use profile::{profile, ProfileReport};
pub use selftest::{selftest, SelftestReport};
pub use synth::{write_synthetic, SynthSummary};

pub const LOG_ENV: &str = "DMGDET_LOG";

#[derive(Debug, Parser)]
#[command(name = "dmgdet", version, about = "Road-damage detector: profile, detect, evaluate, augment, self-test")]
pub struct Cli {
    #[command(flatten)]
    pub shared: SharedArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SharedArgs {
    /// `key = value` run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for random weights, synthetic data and augmentation (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created on demand (default `out`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Minimum detection score, in (0, 1].
    #[arg(long, global = true)]
    pub score_thresh: Option<f64>,
    /// Suppression IoU, in (0, 1).
    #[arg(long, global = true)]
    pub nms_thresh: Option<f64>,
    /// Seeded random weights instead of a weight file.
    #[arg(long, global = true)]
    pub random_weights: bool,
    /// `default`, `tiny`, or a JSON detector configuration.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Weight file matching the model graph.
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-layer output shapes, parameters, MACs and attention cost.
    Profile,
    /// Detect objects in PPM images (files or directories); writes detections.tsv.
    Detect {
        /// PPM images, or directories scanned for `.ppm` files.
        inputs: Vec<PathBuf>,
        /// Also write annotated copies under renders/.
        #[arg(long)]
        render: bool,
    },
    /// Score a detections file against VOC annotations; writes report.txt, report.json, pr_<class>.csv.
    Eval {
        /// Directory of VOC XML ground truth.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Detections file, TSV or JSONL.
        #[arg(long)]
        detections: Option<PathBuf>,
    },
    /// Write augmented images with remapped VOC annotations.
    Augment {
        /// PPM images, or directories scanned for `.ppm` files.
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "none")]
        mode: AugmentMode,
        /// Annotation directory holding `<id>.xml` for each input.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Pixel scale factor for `--mode brightness`.
        #[arg(long, default_value_t = 1.0)]
        brightness: f32,
        /// Mixup weight of the first image of each pair.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Mosaic canvas side.
        #[arg(long, default_value_t = 416)]
        size: usize,
    },
    /// Generate a synthetic annotated dataset split into train/ and val/.
    Synth {
        /// Number of images to generate.
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Share of images placed in train/.
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
    /// Run the built-in invariant suites.
    Selftest,
}

fn overrides(shared: &SharedArgs) -> Overrides {
    Overrides {
        model: shared.model.clone(),
        weights: shared.weights.clone(),
        random_weights: shared.random_weights,
        seed: shared.seed,
        score_threshold: shared.score_thresh,
        nms_threshold: shared.nms_thresh,
        out_dir: shared.out_dir.clone(),
        ..Default::default()
    }
}

/// Executes a parsed command line, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let mut flags = overrides(&cli.shared);
    let print = |out: &mut dyn Write, text: &str| -> CliResult<()> { Ok(out.write_all(text.as_bytes())?) };
    match cli.command {
        Command::Profile => {
            let cfg = RunConfig::resolve(cli.shared.config.as_deref(), &flags)?;
            print(out, &profile(&cfg)?.to_text())
        }
        Command::Detect { inputs, render } => {
            flags.inputs = inputs;
            let cfg = RunConfig::resolve(cli.shared.config.as_deref(), &flags)?;
            let outcome = detect(&cfg, render)?;
            print(
                out,
                &format!(
                    "{} detections in {} images written to {}\n",
                    outcome.records.len(),
                    outcome.images,
                    cfg.out_dir.join("detections.tsv").display()
                ),
            )
        }
        Command::Eval { annotations, detections } => {
            flags.annotations = annotations;
            flags.detections = detections;
            let cfg = RunConfig::resolve(cli.shared.config.as_deref(), &flags)?;
            print(out, &evaluate(&cfg)?.to_text())
        }
        Command::Augment { inputs, mode, annotations, brightness, lambda, size } => {
            flags.inputs = inputs;
            flags.annotations = annotations;
            let cfg = RunConfig::resolve(cli.shared.config.as_deref(), &flags)?;
            let written = augment(&cfg, &AugmentOptions { mode, brightness, lambda, size })?;
            for (id, boxes) in &written {
                print(out, &format!("{id}\t{boxes} boxes\n"))?;
            }
            Ok(())
        }
        Command::Synth { count, train_fraction } => {
            let cfg = RunConfig::resolve(cli.shared.config.as_deref(), &flags)?;
            let s = write_synthetic(&cfg.out_dir, count, cfg.seed, train_fraction)?;
            print(
                out,
                &format!("{} train and {} val images under {}\n", s.train.len(), s.val.len(), cfg.out_dir.display()),
            )
        }
        Command::Selftest => {
            let cfg = RunConfig::resolve(cli.shared.config.as_deref(), &flags)?;
            let report = selftest(cfg.weights.as_ref(), &cfg.model);
            print(out, &report.to_text())?;
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::internal("self-test failed"))
            }
        }
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli, out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = writeln!(err, "{f}");
            f.to_exit_code()
        }
    }
}
