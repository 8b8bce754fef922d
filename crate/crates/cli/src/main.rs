use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(
    name = "paflabel",
    version,
    about = "Label generation, correction, parsing and evaluation for PAF pose estimation"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-image work.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Confidence maps, PAFs and masks from annotation JSON, one file per image.
    Generate(GenerateArgs),
    /// Fuse ground-truth label files with teacher predictions.
    Correct(CorrectArgs),
    /// Decode label files into person poses.
    Parse(ParseArgs),
    /// OKS average precision of poses against annotations.
    Eval(EvalArgs),
    /// Synthetic scenes with injected annotation failures and oracle teacher output.
    Synth(SynthArgs),
    /// PNG images of label files or poses.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Image pixels per grid cell.
    #[arg(long)]
    pub stride: Option<f64>,
    /// Gaussian sigma in grid cells.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// PAF half-width in grid cells.
    #[arg(long)]
    pub limb_width: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub teacher: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// maps, pafs or both.
    #[arg(long)]
    pub scope: Option<paflabel::correction::CorrectionScope>,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub peak_threshold: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub min_limb_score: Option<f64>,
    #[arg(long)]
    pub min_positive_fraction: Option<f64>,
    #[arg(long)]
    pub min_parts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// key=value report file; defaults to the predictions path with an
    /// `.eval.txt` extension.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_scenes: Option<usize>,
    /// Persons per scene: a count `K` or a range `MIN-MAX`.
    #[arg(long)]
    pub persons: Option<String>,
    /// TOML file with corruption settings.
    #[arg(long)]
    pub corrupt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long, required_unless_present = "preds", conflicts_with = "preds")]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub preds: Option<PathBuf>,
    /// Annotation JSON giving canvas sizes for `--preds`.
    #[arg(long, requires = "preds")]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()?;
    pool.install(|| match cli.command {
        Command::Generate(a) => commands::generate(&mut cfg, &a),
        Command::Correct(a) => commands::correct(&mut cfg, &a),
        Command::Parse(a) => commands::parse(&mut cfg, &a),
        Command::Eval(a) => commands::eval(&cfg, &a),
        Command::Synth(a) => commands::synth(&mut cfg, &a),
        Command::Render(a) => commands::render(&cfg, &a),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
