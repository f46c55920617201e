//! `defence`: synthesize scenes, train joint detectors, detect fence masks,
//! register frames, remove fences and score the results.
//!
//! Exit codes: 0 success, 1 failure, 2 completed with a degraded result
//! (currently only `detect` when no lattice could be formed).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "defence", version, about = "Multi-frame fence removal")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Configuration override, repeatable: --set lambda=5.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic scene bundle.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a joint classifier (svm) or network (cnn).
    Train(TrainArgs),
    /// Detect the fence lattice in one image.
    Detect(DetectArgs),
    /// Estimate per-frame transforms into the reference frame.
    Register(RegisterArgs),
    /// Fuse registered frames into one fence-free image.
    Defence(DefenceArgs),
    /// Print quality metrics as "key value" lines.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Backend {
    Svm,
    Cnn,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "svm")]
    pub backend: Backend,
    /// Scene bundle to harvest patches from, repeatable.
    #[arg(long)]
    pub bundle: Vec<PathBuf>,
    /// Directory of joint patches.
    #[arg(long, requires = "neg")]
    pub pos: Option<PathBuf>,
    /// Directory of non-joint patches.
    #[arg(long, requires = "pos")]
    pub neg: Option<PathBuf>,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Finite-difference gradient check before training (cnn only).
    #[arg(long)]
    pub gradient_check: bool,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Image to scan.
    #[arg(long, required_unless_present = "bundle")]
    pub image: Option<PathBuf>,
    /// Scene bundle; scans frame `--frame` and scores against its truth.
    #[arg(long, conflicts_with = "image")]
    pub bundle: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Output directory for mask.pgm, joints.txt and annotated.png.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    /// Directory of frame_NN images.
    #[arg(long)]
    pub frames: PathBuf,
    /// Directory of mask_NN fence masks; none means no fence.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Transform file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DefenceArgs {
    /// Directory of frame_NN images.
    #[arg(long)]
    pub frames: PathBuf,
    /// Directory of mask_NN fence masks.
    #[arg(long, required_unless_present = "model")]
    pub masks: Option<PathBuf>,
    /// Joint model used to detect the masks instead.
    #[arg(long, conflicts_with = "masks")]
    pub model: Option<PathBuf>,
    /// Transform file; registers the frames when absent.
    #[arg(long)]
    pub transforms: Option<PathBuf>,
    /// Reference frame index (overrides the config).
    #[arg(long)]
    pub reference: Option<usize>,
    /// Output image (.png or .pgm).
    #[arg(long)]
    pub out: PathBuf,
    /// Ground truth to score against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Write the data-cost volume here.
    #[arg(long)]
    pub dump_costs: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, requires = "truth")]
    pub result: Option<PathBuf>,
    #[arg(long, requires = "result")]
    pub truth: Option<PathBuf>,
    /// Restrict an extra RMSE to these pixels.
    #[arg(long, requires = "result")]
    pub mask: Option<PathBuf>,
    #[arg(long, requires = "gt_mask")]
    pub pred_mask: Option<PathBuf>,
    #[arg(long, requires = "pred_mask")]
    pub gt_mask: Option<PathBuf>,
    #[arg(long, requires = "gt_joints")]
    pub pred_joints: Option<PathBuf>,
    #[arg(long, requires = "pred_joints")]
    pub gt_joints: Option<PathBuf>,
}

fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &global.overrides {
        cfg.apply_pair(pair)?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Synth { out } => commands::synth(&cfg, &out),
        Command::Train(args) => commands::train(&cfg, &args),
        Command::Detect(args) => commands::detect(&cfg, &args),
        Command::Register(args) => commands::register(&cfg, &args),
        Command::Defence(args) => commands::defence(&cfg, &args),
        Command::Eval(args) => commands::eval(&cfg, &args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
