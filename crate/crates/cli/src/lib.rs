//! Command-line experiment runner: dataset generation, training, batch
//! refinement, evaluation and ablation sweeps.

pub mod commands;
pub mod error;
pub mod store;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use plrefine::maskops::BinaryMask;
use plrefine::scenegen::DomainPreset;
use plrefine::segmenter::SegmenterKind;
use plrefine::trainer::EvalModel;

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "plrefine", version, about = "Pseudo-label refinement and self-training experiments")]
pub struct Cli {
    /// Root seed. Required for train, refine and sweep.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Training config JSON. Defaults are used when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (eval prints to stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset.
    Gen(GenArgs),
    /// Train on a source dataset, optionally self-training on generated data.
    Train(TrainArgs),
    /// Refine pseudo-label maps with a promptable segmenter.
    Refine(RefineArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Train and evaluate over a grid of (value, seed) cells.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_parser = parse_preset)]
    pub preset: DomainPreset,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled source dataset directory.
    #[arg(long)]
    pub source: PathBuf,
    /// Generated dataset directory. Without it phase 2 trains on source only.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    /// none | perfect | noisy:R[:FLIP] | empty
    #[arg(long, value_parser = parse_segmenter, default_value = "noisy:1")]
    pub segmenter: SegmenterArg,
    /// Images per evaluation preset.
    #[arg(long, default_value_t = 40)]
    pub eval_count: usize,
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
    #[arg(long, value_enum, default_value_t = EvalWeights::Student)]
    pub eval_model: EvalWeights,
    /// Share of pseudo-label pixels replaced by random classes before refinement.
    #[arg(long, default_value_t = 0.0)]
    pub salt: f64,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub pl_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long)]
    pub img_dir: PathBuf,
    #[arg(long, value_parser = parse_segmenter, default_value = "perfect")]
    pub segmenter: SegmenterArg,
    /// Minimum component area in pixels; accepts forms like 1e9.
    #[arg(long, value_parser = parse_count, default_value = "8")]
    pub tau: usize,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labeled dataset directory to evaluate on.
    #[arg(long, conflicts_with = "preset")]
    pub data: Option<PathBuf>,
    /// Render an evaluation set from this preset instead (uses --seed, default 0).
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<DomainPreset>,
    #[arg(long, default_value_t = 40)]
    pub count: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Number of seeds; cell seeds are --seed, --seed + 1, ...
    #[arg(long)]
    pub seeds: usize,
    #[arg(long, value_parser = parse_segmenter, default_value = "noisy:1")]
    pub segmenter: SegmenterArg,
    #[arg(long, default_value_t = 0.0)]
    pub salt: f64,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 200)]
    pub source_count: usize,
    #[arg(long, default_value_t = 40)]
    pub eval_count: usize,
    #[arg(long, value_parser = parse_preset, default_value = "target-both")]
    pub eval_preset: DomainPreset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    GenSize,
    Points,
    Tau,
    Finetune,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::GenSize => "gen-size",
            SweepAxis::Points => "points",
            SweepAxis::Tau => "tau",
            SweepAxis::Finetune => "finetune",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalWeights {
    Student,
    Teacher,
}

impl From<EvalWeights> for EvalModel {
    fn from(w: EvalWeights) -> Self {
        match w {
            EvalWeights::Student => EvalModel::Student,
            EvalWeights::Teacher => EvalModel::Teacher,
        }
    }
}

/// Pseudo-label treatment selected on the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum SegmenterArg {
    /// Raw teacher pseudo labels.
    None,
    Perfect,
    Noisy { radius: usize, flip_rate: f64 },
    /// Constant empty mask: every refined pixel ends up UNLABELED.
    Empty,
}

impl SegmenterArg {
    /// Segmenter for images of the given size, `None` for raw pseudo labels.
    pub fn kind(&self, width: usize, height: usize) -> Option<SegmenterKind> {
        match self {
            SegmenterArg::None => None,
            SegmenterArg::Perfect => Some(SegmenterKind::Perfect),
            SegmenterArg::Noisy { radius, flip_rate } => Some(SegmenterKind::Noisy {
                radius: *radius,
                flip_rate: *flip_rate,
            }),
            SegmenterArg::Empty => Some(SegmenterKind::Constant(BinaryMask::empty(width, height))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SegmenterArg::None => "none".into(),
            SegmenterArg::Perfect => "perfect".into(),
            SegmenterArg::Noisy { radius, flip_rate } => format!("noisy:{radius}:{flip_rate}"),
            SegmenterArg::Empty => "empty".into(),
        }
    }
}

pub fn parse_segmenter(s: &str) -> Result<SegmenterArg, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || format!("unknown segmenter `{s}`; expected none, perfect, noisy:R[:FLIP] or empty");
    match parts.as_slice() {
        ["none"] => Ok(SegmenterArg::None),
        ["perfect"] => Ok(SegmenterArg::Perfect),
        ["empty"] => Ok(SegmenterArg::Empty),
        ["noisy", rest @ ..] if (1..=2).contains(&rest.len()) => {
            let radius = rest[0].parse().map_err(|_| bad())?;
            let flip_rate: f64 = rest.get(1).map_or(Ok(0.0), |v| v.parse()).map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&flip_rate) {
                return Err(format!("flip rate {flip_rate} outside [0, 1]"));
            }
            Ok(SegmenterArg::Noisy { radius, flip_rate })
        }
        _ => Err(bad()),
    }
}

pub fn parse_preset(s: &str) -> Result<DomainPreset, String> {
    DomainPreset::parse(s).ok_or_else(|| {
        let names: Vec<&str> = DomainPreset::ALL.iter().map(|p| p.name()).collect();
        format!("unknown preset `{s}`; expected one of {}", names.join(", "))
    })
}

/// Non-negative integer, also written in float notation; saturates at `usize::MAX`.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 => Ok(if v >= usize::MAX as f64 { usize::MAX } else { v as usize }),
        _ => Err(format!("`{s}` is not a non-negative integer")),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Gen(args) => commands::gen(cli, args),
        Command::Train(args) => commands::train(cli, args),
        Command::Refine(args) => commands::refine(cli, args),
        Command::Eval(args) => commands::eval(cli, args),
        Command::Sweep(args) => commands::sweep(cli, args),
    }
}
