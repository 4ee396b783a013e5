// Negated comparisons deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vocalid::separator::SkipKind;

use data::SplitFilter;

#[derive(Parser)]
#[command(name = "vocalid", version, about = "Singer identification: segmentation, separation, classification")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for generation, training and fold assignment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-song work (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset with its three manifests.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        singers: usize,
        #[arg(long, default_value_t = 20)]
        clips_per_singer: usize,
        #[arg(long, default_value_t = 10.0)]
        clip_seconds: f64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Train the vocal/non-vocal segmenter.
    TrainSeg {
        #[command(flatten)]
        common: TrainArgs,
        #[arg(long, default_value_t = 40)]
        steps_per_epoch: usize,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// Train the vocal separator.
    TrainSep {
        #[command(flatten)]
        common: TrainArgs,
        #[arg(long, value_enum, default_value = "gru")]
        skip_kind: SkipKindArg,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, default_value_t = 128)]
        crop_frames: usize,
    },
    /// Train the singer classifier.
    TrainCls {
        #[command(flatten)]
        common: TrainArgs,
        #[command(flatten)]
        vocals: VocalArgs,
        /// Features from the mixture instead of the separated vocal.
        #[arg(long)]
        raw: bool,
    },
    /// Print vocal/non-vocal segments of a song.
    Segment {
        #[arg(long = "in")]
        input: PathBuf,
        /// Segmenter bundle (overrides the config).
        #[arg(long)]
        seg_model: Option<PathBuf>,
    },
    /// Write the estimated vocal of a song.
    Separate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Separator bundle (overrides the config).
        #[arg(long)]
        sep_model: Option<PathBuf>,
    },
    /// Identify the singer of a song with the full pipeline.
    Identify {
        #[arg(long = "in")]
        input: PathBuf,
        /// Classify mixture features, bypassing separation.
        #[arg(long)]
        raw: bool,
    },
    /// Frame precision with and without HMM smoothing.
    EvalSeg {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long)]
        seg_model: PathBuf,
    },
    /// SI-SDR of separated vocals against the mixture baseline.
    EvalSep {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long)]
        sep_model: PathBuf,
    },
    /// Stratified k-fold classification with separated and raw features,
    /// or scoring of a predictions file.
    EvalCls {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, required_unless_present = "predictions")]
        data: Option<PathBuf>,
        /// JSON lines of {"truth": name, "predicted": name}.
        #[arg(long, conflicts_with = "data")]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        vocals: VocalArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitFilter,
    },
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training manifest (JSON lines).
    #[arg(long)]
    pub data: PathBuf,
    /// Output bundle directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitFilter,
    /// Training log path (default: training_log.json next to the bundle).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitFilter,
}

/// Where vocal intervals and separated vocals come from.
#[derive(Args)]
pub struct VocalArgs {
    /// Segmenter bundle used to find vocal intervals.
    #[arg(long)]
    pub seg_model: Option<PathBuf>,
    /// Segmentation manifest whose ground-truth intervals replace the segmenter.
    #[arg(long, conflicts_with = "seg_model")]
    pub truth: Option<PathBuf>,
    /// Separator bundle.
    #[arg(long)]
    pub sep_model: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum SkipKindArg {
    Gru,
    Lstm,
}

impl From<SkipKindArg> for SkipKind {
    fn from(k: SkipKindArg) -> Self {
        match k {
            SkipKindArg::Gru => SkipKind::Gru,
            SkipKindArg::Lstm => SkipKind::Lstm,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli.command, &cli.global) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
