//! `reinpaint`: reference-free inpainting evaluation from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reinpaint_core::metrics::SubMetric;
use reinpaint_core::pipeline::Objective;
use reinpaint_core::report::Format;

mod commands;
mod config;

use commands::{parse_band, parse_format, parse_metric, parse_objective, parse_size};

#[derive(Parser, Debug)]
#[command(name = "reinpaint", version, about = "Score inpainting methods by re-inpainting their output")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write seeded first-pass or patch masks plus an index.json.
    GenMasks(GenMasksArgs),
    /// Write a seeded synthetic image corpus.
    GenCorpus(GenCorpusArgs),
    /// Inpaint one image with one backend.
    Inpaint(InpaintArgs),
    /// Score first-pass methods over a corpus.
    Evaluate(EvaluateArgs),
    /// Check that natural fills score better than blend and noise fills.
    ValidateSynth(SynthArgs),
    /// Rebuild a report from a records file.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MaskKind {
    /// Brush strokes and boxes.
    Normal,
    /// Grid of randomly masked square patches.
    Patch,
}

#[derive(Args, Debug)]
pub struct GenMasksArgs {
    #[arg(long, value_enum)]
    pub kind: MaskKind,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// WxH
    #[arg(long, value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Accepted masked-fraction band for normal masks, as LO,HI.
    #[arg(long, value_parser = parse_band)]
    pub ratio_band: Option<[f64; 2]>,
    /// Patch masking probability (default 0.4).
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Patch side in pixels (default 32 scaled from 512 px).
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[arg(long, value_parser = parse_size, default_value = "128x128")]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    /// Builtin name (diffusion, mean-fill, jitter, noise, blend, oracle), an
    /// http(s) URL, or a JSON backend spec.
    #[arg(long)]
    pub backend: String,
    #[arg(long)]
    pub image: PathBuf,
    /// 255 = keep, 0 = fill.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Source image for the blend backend.
    #[arg(long)]
    pub donor: Option<PathBuf>,
}

/// Flags that override keys of the run config.
#[derive(Args, Debug, Default)]
pub struct EvalFlags {
    /// Objective(s) to compute; repeat or separate with commas.
    #[arg(long, value_parser = parse_objective, value_delimiter = ',')]
    pub objective: Vec<Objective>,
    /// Run seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of second-pass masks per image.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<SubMetric>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Concurrent work units (default: all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// TOML or JSON run config.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "reinpaint-out")]
    pub out: PathBuf,
    /// Keep finished records and run only what is missing or failed.
    #[arg(long)]
    pub resume: bool,
    /// Report formats (json, csv, text); default all.
    #[arg(long, value_parser = parse_format, value_delimiter = ',')]
    pub format: Vec<Format>,
    /// Sample instead of population standard deviation.
    #[arg(long)]
    pub sample_std: bool,
    #[command(flatten)]
    pub flags: EvalFlags,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Run config; its first `first` backend is the natural method.
    /// Without one, diffusion is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "reinpaint-synth")]
    pub out: PathBuf,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Noise downsampling factor.
    #[arg(long)]
    pub down_factor: Option<usize>,
    /// Seed for choosing blend donors.
    #[arg(long)]
    pub donor_seed: Option<u64>,
    /// Exit with status 1 when the ordering does not hold.
    #[arg(long)]
    pub strict: bool,
    #[command(flatten)]
    pub flags: EvalFlags,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub records: PathBuf,
    /// Output directory (default: next to the records).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format, value_delimiter = ',')]
    pub format: Vec<Format>,
    #[arg(long)]
    pub sample_std: bool,
    #[arg(long, default_value_t = reinpaint_core::report::DEFAULT_BINS)]
    pub bins: usize,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::GenMasks(a) => commands::gen_masks(a),
        Command::GenCorpus(a) => commands::gen_corpus(a),
        Command::Inpaint(a) => commands::inpaint_cmd(a, commands::http_timeout_ms()?),
        Command::Evaluate(a) => commands::evaluate(a, commands::http_timeout_ms()?),
        Command::ValidateSynth(a) => commands::validate_synth_cmd(a, commands::http_timeout_ms()?),
        Command::Report(a) => commands::report_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", commands::describe(&e));
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
