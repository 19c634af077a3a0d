//! `boneair`: corpus synthesis, training, enhancement, evaluation and
//! significance testing from the command line.

mod commands;
mod failure;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use boneair::corpus::Split;
use clap::{Args, Parser, Subcommand};

use failure::Failure;
use settings::{load_file, Arch, EnhanceSettings, EvaluateSettings, SynthSettings, TrainSettings, TtestSettings};

#[derive(Parser)]
#[command(name = "boneair", version, about = "Bone/air-conducted speech enhancement")]
struct Cli {
    /// Worker threads for per-record parallel work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a paired ACM/BCM corpus and its manifest.
    Synth(SynthArgs),
    /// Train a model or the late-fusion pipeline.
    Train(TrainArgs),
    /// Enhance one recording.
    Enhance(EnhanceArgs),
    /// Score systems on a manifest split.
    Evaluate(EvaluateArgs),
    /// Matched-pair t-test between two score tables.
    Ttest(TtestArgs),
}

/// Settings file (TOML, or a previous run.json).
#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    val: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    bcm_cutoff_hz: Option<f64>,
    #[arg(long)]
    bcm_order: Option<usize>,
    /// Utterance length in seconds.
    #[arg(long)]
    duration_s: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_enum)]
    arch: Option<Arch>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// End-to-end tuning after the fusion stage (lf only).
    #[arg(long)]
    fine_tune: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    segment_length: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long)]
    val_segments: Option<usize>,
    #[arg(long)]
    train_records: Option<usize>,
    #[arg(long)]
    val_records: Option<usize>,
}

#[derive(Args)]
struct EnhanceArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// A checkpoint, or a late-fusion descriptor or directory.
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    in_acm: Option<PathBuf>,
    #[arg(long)]
    in_bcm: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the output samples as CSV next to the WAV.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated: noisy, bcm, fcn_a=CKPT, fcn_b=CKPT, fcn_ef=CKPT,
    /// lf=DIR, wav:NAME=DIR.
    #[arg(long, value_delimiter = ',')]
    systems: Option<Vec<String>>,
    #[arg(long)]
    split: Option<Split>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV with header id,system,pesq.
    #[arg(long)]
    external_pesq: Option<PathBuf>,
}

#[derive(Args)]
struct TtestArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    rows_a: Option<PathBuf>,
    #[arg(long)]
    rows_b: Option<PathBuf>,
    #[arg(long)]
    column: Option<String>,
    /// System to read from --rows-a when it holds several.
    #[arg(long)]
    system_a: Option<String>,
    #[arg(long)]
    system_b: Option<String>,
    /// Also write the result JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_some<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth(a) => {
            let mut s: SynthSettings = load_file(a.config.config.as_deref(), "synth")?;
            set_some(&mut s.out_dir, a.out_dir);
            set(&mut s.seed, a.seed);
            set(&mut s.train, a.train);
            set(&mut s.val, a.val);
            set(&mut s.test, a.test);
            set(&mut s.bcm_cutoff_hz, a.bcm_cutoff_hz);
            set(&mut s.bcm_order, a.bcm_order);
            set(&mut s.duration_s, a.duration_s);
            commands::synth(&s)
        }
        Command::Train(a) => {
            let mut s: TrainSettings = load_file(a.config.config.as_deref(), "train")?;
            set_some(&mut s.arch, a.arch);
            set_some(&mut s.manifest, a.manifest);
            set_some(&mut s.out, a.out);
            s.fine_tune |= a.fine_tune;
            let h = &mut s.hyper;
            set(&mut h.lr, a.lr);
            set(&mut h.batch_size, a.batch_size);
            set(&mut h.max_epochs, a.max_epochs);
            set(&mut h.segment_length, a.segment_length);
            set(&mut h.seed, a.seed);
            set(&mut h.patience, a.patience);
            set_some(&mut h.steps_per_epoch, a.steps_per_epoch);
            set_some(&mut h.val_segments, a.val_segments);
            set_some(&mut h.train_records, a.train_records);
            set_some(&mut h.val_records, a.val_records);
            commands::train(&s)
        }
        Command::Enhance(a) => {
            let mut s: EnhanceSettings = load_file(a.config.config.as_deref(), "enhance")?;
            set_some(&mut s.system, a.system);
            set_some(&mut s.in_acm, a.in_acm);
            set_some(&mut s.in_bcm, a.in_bcm);
            set_some(&mut s.out, a.out);
            s.csv |= a.csv;
            commands::enhance(&s)
        }
        Command::Evaluate(a) => {
            let mut s: EvaluateSettings = load_file(a.config.config.as_deref(), "evaluate")?;
            set_some(&mut s.manifest, a.manifest);
            set(&mut s.systems, a.systems);
            set(&mut s.split, a.split);
            set_some(&mut s.out, a.out);
            set_some(&mut s.external_pesq, a.external_pesq);
            commands::evaluate(&s)
        }
        Command::Ttest(a) => {
            let mut s: TtestSettings = load_file(a.config.config.as_deref(), "ttest")?;
            set_some(&mut s.rows_a, a.rows_a);
            set_some(&mut s.rows_b, a.rows_b);
            set(&mut s.column, a.column);
            set_some(&mut s.system_a, a.system_a);
            set_some(&mut s.system_b, a.system_b);
            set_some(&mut s.out, a.out);
            commands::ttest(&s)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(Failure::USAGE);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(Failure::USAGE);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
