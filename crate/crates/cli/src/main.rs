//! `rbgs`: build background models, subtract backgrounds, evaluate, and
//! generate or benchmark synthetic scenes.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use roadside_bgs::pointcloud::PcdEncoding;
use roadside_bgs::Error;

use crate::config::RunArgs;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const INTERNAL: u8 = 3;

    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: Self::USAGE, message: message.into() }
    }
    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: Self::DATA, message: message.into() }
    }
    pub fn internal(message: impl Into<String>) -> Self {
        CliError { code: Self::INTERNAL, message: message.into() }
    }

    pub fn from_core(e: Error) -> Self {
        match e {
            Error::InvalidParam(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Encoding {
    Ascii,
    Binary,
}

impl From<Encoding> for PcdEncoding {
    fn from(e: Encoding) -> Self {
        match e {
            Encoding::Ascii => PcdEncoding::Ascii,
            Encoding::Binary => PcdEncoding::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Intersection,
    Uniform,
    Crowd,
}

#[derive(Debug, Parser)]
#[command(name = "rbgs", version, about = "Background subtraction for static roadside lidar")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a Gaussian distribution grid from background scans
    BuildGdg {
        /// background scans (.pcd/.csv) or directories holding them
        #[arg(required = true)]
        scans: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Split one scan into foreground and background
    Filter {
        scan: PathBuf,
        #[arg(long)]
        gdg: PathBuf,
        /// writes <prefix>_fg.pcd, <prefix>_bg.pcd and <prefix>_partition.json
        #[arg(long)]
        out_prefix: PathBuf,
        #[arg(long, value_enum, default_value = "binary")]
        encoding: Encoding,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Filter a directory of scans and score them against labels
    Eval {
        #[arg(long)]
        scans: PathBuf,
        /// labeled clouds or JSON box files, matched to scans by file stem
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        gdg: PathBuf,
        /// also write the report here
        #[arg(long)]
        out: Option<PathBuf>,
        /// count background as the positive class (diagnostic)
        #[arg(long)]
        background_positive: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Materialize a synthetic scene
    Synth {
        /// scene spec JSON; omit to use --preset
        spec: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "spec")]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// pedestrians in the crowd preset
        #[arg(long, default_value_t = 20)]
        crowd_size: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "binary")]
        encoding: Encoding,
    },
    /// Time each pipeline stage over a sweep of scan sizes
    Bench {
        spec: Option<PathBuf>,
        #[arg(long, value_enum, conflicts_with = "spec")]
        preset: Option<Preset>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        crowd_size: usize,
        /// comma-separated point counts
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        /// CSV destination (size,stage,ms)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var("RBGS_WORKERS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("RBGS_WORKERS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::internal(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_workers()?;
    match cli.command {
        Command::BuildGdg { scans, out, run } => commands::cmd_build_gdg(&scans, &out, run),
        Command::Filter { scan, gdg, out_prefix, encoding, run } => {
            commands::cmd_filter(&scan, &gdg, &out_prefix, encoding.into(), run)
        }
        Command::Eval { scans, labels, gdg, out, background_positive, run } => {
            commands::cmd_eval(&scans, &labels, &gdg, out.as_deref(), background_positive, run)
        }
        Command::Synth { spec, preset, seed, crowd_size, out, encoding } => {
            let spec = commands::scene_spec(spec.as_deref(), preset, seed, crowd_size)?;
            commands::cmd_synth(&spec, &out, encoding.into())
        }
        Command::Bench { spec, preset, seed, crowd_size, sizes, repetitions, out, run } => {
            let spec = commands::scene_spec(spec.as_deref(), preset, seed, crowd_size)?;
            commands::cmd_bench(&spec, &sizes, repetitions, &out, run)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { CliError::USAGE } else { 0 });
        }
    };
    let outcome = std::panic::catch_unwind(|| run(cli))
        .unwrap_or_else(|_| Err(CliError::internal("internal error (see panic message above)")));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rbgs: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
