//! Command-line front end of the LSD2 toolkit.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{overlay, ConfigFile};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Parser, Debug)]
#[command(name = "lsd2", version, about = "Synthetic short/long exposure pairs, joint deblurring and denoising, exposure fusion")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    /// JSON file with default settings (flags take precedence)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Common {
    /// Seed of every random draw [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: available cores]
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a dataset of short/long/target triplets
    Gen(commands::gen::GenArgs),
    /// Blur one image with a gyro-driven spatially varying PSF
    Blur(commands::blur::BlurArgs),
    /// Train the restoration or the fusion network
    Train(commands::train::TrainArgs),
    /// Run a trained restoration network on image pairs
    Restore(commands::restore::RestoreArgs),
    /// Score predictions against references (PSNR, SSIM)
    Eval(commands::eval::EvalArgs),
    /// Blend a short and a long exposure with a trained fusion network
    Fuse(commands::fuse::FuseArgs),
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Blur(_) => "blur",
            Command::Train(_) => "train",
            Command::Restore(_) => "restore",
            Command::Eval(_) => "eval",
            Command::Fuse(_) => "fuse",
        }
    }
}

/// Settings shared by every subcommand after resolution.
#[derive(Clone, Copy, Debug)]
pub struct RunContext {
    pub seed: u64,
    pub workers: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let common: Common = overlay(&cli.common, file.common())?;
    let ctx = RunContext {
        seed: common.seed.unwrap_or(DEFAULT_SEED),
        workers: match common.workers {
            Some(0) => anyhow::bail!("--workers must be at least 1"),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
    };
    let section = file.section(cli.command.section());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.workers)
        .build()
        .context("starting the worker pool")?;
    pool.install(|| match &cli.command {
        Command::Gen(a) => commands::gen::run(&overlay(a, section)?, ctx),
        Command::Blur(a) => commands::blur::run(&overlay(a, section)?, ctx),
        Command::Train(a) => commands::train::run(&overlay(a, section)?, ctx),
        Command::Restore(a) => commands::restore::run(&overlay(a, section)?, ctx),
        Command::Eval(a) => commands::eval::run(&overlay(a, section)?, ctx),
        Command::Fuse(a) => commands::fuse::run(&overlay(a, section)?, ctx),
    })
}
