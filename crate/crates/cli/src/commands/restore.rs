use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use lsd2_core::dataset;
use lsd2_core::io;
use lsd2_nn::checkpoint;
use lsd2_nn::ModelKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::required;
use crate::RunContext;

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RestoreArgs {
    /// Checkpoint of a trained lsd2 network
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory; restores every entry into `--out/<index>.<ext>`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Short exposure (single-pair mode)
    #[arg(long)]
    pub short: Option<PathBuf>,
    /// Long exposure (single-pair mode)
    #[arg(long)]
    pub long: Option<PathBuf>,
    /// Output directory (dataset mode) or image file (single-pair mode)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &RestoreArgs, _ctx: RunContext) -> Result<()> {
    let ckpt = checkpoint::load(required(&args.checkpoint, "checkpoint")?)?;
    ckpt.expect_kind(ModelKind::Lsd2)?;
    let model = ckpt.model;
    let out = required(&args.out, "out")?;
    match (&args.data, &args.short, &args.long) {
        (Some(dir), None, None) => {
            let (manifest, entries) = dataset::load(dir)?;
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            entries.par_iter().try_for_each(|e| -> Result<()> {
                let pred = model.predict(&e.short, &e.long)?;
                io::write_image(&out.join(format!("{:06}.{}", e.index, manifest.image_ext)), &pred)?;
                Ok(())
            })?;
            eprintln!("restored {} samples into {}", entries.len(), out.display());
        }
        (None, Some(s), Some(l)) => {
            let pred = model.predict(&io::read_image(s)?, &io::read_image(l)?)?;
            io::write_image(out, &pred)?;
            eprintln!("wrote {}", out.display());
        }
        _ => bail!("give either --data or both --short and --long"),
    }
    Ok(())
}
