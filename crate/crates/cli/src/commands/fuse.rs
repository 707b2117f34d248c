use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use lsd2_core::io;
use lsd2_nn::checkpoint;
use lsd2_nn::{fuse_images, fusion_forward, Model, ModelKind};
use serde::{Deserialize, Serialize};

use super::required;
use crate::RunContext;

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FuseArgs {
    /// Short exposure image
    #[arg(long)]
    pub short: Option<PathBuf>,
    /// Long exposure (or restored) image
    #[arg(long)]
    pub long: Option<PathBuf>,
    /// Checkpoint of a trained fusion network
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Fused output image
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the weight map as a grayscale PNG
    #[arg(long)]
    pub dump_weights: Option<PathBuf>,
}

pub fn run(args: &FuseArgs, _ctx: RunContext) -> Result<()> {
    let ckpt = checkpoint::load(required(&args.checkpoint, "checkpoint")?)?;
    ckpt.expect_kind(ModelKind::Fusion)?;
    let Model::Fusion(net) = &ckpt.model else {
        unreachable!("kind checked above")
    };
    let short = io::read_image(required(&args.short, "short")?)?;
    let long = io::read_image(required(&args.long, "long")?)?;
    let weight = fusion_forward(net, &short, &long)?;
    let fused = fuse_images(&weight, &short, &long)?;
    let out = required(&args.out, "out")?;
    io::write_image(out, &fused)?;
    if let Some(p) = &args.dump_weights {
        let (w, h) = short.dims();
        io::write_atomic(p, &io::encode_gray_png(weight.data(), w, h))?;
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}
