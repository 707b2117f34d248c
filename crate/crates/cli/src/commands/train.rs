use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use lsd2_core::dataset::{self, Entry};
use lsd2_core::{io, Image};
use lsd2_nn::checkpoint;
use lsd2_nn::{loss_csv, train, FusionNetConfig, Model, ModelConfig, ModelKind, TrainConfig, TrainSample, TrainState, UNetConfig};
use serde::{Deserialize, Serialize};

use super::required;
use crate::RunContext;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset directory written by `gen`
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for `model.ckpt` and `loss.csv`
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// lsd2 or fusion [default: lsd2]
    #[arg(long)]
    pub arch: Option<String>,
    /// Initial learning rate [default: 5e-5 for lsd2, 2e-5 for fusion]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Epochs [default: 30 for lsd2, 5 for fusion]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Samples per optimizer step [default: 1]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Halve the learning rate every N epochs, 0 to disable [default: 10 for lsd2, off for fusion]
    #[arg(long)]
    pub lr_halving: Option<usize>,
    /// U-Net encoder levels [default: 3]
    #[arg(long)]
    pub depth: Option<usize>,
    /// U-Net features of the first level [default: 32]
    #[arg(long)]
    pub base: Option<usize>,
    /// Stop after this many optimizer steps
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Continue from a checkpoint written by an earlier run
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

pub(crate) fn parse_arch(s: Option<&str>) -> Result<ModelKind> {
    match s.unwrap_or("lsd2") {
        "lsd2" => Ok(ModelKind::Lsd2),
        "fusion" => Ok(ModelKind::Fusion),
        other => Err(anyhow!("unknown architecture `{other}` (expected lsd2 or fusion)")),
    }
}

/// Center crop to the largest size divisible by `m`.
fn crop_to_multiple(img: &Image, m: usize) -> Result<Image> {
    let (w, h) = img.dims();
    let (cw, ch) = (w - w % m, h - h % m);
    if cw == 0 || ch == 0 {
        bail!("{w}x{h} samples are smaller than the network's size multiple {m}");
    }
    Ok(img.crop((w - cw) / 2, (h - ch) / 2, cw, ch)?)
}

pub fn samples(entries: &[Entry], config: &ModelConfig) -> Result<Vec<TrainSample<f32>>> {
    let m = match config {
        ModelConfig::Lsd2(c) => c.size_multiple(),
        ModelConfig::Fusion(_) => 1,
    };
    entries
        .iter()
        .map(|e| {
            let crop = |img: &Image| crop_to_multiple(img, m);
            Ok(TrainSample::from_images(&crop(&e.short)?, &crop(&e.long)?, &crop(&e.target)?)?)
        })
        .collect()
}

fn fresh(args: &TrainArgs, kind: ModelKind, seed: u64) -> Result<(TrainConfig, TrainState<f32>)> {
    let model_config = match kind {
        ModelKind::Lsd2 => {
            let d = UNetConfig::default();
            ModelConfig::Lsd2(UNetConfig {
                depth: args.depth.unwrap_or(d.depth),
                base_features: args.base.unwrap_or(d.base_features),
                ..d
            })
        }
        ModelKind::Fusion => ModelConfig::Fusion(FusionNetConfig::default()),
    };
    let mut tc = TrainConfig::for_kind(kind);
    tc.seed = seed;
    if let Some(v) = args.lr {
        tc.initial_lr = v;
    }
    if let Some(v) = args.epochs {
        tc.epochs = v;
    }
    if let Some(v) = args.batch_size {
        tc.batch_size = v;
    }
    if let Some(v) = args.lr_halving {
        tc.lr_halving_period = (v > 0).then_some(v);
    }
    tc.max_steps = args.max_steps;
    tc.validate()?;
    let model = Model::new(model_config, seed)?;
    let state = TrainState::new(model, &tc);
    Ok((tc, state))
}

fn resumed(args: &TrainArgs, kind: ModelKind, path: &Path) -> Result<(TrainConfig, TrainState<f32>)> {
    let ckpt = checkpoint::load(path)?;
    ckpt.expect_kind(kind)?;
    let (mut tc, state) = ckpt
        .train
        .ok_or_else(|| anyhow!("{} holds no training state", path.display()))?;
    if args.lr.is_some() || args.batch_size.is_some() || args.lr_halving.is_some() || args.depth.is_some() || args.base.is_some() {
        bail!("only --epochs and --max-steps can change when resuming");
    }
    if let Some(v) = args.epochs {
        tc.epochs = v;
    }
    if args.max_steps.is_some() {
        tc.max_steps = args.max_steps;
    }
    tc.validate()?;
    Ok((tc, state))
}

pub fn run(args: &TrainArgs, ctx: RunContext) -> Result<()> {
    let data = required(&args.data, "data")?;
    let out = required(&args.out, "out")?;
    let kind = parse_arch(args.arch.as_deref())?;
    let (manifest, entries) = dataset::load(data)?;
    let fusion_data = manifest.fusion_mode;
    if fusion_data != (kind == ModelKind::Fusion) {
        bail!(
            "{} was generated {} --fusion-mode, which does not suit --arch {}",
            data.display(),
            if fusion_data { "with" } else { "without" },
            kind.name()
        );
    }
    let (tc, mut state) = match &args.resume {
        Some(p) => resumed(args, kind, p)?,
        None => fresh(args, kind, ctx.seed)?,
    };
    let samples = samples(&entries, &state.model.config())?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let loss_path = out.join(LOSS_FILE);
    eprintln!(
        "training {} on {} samples: {} epochs, lr {}, batch {}",
        kind.name(),
        samples.len(),
        tc.epochs,
        tc.initial_lr,
        tc.batch_size
    );
    train(&mut state, &samples, &tc, |st| {
        checkpoint::save(&ckpt_path, &st.model, Some((&tc, st)))?;
        io::write_atomic(&loss_path, loss_csv(&st.losses).as_bytes())?;
        eprintln!(
            "epoch {}/{}: loss {:.6} (step {})",
            st.epochs_done,
            tc.epochs,
            st.losses.last().copied().unwrap_or(f64::NAN),
            st.adam.step
        );
        Ok(())
    })?;
    // also covers a resume that had nothing left to do
    checkpoint::save(&ckpt_path, &state.model, Some((&tc, &state)))?;
    io::write_atomic(&loss_path, loss_csv(&state.losses).as_bytes())?;
    eprintln!("wrote {} and {}", ckpt_path.display(), loss_path.display());
    Ok(())
}
