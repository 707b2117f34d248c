use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use lsd2_core::dataset::{self, Role, MANIFEST};
use lsd2_core::metrics::{evaluate_dataset, evaluate_pairs, MetricReport};
use lsd2_core::{io, Error};
use serde::{Deserialize, Serialize};

use super::required;
use crate::RunContext;

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    /// Directory of predicted images
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Directory of reference images with the same file names, or a dataset
    /// directory whose targets are matched to predictions named `<index>.<ext>`
    #[arg(long = "ref")]
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    /// Match each prediction's channel means to the reference before scoring
    #[arg(long)]
    pub color_match: bool,
    /// Write the report JSON here as well as to stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn stem(name: &str) -> &str {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name)
}

/// Scores `<index>.<ext>` predictions against the targets of a dataset.
pub fn evaluate_against_dataset(pred_dir: &Path, data_dir: &Path, normalize: bool) -> Result<MetricReport> {
    let manifest = dataset::read_manifest(data_dir)?;
    let preds: BTreeMap<String, String> = io::list_images(pred_dir)?
        .into_iter()
        .map(|n| (stem(&n).to_string(), n))
        .collect();
    let refs: BTreeMap<String, usize> = (0..manifest.count).map(|i| (format!("{i:06}"), i)).collect();
    let only_pred: Vec<String> = preds
        .iter()
        .filter(|(k, _)| !refs.contains_key(*k))
        .map(|(_, n)| n.clone())
        .collect();
    let only_ref: Vec<String> = refs
        .iter()
        .filter(|(k, _)| !preds.contains_key(*k))
        .map(|(_, &i)| {
            dataset::entry_path(data_dir, i, Role::Target, &manifest.image_ext)
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    if !only_pred.is_empty() || !only_ref.is_empty() {
        return Err(Error::UnmatchedFiles { only_pred, only_ref }.into());
    }
    let pairs = preds
        .iter()
        .map(|(key, name)| {
            let target = dataset::entry_path(data_dir, refs[key], Role::Target, &manifest.image_ext);
            Ok((name.clone(), io::read_image(&pred_dir.join(name))?, io::read_image(&target)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate_pairs(&pairs, normalize)?)
}

pub fn run(args: &EvalArgs, _ctx: RunContext) -> Result<()> {
    let pred = required(&args.pred, "pred")?;
    let reference = required(&args.reference, "ref")?;
    let report = if reference.join(MANIFEST).is_file() {
        evaluate_against_dataset(pred, reference, args.color_match)?
    } else {
        evaluate_dataset(pred, reference, args.color_match)?
    };
    let json = report.to_json();
    if let Some(p) = &args.out {
        io::write_atomic(p, format!("{json}\n").as_bytes())?;
    }
    println!("{json}");
    eprintln!(
        "{} images: mean PSNR {:.3} dB, mean SSIM {:.4}",
        report.count, report.mean_psnr_db, report.mean_ssim
    );
    Ok(())
}
