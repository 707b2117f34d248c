//! PSNR / SSIM scoring with optional per-channel color matching.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};
use crate::io;

/// Reported PSNR of identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psnr {
    /// Decibels; [`PSNR_CAP_DB`] when `exact`.
    pub db: f64,
    /// The images were identical (infinite PSNR).
    pub exact: bool,
}

pub fn mse(pred: &Image, reference: &Image) -> Result<f64> {
    pred.same_dims(reference)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / pred.data().len() as f64)
}

/// `10 log10(max^2 / MSE)` over all pixels and channels. Symmetric.
pub fn psnr(pred: &Image, reference: &Image, max_val: f64) -> Result<Psnr> {
    let m = mse(pred, reference)?;
    if m == 0.0 {
        return Ok(Psnr {
            db: PSNR_CAP_DB,
            exact: true,
        });
    }
    Ok(Psnr {
        db: 10.0 * (max_val * max_val / m).log10(),
        exact: false,
    })
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" Gaussian filtering of a `w`x`h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = g.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                acc += gk * horiz[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
    let g = gaussian_window();
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, w, h, &g);
    let mu_y = filter_valid(y, w, h, &g);
    let e_xx = filter_valid(&xx, w, h, &g);
    let e_yy = filter_valid(&yy, w, h, &g);
    let e_xy = filter_valid(&xy, w, h, &g);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let var_x = e_xx[i] - mx * mx;
        let var_y = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    total / n as f64
}

fn plane(img: &Image, c: usize) -> Vec<f64> {
    img.data()
        .iter()
        .skip(c)
        .step_by(CHANNELS)
        .map(|&v| v as f64)
        .collect()
}

/// Single-scale SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03,
/// unit dynamic range) over the valid region, averaged over channels.
pub fn ssim(pred: &Image, reference: &Image) -> Result<f64> {
    pred.same_dims(reference)?;
    let (w, h) = pred.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let total: f64 = (0..CHANNELS)
        .map(|c| ssim_plane(&plane(pred, c), &plane(reference, c), w, h))
        .sum();
    Ok(total / CHANNELS as f64)
}

/// Scales each channel of `img` so its mean matches `reference`, then clips
/// to `[0, 1]`. Channels with zero mean are left alone.
pub fn channel_mean_match(img: &Image, reference: &Image) -> Result<Image> {
    img.same_dims(reference)?;
    let ours = img.channel_means();
    let theirs = reference.channel_means();
    let gains: [f64; CHANNELS] =
        std::array::from_fn(|c| if ours[c] > 0.0 { theirs[c] / ours[c] } else { 1.0 });
    Ok(img.map(|v, c| ((v as f64 * gains[c]) as f32).clamp(0.0, 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Prediction and reference were identical; `psnr_db` is the cap.
    #[serde(default)]
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub images: Vec<ImageScore>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub count: usize,
    pub normalized: bool,
}

/// Recursive pairwise summation; the result depends only on the order of
/// `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

pub fn score_pair(name: &str, pred: &Image, reference: &Image, normalize: bool) -> Result<ImageScore> {
    let matched;
    let pred = if normalize {
        matched = channel_mean_match(pred, reference)?;
        &matched
    } else {
        pred
    };
    let p = psnr(pred, reference, 1.0)?;
    Ok(ImageScore {
        name: name.to_string(),
        psnr_db: p.db,
        ssim: ssim(pred, reference)?,
        exact: p.exact,
    })
}

impl MetricReport {
    pub fn from_scores(mut images: Vec<ImageScore>, normalized: bool) -> Self {
        images.sort_by(|a, b| a.name.cmp(&b.name));
        let count = images.len();
        let mean = |f: fn(&ImageScore) -> f64| {
            if count == 0 {
                0.0
            } else {
                pairwise_sum(&images.iter().map(f).collect::<Vec<_>>()) / count as f64
            }
        };
        Self {
            mean_psnr_db: mean(|s| s.psnr_db),
            mean_ssim: mean(|s| s.ssim),
            count,
            normalized,
            images,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores in-memory `(name, prediction, reference)` triples in parallel.
pub fn evaluate_pairs(pairs: &[(String, Image, Image)], normalize: bool) -> Result<MetricReport> {
    let scores = pairs
        .par_iter()
        .map(|(name, p, r)| score_pair(name, p, r, normalize))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_scores(scores, normalize))
}

/// Scores every image in `pred_dir` against the same-named file in
/// `ref_dir`. The two directories must hold identical image name sets.
pub fn evaluate_dataset(pred_dir: &Path, ref_dir: &Path, normalize: bool) -> Result<MetricReport> {
    let preds: BTreeSet<String> = io::list_images(pred_dir)?.into_iter().collect();
    let refs: BTreeSet<String> = io::list_images(ref_dir)?.into_iter().collect();
    if preds != refs {
        return Err(Error::UnmatchedFiles {
            only_pred: preds.difference(&refs).cloned().collect(),
            only_ref: refs.difference(&preds).cloned().collect(),
        });
    }
    let names: Vec<String> = preds.into_iter().collect();
    let scores = names
        .par_iter()
        .map(|name| {
            let p = io::read_image(&pred_dir.join(name))?;
            let r = io::read_image(&ref_dir.join(name))?;
            score_pair(name, &p, &r, normalize)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_scores(scores, normalize))
}
