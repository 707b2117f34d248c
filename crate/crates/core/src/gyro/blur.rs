use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::psf::{PsfField, PsfKernel};
use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BlurMode {
    /// Bilinear blend of the four nearest tile kernels.
    #[default]
    Tiled,
    /// PSF recomputed at every pixel. Slow; reference path.
    Exact,
}

/// `out(p) += weight * sum_d k(d) * img(p - d)` with replicated borders.
#[inline]
fn gather(img: &Image, x: usize, y: usize, kernel: &PsfKernel, weight: f64, acc: &mut [f64; CHANNELS]) {
    let (x, y) = (x as isize, y as isize);
    for tap in kernel.taps() {
        let px = img.get_clamped(x - tap.dx as isize, y - tap.dy as isize);
        let w = weight * tap.w as f64;
        for c in 0..CHANNELS {
            acc[c] += w * px[c] as f64;
        }
    }
}

/// Index pair and blend factor of the anchors bracketing `p`.
#[inline]
fn bracket(centers: &[f64], p: f64) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if last == 0 || p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let j = centers.partition_point(|&c| c <= p) - 1;
    let t = (p - centers[j]) / (centers[j + 1] - centers[j]);
    (j, j + 1, t)
}

/// Spatially-variant convolution of `img` with the field's PSFs.
pub fn apply_blur(img: &Image, field: &PsfField, mode: BlurMode) -> Result<Image> {
    if img.dims() != field.dims() {
        let (w, h) = field.dims();
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{} but the PSF field covers {w}x{h}",
            img.width(),
            img.height()
        )));
    }
    let (width, height) = img.dims();
    let rows: Vec<Vec<f32>> = match mode {
        BlurMode::Tiled => {
            let (cx, cy) = field.centers();
            (0..height)
                .into_par_iter()
                .map(|y| {
                    let (r0, r1, ty) = bracket(cy, y as f64);
                    let mut row = Vec::with_capacity(width * CHANNELS);
                    for x in 0..width {
                        let (c0, c1, tx) = bracket(cx, x as f64);
                        let mut acc = [0f64; CHANNELS];
                        let corners = [
                            (c0, r0, (1.0 - tx) * (1.0 - ty)),
                            (c1, r0, tx * (1.0 - ty)),
                            (c0, r1, (1.0 - tx) * ty),
                            (c1, r1, tx * ty),
                        ];
                        for (c, r, w) in corners {
                            if w > 0.0 {
                                gather(img, x, y, field.kernel(c, r), w, &mut acc);
                            }
                        }
                        row.extend(acc.iter().map(|&v| v as f32));
                    }
                    row
                })
                .collect()
        }
        BlurMode::Exact => {
            let model = field.model().ok_or_else(|| {
                Error::InvalidParameter("exact blur needs a field built from a blur model".into())
            })?;
            (0..height)
                .into_par_iter()
                .map(|y| {
                    let homs = model.row_homographies(y as f64)?;
                    let mut row = Vec::with_capacity(width * CHANNELS);
                    for x in 0..width {
                        let kernel = model.psf_with(&homs, x as f64, y as f64)?;
                        let mut acc = [0f64; CHANNELS];
                        gather(img, x, y, &kernel, 1.0, &mut acc);
                        row.extend(acc.iter().map(|&v| v as f32));
                    }
                    Ok(row)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(Image::from_raw_unchecked(width, height, rows.concat()))
}
