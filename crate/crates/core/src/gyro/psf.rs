use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::{homography_at, project, Intrinsics, Mat3, ShutterSpec};
use super::track::GyroTrack;
use crate::error::{Error, Result};

pub const DEFAULT_PSF_SAMPLES: usize = 256;
/// Largest kernel is 129x129.
pub const DEFAULT_MAX_RADIUS: usize = 64;
pub const DEFAULT_TILE_SIZE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tap {
    pub dx: i32,
    pub dy: i32,
    pub w: f32,
}

/// Square, odd-sized blur kernel whose origin (the exposure-start position)
/// is the center cell. Weights are non-negative and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct PsfKernel {
    radius: usize,
    weights: Vec<f32>,
    taps: Vec<Tap>,
    path_length: f64,
}

impl PsfKernel {
    pub fn delta() -> Self {
        Self::from_weights(1, {
            let mut w = vec![0.0; 9];
            w[4] = 1.0;
            w
        }, 0.0)
        .expect("valid delta")
    }

    /// Builds a kernel from a `(2r+1)^2` row-major weight grid, normalizing to
    /// unit sum.
    pub fn from_weights(radius: usize, weights: Vec<f32>, path_length: f64) -> Result<Self> {
        let size = 2 * radius + 1;
        if weights.len() != size * size {
            return Err(Error::InvalidInput(format!(
                "kernel of radius {radius} needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("kernel weights must be finite and >= 0".into()));
        }
        let sum: f64 = weights.iter().map(|&w| w as f64).sum();
        if sum <= 0.0 {
            return Err(Error::InvalidInput("kernel weights sum to zero".into()));
        }
        let weights: Vec<f32> = weights.iter().map(|&w| (w as f64 / sum) as f32).collect();
        let r = radius as i32;
        let taps = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, &w)| Tap {
                dx: (i % size) as i32 - r,
                dy: (i / size) as i32 - r,
                w,
            })
            .collect();
        Ok(Self {
            radius,
            weights,
            taps,
            path_length,
        })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    /// Grid index `(column, row)` of the origin.
    pub fn origin(&self) -> (usize, usize) {
        (self.radius, self.radius)
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// Non-zero entries as offsets from the origin.
    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    /// Weight at offset `(dx, dy)` from the origin; zero outside the grid.
    pub fn weight(&self, dx: i32, dy: i32) -> f32 {
        let r = self.radius as i32;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.weights[((dy + r) as usize) * self.size() + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|&w| w as f64).sum()
    }

    pub fn is_delta(&self) -> bool {
        self.taps.len() == 1 && self.taps[0].dx == 0 && self.taps[0].dy == 0
    }

    /// Arc length of the sampled trajectory, pixels.
    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// Bounding box of the support as `(min_dx, max_dx, min_dy, max_dy)`.
    pub fn support_bbox(&self) -> (i32, i32, i32, i32) {
        self.taps.iter().fold(
            (i32::MAX, i32::MIN, i32::MAX, i32::MIN),
            |(x0, x1, y0, y1), t| (x0.min(t.dx), x1.max(t.dx), y0.min(t.dy), y1.max(t.dy)),
        )
    }

    /// Longer side of the support bounding box minus one, in pixels.
    pub fn trail_extent(&self) -> usize {
        let (x0, x1, y0, y1) = self.support_bbox();
        (x1 - x0).max(y1 - y0) as usize
    }
}

/// Rasterizes trajectory samples taken at uniform times over the exposure
/// (displacements from the exposure-start position, both ends included) with
/// bilinear splatting. Samples carry trapezoidal time weights.
pub fn rasterize_trajectory(displacements: &[(f64, f64)], max_radius: usize) -> Result<PsfKernel> {
    if displacements.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let reach = displacements
        .iter()
        .map(|&(dx, dy)| dx.abs().max(dy.abs()))
        .fold(0.0, f64::max);
    if !reach.is_finite() {
        return Err(Error::InvalidInput("trajectory is not finite".into()));
    }
    let radius = reach.ceil() as usize + 1;
    if radius > max_radius {
        return Err(Error::OversizedBlur {
            required: radius,
            max: max_radius,
        });
    }
    let size = 2 * radius + 1;
    let mut acc = vec![0f64; size * size];
    let n = displacements.len();
    for (k, &(dx, dy)) in displacements.iter().enumerate() {
        let w = if n == 1 {
            1.0
        } else if k == 0 || k == n - 1 {
            0.5 / (n - 1) as f64
        } else {
            1.0 / (n - 1) as f64
        };
        let px = dx + radius as f64;
        let py = dy + radius as f64;
        let x0 = px.floor();
        let y0 = py.floor();
        let ax = px - x0;
        let ay = py - y0;
        let (x0, y0) = (x0 as usize, y0 as usize);
        acc[y0 * size + x0] += w * (1.0 - ax) * (1.0 - ay);
        if ax > 0.0 {
            acc[y0 * size + x0 + 1] += w * ax * (1.0 - ay);
        }
        if ay > 0.0 {
            acc[(y0 + 1) * size + x0] += w * (1.0 - ax) * ay;
            if ax > 0.0 {
                acc[(y0 + 1) * size + x0 + 1] += w * ax * ay;
            }
        }
    }
    let path_length = displacements
        .windows(2)
        .map(|p| ((p[1].0 - p[0].0).powi(2) + (p[1].1 - p[0].1).powi(2)).sqrt())
        .sum();
    let sum: f64 = acc.iter().sum();
    let weights = acc.iter().map(|&a| (a / sum) as f32).collect();
    PsfKernel::from_weights(radius, weights, path_length)
}

/// Everything needed to evaluate the PSF at any pixel: the gyro track,
/// intrinsics, rolling-shutter timing, and rasterization settings.
#[derive(Clone, Debug)]
pub struct BlurModel {
    track: Arc<GyroTrack>,
    intrinsics: Intrinsics,
    shutter: ShutterSpec,
    n_samples: usize,
    max_radius: usize,
}

impl BlurModel {
    pub fn new(
        track: Arc<GyroTrack>,
        intrinsics: Intrinsics,
        shutter: ShutterSpec,
        n_samples: usize,
    ) -> Result<Self> {
        shutter.validate()?;
        if n_samples < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 trajectory samples, got {n_samples}"
            )));
        }
        let (t0, t1) = shutter.window();
        if t0 < track.start() || t1 > track.end() {
            return Err(Error::OutOfRange {
                start: t0,
                end: t1,
                track_start: track.start(),
                track_end: track.end(),
            });
        }
        Ok(Self {
            track,
            intrinsics,
            shutter,
            n_samples,
            max_radius: DEFAULT_MAX_RADIUS,
        })
    }

    pub fn with_max_radius(mut self, max_radius: usize) -> Self {
        self.max_radius = max_radius;
        self
    }

    pub fn shutter(&self) -> &ShutterSpec {
        &self.shutter
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn max_radius(&self) -> usize {
        self.max_radius
    }

    /// Homographies from the row's exposure start to each of the
    /// `n_samples` uniformly spaced instants of its exposure window.
    pub fn row_homographies(&self, y: f64) -> Result<Vec<Mat3>> {
        let t1 = self.shutter.row_start_time(y)?;
        let r_t1 = self.track.camera_rotation(t1)?;
        let last = (self.n_samples - 1) as f64;
        (0..self.n_samples)
            .map(|k| {
                let t = t1 + self.shutter.t_e * k as f64 / last;
                let r_t = self.track.camera_rotation(t)?;
                Ok(homography_at(&self.intrinsics, &r_t, &r_t1))
            })
            .collect()
    }

    /// Displacements of the point `(x, y)` over its exposure, relative to the
    /// start-of-exposure position.
    pub fn trajectory(&self, x: f64, y: f64) -> Result<Vec<(f64, f64)>> {
        let homs = self.row_homographies(y)?;
        Ok(displacements(&homs, x, y))
    }

    pub fn psf_at(&self, x: f64, y: f64) -> Result<PsfKernel> {
        let homs = self.row_homographies(y)?;
        self.psf_with(&homs, x, y)
    }

    /// PSF at `(x, y)` from precomputed row homographies.
    pub fn psf_with(&self, homs: &[Mat3], x: f64, y: f64) -> Result<PsfKernel> {
        rasterize_trajectory(&displacements(homs, x, y), self.max_radius)
    }
}

fn displacements(homs: &[Mat3], x: f64, y: f64) -> Vec<(f64, f64)> {
    homs.iter()
        .map(|h| {
            let (u, v) = project(h, x, y);
            (u - x, v - y)
        })
        .collect()
}

/// PSF at pixel `(x, y)` with the default kernel-size cap.
pub fn psf_at(
    track: &Arc<GyroTrack>,
    intrinsics: &Intrinsics,
    shutter: &ShutterSpec,
    x: (f64, f64),
    n_samples: usize,
) -> Result<PsfKernel> {
    BlurModel::new(track.clone(), *intrinsics, *shutter, n_samples)?.psf_at(x.0, x.1)
}

/// Summary of the kernels in a field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelStats {
    pub mean_path_px: f64,
    pub max_path_px: f64,
    pub max_extent_px: usize,
    pub max_radius_px: usize,
}

/// Grid of kernels anchored at tile centers. Tiles at the right and bottom
/// edges may be partial; their anchors sit at the center of the covered part.
#[derive(Clone, Debug)]
pub struct PsfField {
    width: usize,
    height: usize,
    tile_size: usize,
    centers_x: Vec<f64>,
    centers_y: Vec<f64>,
    kernels: Vec<PsfKernel>,
    model: Option<BlurModel>,
}

fn tile_centers(extent: usize, tile: usize) -> Vec<f64> {
    (0..extent.div_ceil(tile))
        .map(|j| {
            let lo = j * tile;
            let hi = (lo + tile).min(extent);
            (lo + hi - 1) as f64 / 2.0
        })
        .collect()
}

impl PsfField {
    /// Evaluates the model at every tile center.
    pub fn compute(model: &BlurModel, width: usize, height: usize, tile_size: usize) -> Result<Self> {
        if tile_size == 0 {
            return Err(Error::InvalidParameter("tile_size must be at least 1".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("empty image".into()));
        }
        if model.shutter.n_rows != height {
            return Err(Error::DimensionMismatch(format!(
                "shutter has {} rows but the image has {height}",
                model.shutter.n_rows
            )));
        }
        let centers_x = tile_centers(width, tile_size);
        let centers_y = tile_centers(height, tile_size);
        let kernels = centers_y
            .par_iter()
            .map(|&cy| {
                let homs = model.row_homographies(cy)?;
                centers_x
                    .iter()
                    .map(|&cx| model.psf_with(&homs, cx, cy))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(Self {
            width,
            height,
            tile_size,
            centers_x,
            centers_y,
            kernels,
            model: Some(model.clone()),
        })
    }

    /// One kernel applied everywhere.
    pub fn uniform(kernel: PsfKernel, width: usize, height: usize) -> Self {
        let tile_size = width.max(height);
        Self {
            width,
            height,
            tile_size,
            centers_x: tile_centers(width, tile_size),
            centers_y: tile_centers(height, tile_size),
            kernels: vec![kernel],
            model: None,
        }
    }

    /// No blur.
    pub fn identity(width: usize, height: usize) -> Self {
        Self::uniform(PsfKernel::delta(), width, height)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn tile_size(&self) -> usize {
        self.tile_size
    }

    /// `(columns, rows)` of the kernel grid.
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.centers_x.len(), self.centers_y.len())
    }

    pub fn kernel(&self, col: usize, row: usize) -> &PsfKernel {
        &self.kernels[row * self.centers_x.len() + col]
    }

    pub fn kernels(&self) -> &[PsfKernel] {
        &self.kernels
    }

    pub fn anchor(&self, col: usize, row: usize) -> (f64, f64) {
        (self.centers_x[col], self.centers_y[row])
    }

    pub fn model(&self) -> Option<&BlurModel> {
        self.model.as_ref()
    }

    pub fn stats(&self) -> KernelStats {
        let n = self.kernels.len() as f64;
        KernelStats {
            mean_path_px: self.kernels.iter().map(|k| k.path_length()).sum::<f64>() / n,
            max_path_px: self.kernels.iter().map(|k| k.path_length()).fold(0.0, f64::max),
            max_extent_px: self.kernels.iter().map(|k| k.trail_extent()).max().unwrap_or(0),
            max_radius_px: self.kernels.iter().map(|k| k.radius()).max().unwrap_or(0),
        }
    }

    pub(crate) fn centers(&self) -> (&[f64], &[f64]) {
        (&self.centers_x, &self.centers_y)
    }
}

/// Builds the tile grid of PSFs; see [`PsfField::compute`].
pub fn psf_field(
    track: &Arc<GyroTrack>,
    intrinsics: &Intrinsics,
    shutter: &ShutterSpec,
    image_size: (usize, usize),
    tile_size: usize,
    n_samples: usize,
) -> Result<PsfField> {
    intrinsics.validate(image_size.0, image_size.1)?;
    let model = BlurModel::new(track.clone(), *intrinsics, *shutter, n_samples)?;
    PsfField::compute(&model, image_size.0, image_size.1, tile_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gyro::track::GyroSample;

    fn shutter(n_rows: usize) -> ShutterSpec {
        ShutterSpec {
            t_f: 0.1,
            t_e: 0.1,
            t_r: 0.03,
            n_rows,
        }
    }

    #[test]
    fn zero_motion_is_delta() {
        let track = Arc::new(GyroTrack::constant([0.0; 3], 1.0, 100.0).unwrap());
        let k = Intrinsics::default_for(64, 48);
        let psf = psf_at(&track, &k, &shutter(48), (10.0, 20.0), 64).unwrap();
        assert!(psf.is_delta());
        assert_eq!(psf.weight(0, 0), 1.0);
        assert_eq!(psf.size(), 3);
    }

    /// Brute-force rasterization of a straight 5 px trail: every sample's
    /// bilinear footprint accumulated independently.
    #[test]
    fn five_pixel_trail_starts_at_origin() {
        let n = 256;
        let traj: Vec<(f64, f64)> = (0..n).map(|k| (5.0 * k as f64 / (n - 1) as f64, 0.0)).collect();
        let psf = rasterize_trajectory(&traj, 64).unwrap();
        let (x0, x1, y0, y1) = psf.support_bbox();
        assert_eq!((x0, x1, y0, y1), (0, 5, 0, 0));
        assert!((psf.sum() - 1.0).abs() < 1e-6);

        // trapezoid rule over the sampled times
        let mut oracle = [0f64; 6];
        for (k, &(dx, _)) in traj.iter().enumerate() {
            let wt = if k == 0 || k == n - 1 { 0.5 } else { 1.0 } / (n - 1) as f64;
            let i = dx.floor() as usize;
            let a = dx - dx.floor();
            oracle[i] += wt * (1.0 - a);
            if a > 0.0 {
                oracle[i + 1] += wt * a;
            }
        }
        for (i, o) in oracle.iter().enumerate() {
            assert!((psf.weight(i as i32, 0) as f64 - o).abs() < 1e-6);
        }
        assert!((psf.path_length() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn oversized_trail_reports_radius() {
        let traj = vec![(0.0, 0.0), (70.2, 3.0)];
        match rasterize_trajectory(&traj, 64) {
            Err(Error::OversizedBlur { required, max }) => {
                assert_eq!(required, 72);
                assert_eq!(max, 64);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sample_count_convergence() {
        let track = Arc::new(GyroTrack::synthetic_shake(3, 1.0, 400.0, 1.5).unwrap());
        let k = Intrinsics::default_for(128, 96);
        let model = |n| BlurModel::new(track.clone(), k, shutter(96), n).unwrap();
        let (lo, hi) = (model(64), model(1024));
        for (x, y) in [(5.0, 5.0), (64.0, 48.0), (120.0, 90.0)] {
            let a = lo.psf_at(x, y).unwrap();
            let b = hi.psf_at(x, y).unwrap();
            assert!(b.trail_extent() <= 30);
            let r = a.radius().max(b.radius()) as i32;
            let mut worst = 0f32;
            for dy in -r..=r {
                for dx in -r..=r {
                    worst = worst.max((a.weight(dx, dy) - b.weight(dx, dy)).abs());
                }
            }
            assert!(worst < 1e-3, "max weight change {worst}");
        }
    }

    #[test]
    fn single_tile_matches_center_psf() {
        let track = Arc::new(GyroTrack::synthetic_shake(8, 1.0, 400.0, 1.0).unwrap());
        let k = Intrinsics::default_for(40, 30);
        let field = psf_field(&track, &k, &shutter(30), (40, 30), 40, 128).unwrap();
        assert_eq!(field.grid_dims(), (1, 1));
        let center = psf_at(&track, &k, &shutter(30), (19.5, 14.5), 128).unwrap();
        assert_eq!(field.kernel(0, 0), &center);
    }

    #[test]
    fn grid_dimensions_round_up() {
        let track = Arc::new(GyroTrack::constant([0.0; 3], 1.0, 50.0).unwrap());
        let k = Intrinsics::default_for(70, 33);
        let field = psf_field(&track, &k, &shutter(33), (70, 33), 16, 16).unwrap();
        assert_eq!(field.grid_dims(), (5, 3));
        assert!(field.kernels().iter().all(PsfKernel::is_delta));
        assert_eq!(field.anchor(4, 2), (66.5, 32.0));
    }

    #[test]
    fn roll_trails_grow_with_radius() {
        let track = Arc::new(GyroTrack::constant([0.0, 0.0, 0.5], 1.0, 200.0).unwrap());
        let k = Intrinsics::default_for(128, 128);
        let sh = ShutterSpec {
            t_r: 0.0,
            ..shutter(128)
        };
        let model = BlurModel::new(track.clone(), k, sh, 256).unwrap();
        let field = PsfField::compute(&model, 128, 128, 16).unwrap();
        // per-pixel oracle along a ray from the principal point
        let mut last = -1.0;
        for step in 0..8 {
            let x = k.cx + 8.0 * step as f64;
            let p = model.psf_at(x, k.cy).unwrap().path_length();
            assert!(p >= last);
            last = p;
        }
        // tile kernels far from the center carry longer trails than near it
        let near = field.kernel(3, 3).path_length();
        let far = field.kernel(0, 0).path_length();
        assert!(far > near);
        let anchor = field.anchor(0, 0);
        let oracle = model.psf_at(anchor.0, anchor.1).unwrap();
        assert_eq!(&oracle, field.kernel(0, 0));
    }

    #[test]
    fn window_outside_track_is_rejected() {
        let track = Arc::new(GyroTrack::constant([0.0; 3], 0.15, 100.0).unwrap());
        let k = Intrinsics::default_for(10, 10);
        assert!(matches!(
            BlurModel::new(track, k, shutter(10), 16),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn global_shutter_rows_share_kernels() {
        let samples = (0..200)
            .map(|i| GyroSample {
                t: i as f64 * 0.005,
                omega: [0.4, 0.0, 0.0],
            })
            .collect();
        let track = Arc::new(GyroTrack::new(samples).unwrap());
        let k = Intrinsics::default_for(32, 32);
        let sh = ShutterSpec {
            t_r: 0.0,
            ..shutter(32)
        };
        let model = BlurModel::new(track, k, sh, 64).unwrap();
        let a = model.row_homographies(0.0).unwrap();
        let b = model.row_homographies(31.0).unwrap();
        assert_eq!(a, b);
    }
}
