use std::path::Path;

use serde::{Deserialize, Serialize};

use super::track::Rotation;
use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square pixels, principal point at the image center, focal length equal
    /// to the larger image side (about 53 degrees horizontal field of view).
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = width.max(height) as f64;
        Self {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        let inside = |v: f64, n: usize| v >= 0.0 && v <= n as f64;
        if !(inside(self.cx, width) && inside(self.cy, height)) {
            return Err(Error::InvalidParameter(format!(
                "principal point ({}, {}) lies outside the {width}x{height} image",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        [
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ]
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        [
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Rolling-shutter exposure timing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShutterSpec {
    /// Exposure start of the first row, s.
    pub t_f: f64,
    /// Exposure duration, s.
    pub t_e: f64,
    /// Readout time between the first and last row, s.
    pub t_r: f64,
    pub n_rows: usize,
}

impl ShutterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_e > 0.0 && self.t_e.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exposure time must be positive, got {}",
                self.t_e
            )));
        }
        if !(self.t_r >= 0.0 && self.t_r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "readout time must be non-negative, got {}",
                self.t_r
            )));
        }
        if self.n_rows == 0 {
            return Err(Error::InvalidParameter("n_rows must be at least 1".into()));
        }
        Ok(())
    }

    /// Exposure start of row `y`: `t_f + t_r * y / N`. Fractional rows are
    /// accepted for sub-pixel positions.
    pub fn row_start_time(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0 && y < self.n_rows as f64) {
            return Err(Error::InvalidParameter(format!(
                "row {y} outside 0..{}",
                self.n_rows
            )));
        }
        Ok(self.t_f + self.t_r * y / self.n_rows as f64)
    }

    /// Time span touched by any row's exposure.
    pub fn window(&self) -> (f64, f64) {
        let last = self.t_r * (self.n_rows as f64 - 1.0) / self.n_rows as f64;
        (self.t_f, self.t_f + last + self.t_e)
    }
}

pub fn row_start_time(shutter: &ShutterSpec, y: usize) -> Result<f64> {
    shutter.row_start_time(y as f64)
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// `K R(t) R(t_1)^T K^-1`, scaled so the bottom-right entry is 1.
pub fn homography_at(k: &Intrinsics, r_t: &Rotation, r_t1: &Rotation) -> Mat3 {
    let rel = mat_mul(&r_t.matrix(), &transpose(&r_t1.matrix()));
    let h = mat_mul(&mat_mul(&k.matrix(), &rel), &k.inverse_matrix());
    let s = h[2][2];
    h.map(|row| row.map(|v| v / s))
}

/// Maps pixel `(x, y)` through `h`.
#[inline]
pub fn project(h: &Mat3, x: f64, y: f64) -> (f64, f64) {
    let u = h[0][0] * x + h[0][1] * y + h[0][2];
    let v = h[1][0] * x + h[1][1] * y + h[1][2];
    let w = h[2][0] * x + h[2][1] * y + h[2][2];
    (u / w, v / w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> Intrinsics {
        Intrinsics {
            fx: 500.0,
            fy: 480.0,
            cx: 320.0,
            cy: 240.0,
        }
    }

    #[test]
    fn equal_rotations_give_identity() {
        let r = Rotation::from_rotation_vector([0.03, -0.02, 0.4]);
        let h = homography_at(&k(), &r, &r);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((h[i][j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_reference_reduces_to_plain_homography() {
        let r = Rotation::from_rotation_vector([0.01, 0.02, -0.03]);
        let h = homography_at(&k(), &r, &Rotation::IDENTITY);
        let mut plain = mat_mul(&mat_mul(&k().matrix(), &r.matrix()), &k().inverse_matrix());
        let s = plain[2][2];
        plain = plain.map(|row| row.map(|v| v / s));
        for i in 0..3 {
            for j in 0..3 {
                assert!((h[i][j] - plain[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn yaw_shifts_principal_point_by_focal_times_angle() {
        let k = k();
        for theta in [0.001, 0.005, 0.01] {
            let r = Rotation::from_rotation_vector([0.0, theta, 0.0]);
            let h = homography_at(&k, &r, &Rotation::IDENTITY);
            let (u, v) = project(&h, k.cx, k.cy);
            // exact projective shift is fx * tan(theta)
            let exact = k.fx * theta.tan();
            assert!(((u - k.cx).abs() - k.fx * theta).abs() <= 0.02 * k.fx * theta);
            assert!(((u - k.cx).abs() - exact).abs() < 1e-9);
            assert!((v - k.cy).abs() < 1e-9);
        }
    }

    #[test]
    fn row_timing() {
        let s = ShutterSpec {
            t_f: 0.0,
            t_e: 0.1,
            t_r: 0.03,
            n_rows: 100,
        };
        assert_eq!(row_start_time(&s, 0).unwrap(), 0.0);
        assert!((row_start_time(&s, 50).unwrap() - 0.015).abs() < 1e-15);
        assert!(row_start_time(&s, 100).is_err());
        let global = ShutterSpec { t_r: 0.0, t_f: 0.2, ..s };
        for y in [0, 17, 99] {
            assert_eq!(row_start_time(&global, y).unwrap(), 0.2);
        }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(k().validate(640, 480).is_ok());
        assert!(k().validate(100, 100).is_err());
        let bad = Intrinsics { fx: 0.0, ..k() };
        assert!(bad.validate(640, 480).is_err());
        let parsed: Intrinsics =
            serde_json::from_str(r#"{"fx": 500, "fy": 480, "cx": 320, "cy": 240}"#).unwrap();
        assert_eq!(parsed, k());
    }
}
