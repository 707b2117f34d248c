use std::path::Path;

use serde::{Deserialize, Serialize};

use super::quaternion::Quaternion;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Sanity bound on angular rate magnitude for logged samples, rad/s.
pub const DEFAULT_MAX_RATE: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GyroSample {
    /// Seconds, strictly increasing along a track.
    pub t: f64,
    /// Body-frame angular velocity, rad/s.
    pub omega: [f64; 3],
}

/// Camera attitude as a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    q: Quaternion,
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        q: Quaternion::IDENTITY,
    };

    pub fn from_quaternion(q: Quaternion) -> Self {
        Self { q: q.normalized() }
    }

    pub fn from_rotation_vector(v: [f64; 3]) -> Self {
        Self {
            q: Quaternion::from_rotation_vector(v),
        }
    }

    pub fn quaternion(&self) -> Quaternion {
        self.q
    }

    pub fn angle(&self) -> f64 {
        self.q.angle()
    }

    pub fn rotation_vector(&self) -> [f64; 3] {
        self.q.rotation_vector()
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        self.q.to_matrix()
    }

    pub fn inverse(&self) -> Rotation {
        Rotation {
            q: self.q.conjugate(),
        }
    }
}

/// Timestamped angular velocities with the body attitude integrated at every
/// sample under a zero-order hold: `omega_i` acts on `[t_i, t_{i+1})`.
#[derive(Clone, Debug)]
pub struct GyroTrack {
    samples: Vec<GyroSample>,
    attitudes: Vec<Quaternion>,
}

impl GyroTrack {
    pub fn new(samples: Vec<GyroSample>) -> Result<Self> {
        Self::with_rate_limit(samples, DEFAULT_MAX_RATE)
    }

    pub fn with_rate_limit(samples: Vec<GyroSample>, max_rate: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "gyro track needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t.is_finite() || s.omega.iter().any(|w| !w.is_finite()) {
                return Err(Error::InvalidInput(format!("gyro sample {i} is not finite")));
            }
            let rate = norm3(s.omega);
            if rate > max_rate {
                return Err(Error::InvalidInput(format!(
                    "gyro sample {i} has rate {rate:.3} rad/s above the limit {max_rate}"
                )));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(Error::InvalidInput(format!(
                    "gyro timestamps must strictly increase (sample {i})"
                )));
            }
        }
        let mut attitudes = Vec::with_capacity(samples.len());
        let mut q = Quaternion::IDENTITY;
        attitudes.push(q);
        for pair in samples.windows(2) {
            let dt = pair[1].t - pair[0].t;
            q = (q * Quaternion::from_rotation_vector(scale3(pair[0].omega, dt))).normalized();
            attitudes.push(q);
        }
        Ok(Self { samples, attitudes })
    }

    /// Re-expresses every angular velocity through `align` (gyro frame to
    /// camera frame).
    pub fn aligned(&self, align: &[[f64; 3]; 3]) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .map(|s| GyroSample {
                t: s.t,
                omega: mat_vec(align, s.omega),
            })
            .collect();
        Self::with_rate_limit(samples, f64::INFINITY)
    }

    pub fn samples(&self) -> &[GyroSample] {
        &self.samples
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }

    fn check_span(&self, t_a: f64, t_b: f64) -> Result<()> {
        let tol = 1e-12 * self.duration().max(1.0);
        if !(t_a >= self.start() - tol && t_b <= self.end() + tol && t_b >= t_a) {
            return Err(Error::OutOfRange {
                start: t_a,
                end: t_b,
                track_start: self.start(),
                track_end: self.end(),
            });
        }
        Ok(())
    }

    /// Body attitude at `t` relative to the track start.
    pub fn attitude(&self, t: f64) -> Result<Rotation> {
        self.check_span(t, t)?;
        Ok(Rotation {
            q: self.attitude_unchecked(t),
        })
    }

    fn attitude_unchecked(&self, t: f64) -> Quaternion {
        let i = match self
            .samples
            .binary_search_by(|s| s.t.partial_cmp(&t).expect("finite timestamps"))
        {
            Ok(i) => return self.attitudes[i],
            Err(0) => return self.attitudes[0],
            Err(i) => i - 1,
        };
        if i + 1 >= self.samples.len() {
            return self.attitudes[self.samples.len() - 1];
        }
        let dt = t - self.samples[i].t;
        (self.attitudes[i] * Quaternion::from_rotation_vector(scale3(self.samples[i].omega, dt)))
            .normalized()
    }

    /// Camera rotation `R(t)` mapping reference (track start) coordinates into
    /// camera coordinates at time `t`.
    pub fn camera_rotation(&self, t: f64) -> Result<Rotation> {
        Ok(self.attitude(t)?.inverse())
    }

    /// Relative rotation from the pose at `t_a` to the pose at `t_b`.
    pub fn integrate_rotation(&self, t_a: f64, t_b: f64) -> Result<Rotation> {
        self.check_span(t_a, t_b)?;
        let qa = self.attitude_unchecked(t_a);
        let qb = self.attitude_unchecked(t_b);
        Ok(Rotation {
            q: (qa.conjugate() * qb).normalized(),
        })
    }

    /// Parses the `t_ns,omega_x,omega_y,omega_z` text format.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut samples = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            let t_ns: i64 = fields[0]
                .parse()
                .map_err(|e| err(format!("bad timestamp {:?}: {e}", fields[0])))?;
            let mut omega = [0.0; 3];
            for k in 0..3 {
                omega[k] = fields[k + 1]
                    .parse()
                    .map_err(|e| err(format!("bad rate {:?}: {e}", fields[k + 1])))?;
            }
            if let Some(prev) = samples.last().map(|s: &GyroSample| s.t) {
                if (t_ns as f64) * 1e-9 <= prev {
                    return Err(err("timestamps must strictly increase".into()));
                }
            }
            samples.push(GyroSample {
                t: t_ns as f64 * 1e-9,
                omega,
            });
        }
        Self::new(samples).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Serializes into the text log format.
    pub fn to_log(&self) -> String {
        let mut out = String::from("# t_ns,omega_x,omega_y,omega_z\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{:.9},{:.9},{:.9}\n",
                (s.t * 1e9).round() as i64,
                s.omega[0],
                s.omega[1],
                s.omega[2]
            ));
        }
        out
    }

    /// Constant angular velocity over `[0, duration]` sampled at `rate_hz`.
    pub fn constant(omega: [f64; 3], duration: f64, rate_hz: f64) -> Result<Self> {
        let n = ((duration * rate_hz).ceil() as usize).max(1);
        let samples = (0..=n)
            .map(|i| GyroSample {
                t: duration * i as f64 / n as f64,
                omega,
            })
            .collect();
        Self::new(samples)
    }

    /// Hand-shake-like angular velocity: a few random sinusoids per axis in
    /// the 1-10 Hz band, roll (z) damped to a third of the amplitude.
    pub fn synthetic_shake(seed: u64, duration: f64, rate_hz: f64, amplitude: f64) -> Result<Self> {
        let mut rng = Rng::stream(seed, 0x5eed_6a70);
        let mut tones = Vec::new();
        for axis in 0..3 {
            let gain = if axis == 2 { amplitude / 3.0 } else { amplitude };
            for _ in 0..4 {
                let freq = rng.uniform(1.0, 10.0);
                let phase = rng.uniform(0.0, std::f64::consts::TAU);
                let amp = gain * rng.uniform(0.2, 1.0) / 2.0;
                tones.push((axis, freq, phase, amp));
            }
        }
        let n = ((duration * rate_hz).ceil() as usize).max(1);
        let samples = (0..=n)
            .map(|i| {
                let t = duration * i as f64 / n as f64;
                let mut omega = [0.0; 3];
                for &(axis, f, p, a) in &tones {
                    omega[axis] += a * (std::f64::consts::TAU * f * t + p).sin();
                }
                GyroSample { t, omega }
            })
            .collect();
        Self::new(samples)
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn scale3(v: [f64; 3], s: f64) -> [f64; 3] {
    [v[0] * s, v[1] * s, v[2] * s]
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}
