/// Hamilton quaternion `w + xi + yj + zk`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// `exp(v / 2)`: the unit quaternion rotating by `|v|` radians about `v`.
    pub fn from_rotation_vector(v: [f64; 3]) -> Self {
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let half = 0.5 * angle;
        // sin(half) / angle, series-expanded near zero
        let k = if angle < 1e-8 {
            0.5 - angle * angle / 48.0
        } else {
            half.sin() / angle
        };
        Self {
            w: half.cos(),
            x: v[0] * k,
            y: v[1] * k,
            z: v[2] * k,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.normalized();
        let v = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        2.0 * v.atan2(q.w.abs())
    }

    /// Rotation vector (axis times angle), with the sign chosen so the angle
    /// is at most pi.
    pub fn rotation_vector(&self) -> [f64; 3] {
        let q = self.normalized();
        let q = if q.w < 0.0 {
            Quaternion::new(-q.w, -q.x, -q.y, -q.z)
        } else {
            q
        };
        let v = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if v < 1e-15 {
            return [2.0 * q.x, 2.0 * q.y, 2.0 * q.z];
        }
        let s = 2.0 * v.atan2(q.w) / v;
        [q.x * s, q.y * s, q.z * s]
    }

    /// Direction cosine matrix of a unit quaternion.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = *self;
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
}

impl std::ops::Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, r: Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            x: self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            y: self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            z: self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        }
    }
}
