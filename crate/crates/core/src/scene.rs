//! Seeded procedural source images, used when no photo collection is given.

use crate::image::{Image, CHANNELS};
use crate::rng::Rng;

enum Shape {
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
    Disc {
        cx: f64,
        cy: f64,
        r: f64,
    },
    Stripes {
        angle: f64,
        period: f64,
        cx: f64,
        cy: f64,
        r: f64,
    },
}

impl Shape {
    fn coverage(&self, x: f64, y: f64) -> f64 {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => {
                if x >= x0 && x < x1 && y >= y0 && y < y1 {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Disc { cx, cy, r } => {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                (r - d + 0.5).clamp(0.0, 1.0)
            }
            Shape::Stripes {
                angle,
                period,
                cx,
                cy,
                r,
            } => {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                if d > r {
                    return 0.0;
                }
                let u = x * angle.cos() + y * angle.sin();
                if (u / period).rem_euclid(1.0) < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Gamma-encoded `[0, 1]` scene: a color gradient with random rectangles,
/// discs and striped patches. Deterministic in `(seed, index)`.
pub fn procedural_scene(seed: u64, index: u64, width: usize, height: usize) -> Image {
    let mut rng = Rng::stream(seed ^ 0x9e37_79b9_7f4a_7c15, index);
    let (w, h) = (width as f64, height as f64);
    let color = |rng: &mut Rng| -> [f64; CHANNELS] {
        std::array::from_fn(|_| rng.uniform(0.05, 0.95))
    };
    let top = color(&mut rng);
    let bottom = color(&mut rng);
    let n_shapes = 6 + rng.below(8);
    let mut shapes = Vec::with_capacity(n_shapes);
    for _ in 0..n_shapes {
        let cx = rng.uniform(0.0, w);
        let cy = rng.uniform(0.0, h);
        let size = rng.uniform(0.08, 0.35) * w.min(h);
        let shape = match rng.below(3) {
            0 => Shape::Rect {
                x0: cx - size,
                y0: cy - size * rng.uniform(0.3, 1.0),
                x1: cx + size * rng.uniform(0.3, 1.0),
                y1: cy + size,
            },
            1 => Shape::Disc { cx, cy, r: size },
            _ => Shape::Stripes {
                angle: rng.uniform(0.0, std::f64::consts::PI),
                period: rng.uniform(3.0, 9.0),
                cx,
                cy,
                r: size,
            },
        };
        shapes.push((shape, color(&mut rng)));
    }
    Image::from_fn(width, height, |x, y, c| {
        let (xf, yf) = (x as f64, y as f64);
        let t = yf / h.max(1.0);
        let mut v = top[c] * (1.0 - t) + bottom[c] * t;
        for (shape, col) in &shapes {
            let a = shape.coverage(xf, yf);
            v = v * (1.0 - a) + col[c] * a;
        }
        v.clamp(0.0, 1.0) as f32
    })
}
