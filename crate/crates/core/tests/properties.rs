use std::sync::Arc;

use lsd2_core::gyro::{apply_blur, rasterize_trajectory, BlurMode, GyroTrack, PsfField, Quaternion};
use lsd2_core::image::{gamma_decode, gamma_encode};
use lsd2_core::io::{decode_raw, encode_raw};
use lsd2_core::metrics::{psnr, ssim};
use lsd2_core::synth::MotionConfig;
use lsd2_core::Image;
use proptest::prelude::*;

fn path_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-12.0f64..12.0, -12.0f64..12.0), 2..40)
}

fn image_strategy(w: usize, h: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f32..=1.0, w * h * 3).prop_map(move |v| Image::new(w, h, v).unwrap())
}

/// Time weights of uniformly spaced samples, trapezoid rule.
fn trapezoid(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    w[0] = 0.5;
    w[n - 1] = 0.5;
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rasterized_kernels_are_normalized_and_keep_the_centroid(path in path_strategy()) {
        // displacements relative to the first sample, as the blur model produces
        let (x0, y0) = path[0];
        let disp: Vec<(f64, f64)> = path.iter().map(|&(x, y)| (x - x0, y - y0)).collect();
        let k = rasterize_trajectory(&disp, 64).unwrap();
        prop_assert!((k.sum() - 1.0).abs() < 1e-6);
        prop_assert!(k.weights().iter().all(|&w| w >= 0.0));
        let r = k.radius() as i32;
        let (mut cx, mut cy) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let w = k.weight(dx, dy) as f64;
                cx += w * dx as f64;
                cy += w * dy as f64;
            }
        }
        let tw = trapezoid(disp.len());
        let ex: f64 = disp.iter().zip(&tw).map(|(d, w)| d.0 * w).sum();
        let ey: f64 = disp.iter().zip(&tw).map(|(d, w)| d.1 * w).sum();
        prop_assert!((cx - ex).abs() < 1e-3 && (cy - ey).abs() < 1e-3, "({cx}, {cy}) vs ({ex}, {ey})");
    }

    #[test]
    fn rotation_matrices_are_orthonormal(v in prop::array::uniform3(-3.0f64..3.0)) {
        let q = Quaternion::from_rotation_vector(v);
        prop_assert!((q.norm() - 1.0).abs() < 1e-12);
        let m = q.to_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let e = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - e).abs() < 1e-12);
            }
        }
        let back = q * Quaternion::from_rotation_vector([-v[0], -v[1], -v[2]]);
        prop_assert!(back.angle() < 1e-9);
    }

    #[test]
    fn blur_preserves_constant_images(level in 0.0f32..4.0, seed in 0u64..1000) {
        let track = Arc::new(GyroTrack::synthetic_shake(seed, 1.0, 500.0, 0.6).unwrap());
        let mut motion = MotionConfig::new(track, 0.2, 0.03);
        motion.tile_size = 8;
        let field = motion.field(0.3, 24, 20).unwrap();
        let img = Image::filled(24, 20, level);
        for mode in [BlurMode::Tiled, BlurMode::Exact] {
            let out = apply_blur(&img, &field, mode).unwrap();
            prop_assert!(out.data().iter().all(|&v| (v - level).abs() <= 1e-5 * level.max(1.0)));
        }
    }

    #[test]
    fn identity_field_is_a_no_op(img in image_strategy(9, 7)) {
        let out = apply_blur(&img, &PsfField::identity(9, 7), BlurMode::Tiled).unwrap();
        prop_assert_eq!(out, img);
    }

    #[test]
    fn gamma_round_trips(img in image_strategy(6, 5), gamma in 1.0f32..3.0) {
        let back = gamma_encode(&gamma_decode(&img, gamma).unwrap(), gamma).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn raw_files_round_trip(img in image_strategy(5, 4)) {
        let bytes = encode_raw(&img);
        prop_assert_eq!(decode_raw(&bytes, std::path::Path::new("x.f32")).unwrap(), img);
    }

    #[test]
    fn metrics_are_symmetric_and_bounded(a in image_strategy(12, 12), b in image_strategy(12, 12)) {
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }
}
