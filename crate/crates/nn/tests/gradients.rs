use lsd2_nn::gradcheck::*;
use lsd2_nn::{FusionNetConfig, UNetConfig};

const H: f64 = 1e-3;

#[test]
fn conv3x3_matches_finite_differences() {
    let r = check_conv([2, 3, 8, 8], 4, 3, H, 1).unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn conv1x1_matches_finite_differences() {
    let r = check_conv([2, 5, 6, 7], 3, 1, H, 2).unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn maxpool_matches_finite_differences() {
    let r = check_maxpool([2, 3, 8, 8], H, 3).unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn upsample_matches_finite_differences() {
    let r = check_upsample([2, 3, 4, 5], H, 4).unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let shape = [2, 3, 5, 5];
    for r in [
        check_concat(shape, 2, H, 5).unwrap(),
        check_relu(shape, H, 6),
        check_sigmoid(shape, H, 7),
        check_fuse(shape, H, 8).unwrap(),
    ] {
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }
}

#[test]
fn l2_loss_matches_finite_differences() {
    let r = check_l2([1, 3, 6, 6], H, 9).unwrap();
    assert!(r.max_rel_err < 1e-8, "{r:?}");
}

#[test]
fn tiny_unet_matches_finite_differences() {
    let cfg = UNetConfig {
        depth: 2,
        base_features: 4,
        ..UNetConfig::default()
    };
    let r = check_unet(cfg, 16, H, 10).unwrap();
    assert!(r.max_rel_err < 1e-5, "{r:?}");
    assert!(r.skipped * 100 <= r.checked, "{r:?}");
}

#[test]
fn tiny_fusion_net_matches_finite_differences() {
    let cfg = FusionNetConfig {
        in_channels: 6,
        features: [4, 4, 8, 8, 4, 4],
    };
    let r = check_fusion(cfg, 8, H, 11).unwrap();
    assert!(r.max_rel_err < 1e-5, "{r:?}");
    assert!(r.skipped * 100 <= r.checked, "{r:?}");
}

#[test]
fn conv_gradients_hold_in_single_precision() {
    use lsd2_nn::ops::{conv2d, conv2d_backward};
    use lsd2_nn::Tensor;

    let x = Tensor::<f32>::from_fn([1, 2, 6, 6], |i| ((i * 37 % 19) as f32) / 19.0 - 0.5);
    let w = Tensor::<f32>::from_fn([3, 2, 3, 3], |i| ((i * 11 % 7) as f32) / 7.0 - 0.5);
    let b = Tensor::<f32>::from_fn([3, 1, 1, 1], |i| i as f32 * 0.1);
    let r = Tensor::<f32>::from_fn([1, 3, 6, 6], |i| ((i * 5 % 13) as f32) / 13.0 - 0.5);
    let loss = |w: &Tensor<f32>| -> f32 {
        conv2d(&x, w, &b).unwrap().data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
    };
    let g = conv2d_backward(&x, &w, &b, &r, false).unwrap();
    let h = 1e-2f32;
    let mut worst = 0f64;
    for i in 0..w.len() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up.data_mut()[i] += h;
        down.data_mut()[i] -= h;
        let numeric = ((loss(&up) - loss(&down)) / (2.0 * h)) as f64;
        worst = worst.max(rel_err(g.dw.data()[i] as f64, numeric));
    }
    assert!(worst < 1e-2, "{worst}");
}
