//! Central finite-difference verification of the analytic gradients.
//!
//! Every check reduces the output `y` of the operation under test to the
//! scalar `L = sum(y * r)` with a fixed random `r`, so the output gradient
//! fed to the backward pass is simply `r`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use lsd2_core::Rng;

use crate::error::Result;
use crate::fusion::{FusionNet, FusionNetConfig};
use crate::layers::Param;
use crate::ops;
use crate::tensor::Tensor;
use crate::unet::{UNet, UNetConfig};

/// Differences below this are treated as exact agreement, so that
/// vanishing gradients do not produce meaningless relative errors.
pub const ABS_TOLERANCE: f64 = 1e-10;

/// Times the step is divided by 10 when a stencil crosses a kink.
pub const MAX_REFINEMENTS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates within `h / 10^MAX_REFINEMENTS` of a kink, where the
    /// function is not differentiable and no comparison is possible.
    pub skipped: usize,
    /// Location of the largest error: `(tensor, flat index)`.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn merge(mut self, other: GradCheckReport) -> GradCheckReport {
        if other.max_rel_err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
            self.worst = other.worst;
        }
        self.checked += other.checked;
        self.skipped += other.skipped;
        self
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= ABS_TOLERANCE {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

/// Compares `analytic[i]` with central differences around `inputs[i]` at
/// every coordinate (or a random subset of `limit` coordinates per tensor).
///
/// `eval` returns the scalar loss and a signature of the piecewise-smooth
/// region the point lies in (ReLU masks, pooling choices; constant for
/// smooth functions). A difference stencil whose ends leave the region of
/// the unperturbed point straddles a kink, so the step is refined; if that
/// never helps the coordinate is counted as skipped.
pub fn check_gradients(
    inputs: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    h: f64,
    limit: Option<usize>,
    seed: u64,
    mut eval: impl FnMut(&[Tensor<f64>]) -> (f64, u64),
) -> GradCheckReport {
    assert_eq!(inputs.len(), analytic.len());
    let mut rng = Rng::new(seed);
    let mut work = inputs.to_vec();
    let region = eval(&work).1;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    for t in 0..inputs.len() {
        assert_eq!(inputs[t].shape(), analytic[t].shape());
        let n = inputs[t].len();
        let coords: Vec<usize> = match limit {
            Some(k) if k < n => {
                let mut p = rng.permutation(n);
                p.truncate(k);
                p
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let x0 = inputs[t].data()[i];
            let mut step = h;
            let mut numeric = None;
            for _ in 0..=MAX_REFINEMENTS {
                work[t].data_mut()[i] = x0 + step;
                let up = eval(&work);
                work[t].data_mut()[i] = x0 - step;
                let down = eval(&work);
                work[t].data_mut()[i] = x0;
                if up.1 == region && down.1 == region {
                    numeric = Some((up.0 - down.0) / (2.0 * step));
                    break;
                }
                step /= 10.0;
            }
            let Some(numeric) = numeric else {
                report.skipped += 1;
                continue;
            };
            let e = rel_err(analytic[t].data()[i], numeric);
            report.checked += 1;
            if e > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(e);
                report.worst = Some((t, i));
            }
        }
    }
    report
}

fn project(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn signature(v: &impl Hash) -> u64 {
    let mut h = DefaultHasher::new();
    v.hash(&mut h);
    h.finish()
}

fn random(shape: [usize; 4], rng: &mut Rng, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform(lo, hi))
}

/// Conv of a random `[n, cin, h, w]` input with a `k x k` window.
pub fn check_conv(shape: [usize; 4], cout: usize, k: usize, h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let x = random(shape, &mut rng, -1.0, 1.0);
    let w = random([cout, shape[1], k, k], &mut rng, -0.5, 0.5);
    let b = random([cout, 1, 1, 1], &mut rng, -0.5, 0.5);
    let y = ops::conv2d(&x, &w, &b)?;
    let r = random(y.shape(), &mut rng, -1.0, 1.0);
    let g = ops::conv2d_backward(&x, &w, &b, &r, true)?;
    let analytic = [g.dx.expect("requested"), g.dw, g.db];
    Ok(check_gradients(&[x, w, b], &analytic, h, None, seed, |t| {
        (project(&ops::conv2d(&t[0], &t[1], &t[2]).unwrap(), &r), 0)
    }))
}

/// Max pooling on a tie-free input: values are a shuffled grid with spacing
/// far larger than `h`, so no perturbation changes an argmax.
pub fn check_maxpool(shape: [usize; 4], h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let n: usize = shape.iter().product();
    let perm = rng.permutation(n);
    let x = Tensor::from_fn(shape, |i| perm[i] as f64 / n as f64 - 0.5);
    let (y, arg) = ops::maxpool2x2(&x)?;
    let r = random(y.shape(), &mut rng, -1.0, 1.0);
    let dx = ops::maxpool2x2_backward(shape, &arg, &r);
    Ok(check_gradients(&[x], &[dx], h, None, seed, |t| {
        let (y, arg) = ops::maxpool2x2(&t[0]).unwrap();
        (project(&y, &r), signature(&arg))
    }))
}

pub fn check_upsample(shape: [usize; 4], h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let x = random(shape, &mut rng, -1.0, 1.0);
    let y = ops::upsample2x(&x);
    let r = random(y.shape(), &mut rng, -1.0, 1.0);
    let dx = ops::upsample2x_backward(&r)?;
    Ok(check_gradients(&[x], &[dx], h, None, seed, |t| {
        (project(&ops::upsample2x(&t[0]), &r), 0)
    }))
}

pub fn check_concat(shape_a: [usize; 4], cb: usize, h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let a = random(shape_a, &mut rng, -1.0, 1.0);
    let b = random([shape_a[0], cb, shape_a[2], shape_a[3]], &mut rng, -1.0, 1.0);
    let y = ops::concat(&a, &b)?;
    let r = random(y.shape(), &mut rng, -1.0, 1.0);
    let (da, db) = ops::concat_backward(&r, shape_a[1]);
    Ok(check_gradients(&[a, b], &[da, db], h, None, seed, |t| {
        (project(&ops::concat(&t[0], &t[1]).unwrap(), &r), 0)
    }))
}

/// ReLU with inputs kept at least `0.1` away from the kink.
pub fn check_relu(shape: [usize; 4], h: f64, seed: u64) -> GradCheckReport {
    let mut rng = Rng::new(seed);
    let x = Tensor::from_fn(shape, |_| {
        let m = rng.uniform(0.1, 1.0);
        if rng.below(2) == 0 { m } else { -m }
    });
    let y = ops::relu(&x);
    let r = random(y.shape(), &mut rng, -1.0, 1.0);
    let dx = ops::relu_backward(&y, &r);
    check_gradients(&[x], &[dx], h, None, seed, |t| {
        let y = ops::relu(&t[0]);
        let mask: Vec<bool> = y.data().iter().map(|&v| v > 0.0).collect();
        (project(&y, &r), signature(&mask))
    })
}

pub fn check_sigmoid(shape: [usize; 4], h: f64, seed: u64) -> GradCheckReport {
    let mut rng = Rng::new(seed);
    let x = random(shape, &mut rng, -4.0, 4.0);
    let y = ops::sigmoid(&x);
    let r = random(y.shape(), &mut rng, -1.0, 1.0);
    let dx = ops::sigmoid_backward(&y, &r);
    check_gradients(&[x], &[dx], h, None, seed, |t| (project(&ops::sigmoid(&t[0]), &r), 0))
}

/// L2 loss gradient with respect to the prediction.
pub fn check_l2(shape: [usize; 4], h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let p = random(shape, &mut rng, 0.0, 1.0);
    let t = random(shape, &mut rng, 0.0, 1.0);
    let (_, g) = ops::l2_loss(&p, &t)?;
    Ok(check_gradients(&[p], &[g], h, None, seed, |x| (ops::l2_loss(&x[0], &t).unwrap().0, 0)))
}

/// Fusion blend, gradient with respect to the weight map.
pub fn check_fuse(shape: [usize; 4], h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let w = random([shape[0], 1, shape[2], shape[3]], &mut rng, 0.0, 1.0);
    let s = random(shape, &mut rng, 0.0, 1.0);
    let l = random(shape, &mut rng, 0.0, 1.0);
    let r = random(shape, &mut rng, -1.0, 1.0);
    let dw = ops::fuse_backward(&w, &s, &l, &r)?;
    Ok(check_gradients(&[w], &[dw], h, None, seed, |t| {
        (project(&ops::fuse(&t[0], &s, &l).unwrap(), &r), 0)
    }))
}

/// Zero biases put units whose receptive field is all zeros exactly on the
/// ReLU kink, where the one-sided derivatives differ.
fn randomize_biases(params: &mut [Param<f64>], rng: &mut Rng) {
    for p in params.iter_mut().filter(|p| p.name.ends_with(".bias")) {
        for v in p.value.data_mut() {
            *v = rng.uniform(-0.2, 0.2);
        }
    }
}

/// Whole U-Net: every parameter and the input.
pub fn check_unet(config: UNetConfig, size: usize, h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut net = UNet::<f64>::new(config, seed)?;
    let mut rng = Rng::new(seed ^ 1);
    randomize_biases(net.params_mut(), &mut rng);
    let x = random([1, config.in_channels, size, size], &mut rng, 0.0, 1.0);
    let (y, tape) = net.forward_tape(&x)?;
    let r = random(y.shape(), &mut rng, -1.0, 1.0);
    let (grads, dx) = net.backward(&tape, r.clone(), true)?;
    let mut inputs: Vec<Tensor<f64>> = net.params().iter().map(|p| p.value.clone()).collect();
    inputs.push(x);
    let mut analytic = grads;
    analytic.push(dx.expect("requested"));
    let np = net.params().len();
    Ok(check_gradients(&inputs, &analytic, h, None, seed, |t| {
        let mut n = net.clone();
        for (p, v) in n.params_mut().iter_mut().zip(&t[..np]) {
            p.value = v.clone();
        }
        let (y, tape) = n.forward_tape(&t[np]).unwrap();
        (project(&y, &r), tape.region_signature())
    }))
}

/// Whole fusion net through the blend and the L2 loss: every parameter and
/// the network input.
pub fn check_fusion(config: FusionNetConfig, size: usize, h: f64, seed: u64) -> Result<GradCheckReport> {
    let mut net = FusionNet::<f64>::new(config, seed)?;
    let mut rng = Rng::new(seed ^ 1);
    randomize_biases(net.params_mut(), &mut rng);
    let shape = [1, 3, size, size];
    let s = random(shape, &mut rng, 0.0, 1.0);
    let l = random(shape, &mut rng, 0.0, 1.0);
    let target = random(shape, &mut rng, 0.0, 1.0);
    let x = random([1, config.in_channels, size, size], &mut rng, 0.0, 1.0);
    let (w, tape) = net.forward_tape(&x)?;
    let fused = ops::fuse(&w, &s, &l)?;
    let (_, dy) = ops::l2_loss(&fused, &target)?;
    let dw = ops::fuse_backward(&w, &s, &l, &dy)?;
    let (grads, dx) = net.backward(&tape, dw, true)?;
    let mut inputs: Vec<Tensor<f64>> = net.params().iter().map(|p| p.value.clone()).collect();
    inputs.push(x);
    let mut analytic = grads;
    analytic.push(dx.expect("requested"));
    let np = net.params().len();
    Ok(check_gradients(&inputs, &analytic, h, None, seed, |t| {
        let mut n = net.clone();
        for (p, v) in n.params_mut().iter_mut().zip(&t[..np]) {
            p.value = v.clone();
        }
        let (w, tape) = n.forward_tape(&t[np]).unwrap();
        let fused = ops::fuse(&w, &s, &l).unwrap();
        (ops::l2_loss(&fused, &target).unwrap().0, tape.region_signature())
    }))
}
