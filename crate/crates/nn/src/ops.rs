//! Differentiable building blocks. Each forward function has a matching
//! backward that maps the output gradient to input (and parameter) gradients.

use crate::error::{Error, Result};
use crate::scalar::{matmul, Scalar};
use crate::tensor::Tensor;

fn dim_err<T>(msg: String) -> Result<T> {
    Err(Error::Dimension(msg))
}

fn check_conv(x: &Tensor<impl Scalar>, w: &Tensor<impl Scalar>, b: &Tensor<impl Scalar>) -> Result<usize> {
    let [o, i, kh, kw] = w.shape();
    if kh != kw || kh % 2 == 0 {
        return dim_err(format!("conv window must be square and odd, got {kh}x{kw}"));
    }
    if x.channels() != i {
        return dim_err(format!("conv expects {i} input channels, got {}", x.channels()));
    }
    if b.shape() != [o, 1, 1, 1] {
        return dim_err(format!("conv bias must have shape [{o}, 1, 1, 1], got {:?}", b.shape()));
    }
    Ok(kh)
}

/// Unfolds one `[c, h, w]` item into `[c*k*k, h*w]` patch columns with zero
/// padding `k / 2`.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, cols: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ch * k + ky) * k + kx) * hw..][..hw];
                // valid output x range: 0 <= x + kx - p < w
                let x_lo = p.saturating_sub(kx);
                let x_hi = (w + p).saturating_sub(kx).min(w);
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y + ky;
                    if sy < p || sy - p >= h || x_lo >= x_hi {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[(sy - p) * w..(sy - p + 1) * w];
                    out[..x_lo].fill(T::zero());
                    out[x_hi..].fill(T::zero());
                    out[x_lo..x_hi].copy_from_slice(&src[x_lo + kx - p..x_hi + kx - p]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch columns back into an image.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, x: &mut [T]) {
    let p = k / 2;
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut x[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ch * k + ky) * k + kx) * hw..][..hw];
                let x_lo = p.saturating_sub(kx);
                let x_hi = (w + p).saturating_sub(kx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < p || sy - p >= h {
                        continue;
                    }
                    let dst = &mut plane[(sy - p) * w..(sy - p + 1) * w];
                    for (d, &s) in dst[x_lo + kx - p..x_hi + kx - p]
                        .iter_mut()
                        .zip(&row[y * w + x_lo..y * w + x_hi])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Same-padded cross-correlation. `w` is `[out, in, k, k]`, `b` is
/// `[out, 1, 1, 1]`.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let k = check_conv(x, w, b)?;
    let [n, c, h, wd] = x.shape();
    let o = w.shape()[0];
    let hw = h * wd;
    let ckk = c * k * k;
    let mut y = Tensor::zeros([n, o, h, wd]);
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
    for i in 0..n {
        let xi = x.item(i);
        let patches: &[T] = if k == 1 {
            xi
        } else {
            im2col(xi, c, h, wd, k, &mut cols);
            &cols
        };
        let yi = y.item_mut(i);
        for (oc, out) in yi.chunks_exact_mut(hw).enumerate() {
            out.fill(b.data()[oc]);
        }
        matmul(o, ckk, hw, w.data(), false, patches, false, yi, true);
    }
    Ok(y)
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

/// Gradients of [`conv2d`]. The input gradient is skipped when `need_dx`
/// is false (first layer).
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    dy: &Tensor<T>,
    need_dx: bool,
) -> Result<ConvGrads<T>> {
    let k = check_conv(x, w, b)?;
    let [n, c, h, wd] = x.shape();
    let o = w.shape()[0];
    dy.ensure_shape([n, o, h, wd], "conv output gradient")?;
    let hw = h * wd;
    let ckk = c * k * k;
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(b.shape());
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    let mut cols = if k == 1 { Vec::new() } else { vec![T::zero(); ckk * hw] };
    let mut dcols = vec![T::zero(); if need_dx && k != 1 { ckk * hw } else { 0 }];
    for i in 0..n {
        let dyi = dy.item(i);
        for (oc, g) in dyi.chunks_exact(hw).enumerate() {
            db.data_mut()[oc] += g.iter().copied().sum::<T>();
        }
        let xi = x.item(i);
        let patches: &[T] = if k == 1 {
            xi
        } else {
            im2col(xi, c, h, wd, k, &mut cols);
            &cols
        };
        // dW[o, ckk] += dY[o, hw] * P[ckk, hw]^T
        matmul(o, hw, ckk, dyi, false, patches, true, dw.data_mut(), true);
        if let Some(dx) = dx.as_mut() {
            let dxi = dx.item_mut(i);
            if k == 1 {
                matmul(ckk, o, hw, w.data(), true, dyi, false, dxi, false);
            } else {
                matmul(ckk, o, hw, w.data(), true, dyi, false, &mut dcols, false);
                col2im(&dcols, c, h, wd, k, dxi);
            }
        }
    }
    Ok(ConvGrads { dx, dw, db })
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient of ReLU given its output.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    assert_eq!(y.shape(), dy.shape());
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Gradient of the logistic sigmoid given its output.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    assert_eq!(y.shape(), dy.shape());
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&s, &g)| g * s * (T::one() - s))
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

/// 2x2 max pooling with stride 2. Also returns, per output element, the flat
/// input index it was taken from (first maximum on ties).
pub fn maxpool2x2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return dim_err(format!("max pooling needs even dimensions, got {w}x{h}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    let mut arg = vec![0usize; n * c * oh * ow];
    let xd = x.data();
    for p in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let base = p * h * w + 2 * oy * w + 2 * ox;
                let mut best = base;
                for idx in [base + 1, base + w, base + w + 1] {
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                let o = (p * oh + oy) * ow + ox;
                y.data_mut()[o] = xd[best];
                arg[o] = best;
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool2x2_backward<T: Scalar>(
    input_shape: [usize; 4],
    argmax: &[usize],
    dy: &Tensor<T>,
) -> Tensor<T> {
    assert_eq!(argmax.len(), dy.len());
    let mut dx = Tensor::zeros(input_shape);
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        dx.data_mut()[i] += g;
    }
    dx
}

/// Nearest-neighbor upsampling by 2 in both directions.
pub fn upsample2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (2 * h, 2 * w);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    let xd = x.data();
    let yd = y.data_mut();
    for p in 0..n * c {
        for oy in 0..oh {
            let src = &xd[(p * h + oy / 2) * w..][..w];
            let dst = &mut yd[(p * oh + oy) * ow..][..ow];
            for (ox, d) in dst.iter_mut().enumerate() {
                *d = src[ox / 2];
            }
        }
    }
    y
}

pub fn upsample2x_backward<T: Scalar>(dy: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, oh, ow] = dy.shape();
    if oh % 2 != 0 || ow % 2 != 0 {
        return dim_err(format!("upsampled gradient must have even dimensions, got {ow}x{oh}"));
    }
    let (h, w) = (oh / 2, ow / 2);
    let mut dx = Tensor::zeros([n, c, h, w]);
    let dd = dy.data();
    let xd = dx.data_mut();
    for p in 0..n * c {
        for oy in 0..oh {
            let src = &dd[(p * oh + oy) * ow..][..ow];
            let dst = &mut xd[(p * h + oy / 2) * w..][..w];
            for (ox, &g) in src.iter().enumerate() {
                dst[ox / 2] += g;
            }
        }
    }
    Ok(dx)
}

/// Concatenates along the channel axis.
pub fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, ca, h, w] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if (n, h, w) != (nb, hb, wb) {
        return dim_err(format!("cannot concatenate {:?} with {:?}", a.shape(), b.shape()));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for i in 0..n {
        data.extend_from_slice(a.item(i));
        data.extend_from_slice(b.item(i));
    }
    Tensor::from_vec([n, ca + cb, h, w], data)
}

/// Splits a concatenated gradient back into its two parts.
pub fn concat_backward<T: Scalar>(dy: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = dy.shape();
    assert!(ca <= c);
    let split = ca * h * w;
    let mut da = Vec::with_capacity(n * split);
    let mut db = Vec::with_capacity(dy.len() - n * split);
    for i in 0..n {
        let item = dy.item(i);
        da.extend_from_slice(&item[..split]);
        db.extend_from_slice(&item[split..]);
    }
    (
        Tensor::from_vec([n, ca, h, w], da).expect("split shape"),
        Tensor::from_vec([n, c - ca, h, w], db).expect("split shape"),
    )
}

/// Mean squared error and its gradient `2 (pred - target) / N`.
pub fn l2_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return dim_err(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        ));
    }
    let n = T::from_usize(pred.len().max(1)).unwrap();
    let two = T::one() + T::one();
    let mut sum = 0f64;
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            let df = d.to_f64().unwrap();
            sum += df * df;
            two * d / n
        })
        .collect();
    let loss = T::from_f64_lossy(sum / pred.len().max(1) as f64);
    Ok((loss, Tensor::from_vec(pred.shape(), grad).expect("same shape")))
}

/// Per-pixel convex blend `w * long + (1 - w) * short`, one weight shared by
/// all channels.
pub fn fuse<T: Scalar>(weight: &Tensor<T>, short: &Tensor<T>, long: &Tensor<T>) -> Result<Tensor<T>> {
    check_fuse(weight, short, long)?;
    let plane = short.plane();
    let c = short.channels();
    let mut out = Tensor::zeros(short.shape());
    for i in 0..short.batch() {
        let wi = weight.item(i);
        let (si, li) = (short.item(i), long.item(i));
        let oi = out.item_mut(i);
        for ch in 0..c {
            for p in 0..plane {
                let j = ch * plane + p;
                let wv = wi[p];
                // written so that w = 0 and w = 1 reproduce the inputs exactly
                oi[j] = wv * li[j] + (T::one() - wv) * si[j];
            }
        }
    }
    Ok(out)
}

fn check_fuse<T: Scalar>(weight: &Tensor<T>, short: &Tensor<T>, long: &Tensor<T>) -> Result<()> {
    let [n, _, h, w] = short.shape();
    if long.shape() != short.shape() {
        return dim_err(format!(
            "fusion inputs differ: {:?} vs {:?}",
            short.shape(),
            long.shape()
        ));
    }
    weight.ensure_shape([n, 1, h, w], "fusion weight map")
}

/// Gradient of [`fuse`] with respect to the weight map.
pub fn fuse_backward<T: Scalar>(
    weight: &Tensor<T>,
    short: &Tensor<T>,
    long: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_fuse(weight, short, long)?;
    dy.ensure_shape(short.shape(), "fusion output gradient")?;
    let plane = short.plane();
    let mut dw = Tensor::zeros(weight.shape());
    for i in 0..short.batch() {
        let (si, li, gi) = (short.item(i), long.item(i), dy.item(i));
        let di = dw.item_mut(i);
        for ch in 0..short.channels() {
            for p in 0..plane {
                let j = ch * plane + p;
                di[p] += gi[j] * (li[j] - si[j]);
            }
        }
    }
    Ok(dw)
}
