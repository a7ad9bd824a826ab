//! Forward and backward kernels for the individual layer kinds.
//!
//! Convolutions use NHWC layout with padding 1, so stride-1 output keeps
//! the spatial extent and stride-2 halves it (rounding up). Batchnorm
//! statistics accumulate in f64 regardless of the tensor scalar type.

use crate::nn::BN_EPS;
use crate::tensor::{Scalar, Tensor};

pub(crate) fn dense_forward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let o = w.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    let mut y = vec![S::ZERO; n * o];
    for r in 0..n {
        let xrow = &xd[r * i..(r + 1) * i];
        let yrow = &mut y[r * o..(r + 1) * o];
        yrow.copy_from_slice(bd);
        for (k, &xv) in xrow.iter().enumerate() {
            let wrow = &wd[k * o..(k + 1) * o];
            for (yv, &wv) in yrow.iter_mut().zip(wrow) {
                *yv = *yv + xv * wv;
            }
        }
    }
    Tensor::assemble(&[n, o], y)
}

pub(crate) fn dense_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (n, i) = (x.shape()[0], x.shape()[1]);
    let o = w.shape()[1];
    let xd = x.data();
    let wd = w.data();
    let dyd = dy.data();
    let mut dx = vec![S::ZERO; n * i];
    let mut dw = vec![S::ZERO; i * o];
    let mut db = vec![S::ZERO; o];
    for r in 0..n {
        let dyrow = &dyd[r * o..(r + 1) * o];
        let xrow = &xd[r * i..(r + 1) * i];
        for (dbv, &dyv) in db.iter_mut().zip(dyrow) {
            *dbv = *dbv + dyv;
        }
        for k in 0..i {
            let wrow = &wd[k * o..(k + 1) * o];
            let dwrow = &mut dw[k * o..(k + 1) * o];
            let mut acc = S::ZERO;
            for c in 0..o {
                acc = acc + dyrow[c] * wrow[c];
                dwrow[c] = dwrow[c] + xrow[k] * dyrow[c];
            }
            dx[r * i + k] = acc;
        }
    }
    (
        Tensor::assemble(&[n, i], dx),
        Tensor::assemble(&[i, o], dw),
        Tensor::assemble(&[o], db),
    )
}

pub(crate) fn conv3x3_forward<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, stride: usize) -> Tensor<S> {
    let [n, h, wd_, ci] = *x.shape() else { unreachable!("conv input is rank 4") };
    let co = w.shape()[3];
    let oh = (h - 1) / stride + 1;
    let ow = (wd_ - 1) / stride + 1;
    let xd = x.data();
    let kd = w.data();
    let mut y = vec![S::ZERO; n * oh * ow * co];
    for b in 0..n {
        for oi in 0..oh {
            for oj in 0..ow {
                let yoff = ((b * oh + oi) * ow + oj) * co;
                for kh in 0..3 {
                    let ii = (oi * stride + kh) as isize - 1;
                    if ii < 0 || ii as usize >= h {
                        continue;
                    }
                    for kw in 0..3 {
                        let jj = (oj * stride + kw) as isize - 1;
                        if jj < 0 || jj as usize >= wd_ {
                            continue;
                        }
                        let xoff = ((b * h + ii as usize) * wd_ + jj as usize) * ci;
                        let koff = (kh * 3 + kw) * ci * co;
                        for c in 0..ci {
                            let xv = xd[xoff + c];
                            let krow = &kd[koff + c * co..koff + (c + 1) * co];
                            let yrow = &mut y[yoff..yoff + co];
                            for (yv, &kv) in yrow.iter_mut().zip(krow) {
                                *yv = *yv + xv * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::assemble(&[n, oh, ow, co], y)
}

pub(crate) fn conv3x3_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &Tensor<S>,
    stride: usize,
) -> (Tensor<S>, Tensor<S>) {
    let [n, h, wd_, ci] = *x.shape() else { unreachable!("conv input is rank 4") };
    let co = w.shape()[3];
    let [_, oh, ow, _] = *dy.shape() else { unreachable!("conv grad is rank 4") };
    let xd = x.data();
    let kd = w.data();
    let dyd = dy.data();
    let mut dx = vec![S::ZERO; xd.len()];
    let mut dk = vec![S::ZERO; kd.len()];
    for b in 0..n {
        for oi in 0..oh {
            for oj in 0..ow {
                let dyoff = ((b * oh + oi) * ow + oj) * co;
                let dyrow = &dyd[dyoff..dyoff + co];
                for kh in 0..3 {
                    let ii = (oi * stride + kh) as isize - 1;
                    if ii < 0 || ii as usize >= h {
                        continue;
                    }
                    for kw in 0..3 {
                        let jj = (oj * stride + kw) as isize - 1;
                        if jj < 0 || jj as usize >= wd_ {
                            continue;
                        }
                        let xoff = ((b * h + ii as usize) * wd_ + jj as usize) * ci;
                        let koff = (kh * 3 + kw) * ci * co;
                        for c in 0..ci {
                            let xv = xd[xoff + c];
                            let krow = &kd[koff + c * co..koff + (c + 1) * co];
                            let dkrow = &mut dk[koff + c * co..koff + (c + 1) * co];
                            let mut acc = S::ZERO;
                            for cc in 0..co {
                                let g = dyrow[cc];
                                acc = acc + g * krow[cc];
                                dkrow[cc] = dkrow[cc] + xv * g;
                            }
                            dx[xoff + c] = dx[xoff + c] + acc;
                        }
                    }
                }
            }
        }
    }
    (Tensor::assemble(x.shape(), dx), Tensor::assemble(w.shape(), dk))
}

pub(crate) fn relu_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > S::ZERO { v } else { S::ZERO })
}

pub(crate) fn relu_backward<S: Scalar>(x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let data = x
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&xv, &gv)| if xv > S::ZERO { gv } else { S::ZERO })
        .collect();
    Tensor::assemble(x.shape(), data)
}

/// Batch statistics captured by a train-mode batchnorm forward pass.
pub(crate) struct BnCache {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Normalized activations, flattened in input order.
    pub xhat: Vec<f64>,
}

/// Channel count and per-channel element count for a batchnorm input.
fn bn_dims<S: Scalar>(x: &Tensor<S>) -> (usize, usize) {
    let c = *x.shape().last().expect("batchnorm input has a channel axis");
    (c, x.len() / c)
}

pub(crate) fn batchnorm_forward_train<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
) -> (Tensor<S>, BnCache) {
    let (c, per) = bn_dims(x);
    let xd = x.data();
    let mut mean = vec![0.0f64; c];
    for row in xd.chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v.to_f64();
        }
    }
    for m in &mut mean {
        *m /= per as f64;
    }
    let mut var = vec![0.0f64; c];
    for row in xd.chunks_exact(c) {
        for ((vs, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v.to_f64() - m;
            *vs += d * d;
        }
    }
    for v in &mut var {
        *v /= per as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0f64; xd.len()];
    let mut y = vec![S::ZERO; xd.len()];
    let gd = gamma.data();
    let bd = beta.data();
    for (i, &v) in xd.iter().enumerate() {
        let ch = i % c;
        let h = (v.to_f64() - mean[ch]) * inv_std[ch];
        xhat[i] = h;
        y[i] = S::from_f64(gd[ch].to_f64() * h + bd[ch].to_f64());
    }
    (Tensor::assemble(x.shape(), y), BnCache { mean, var, inv_std, xhat })
}

pub(crate) fn batchnorm_forward_eval<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    rmean: &Tensor<S>,
    rvar: &Tensor<S>,
) -> Tensor<S> {
    let (c, _) = bn_dims(x);
    let inv_std: Vec<f64> =
        rvar.data().iter().map(|&v| 1.0 / (v.to_f64() + BN_EPS).sqrt()).collect();
    let gd = gamma.data();
    let bd = beta.data();
    let md = rmean.data();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let ch = i % c;
            S::from_f64(gd[ch].to_f64() * (v.to_f64() - md[ch].to_f64()) * inv_std[ch]
                + bd[ch].to_f64())
        })
        .collect();
    Tensor::assemble(x.shape(), data)
}

pub(crate) fn batchnorm_backward_train<S: Scalar>(
    cache: &BnCache,
    gamma: &Tensor<S>,
    dy: &Tensor<S>,
    shape: &[usize],
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let c = gamma.len();
    let per = dy.len() / c;
    let dyd = dy.data();
    let mut dbeta = vec![0.0f64; c];
    let mut dgamma = vec![0.0f64; c];
    for (i, &g) in dyd.iter().enumerate() {
        let ch = i % c;
        let gf = g.to_f64();
        dbeta[ch] += gf;
        dgamma[ch] += gf * cache.xhat[i];
    }
    let gd = gamma.data();
    let n = per as f64;
    let mut dx = vec![S::ZERO; dyd.len()];
    for (i, &g) in dyd.iter().enumerate() {
        let ch = i % c;
        let term = n * g.to_f64() - dbeta[ch] - cache.xhat[i] * dgamma[ch];
        dx[i] = S::from_f64(gd[ch].to_f64() * cache.inv_std[ch] / n * term);
    }
    (
        Tensor::assemble(shape, dx),
        Tensor::assemble(&[c], dgamma.into_iter().map(S::from_f64).collect()),
        Tensor::assemble(&[c], dbeta.into_iter().map(S::from_f64).collect()),
    )
}

pub(crate) fn batchnorm_backward_eval<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    rmean: &Tensor<S>,
    rvar: &Tensor<S>,
    dy: &Tensor<S>,
) -> (Tensor<S>, Tensor<S>, Tensor<S>) {
    let (c, _) = bn_dims(x);
    let inv_std: Vec<f64> =
        rvar.data().iter().map(|&v| 1.0 / (v.to_f64() + BN_EPS).sqrt()).collect();
    let gd = gamma.data();
    let md = rmean.data();
    let xd = x.data();
    let dyd = dy.data();
    let mut dbeta = vec![0.0f64; c];
    let mut dgamma = vec![0.0f64; c];
    let mut dx = vec![S::ZERO; xd.len()];
    for (i, &g) in dyd.iter().enumerate() {
        let ch = i % c;
        let gf = g.to_f64();
        dbeta[ch] += gf;
        dgamma[ch] += gf * (xd[i].to_f64() - md[ch].to_f64()) * inv_std[ch];
        dx[i] = S::from_f64(gf * gd[ch].to_f64() * inv_std[ch]);
    }
    (
        Tensor::assemble(x.shape(), dx),
        Tensor::assemble(&[c], dgamma.into_iter().map(S::from_f64).collect()),
        Tensor::assemble(&[c], dbeta.into_iter().map(S::from_f64).collect()),
    )
}

pub(crate) fn gap_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let [n, h, w, c] = *x.shape() else { unreachable!("pool input is rank 4") };
    let xd = x.data();
    let scale = 1.0 / (h * w) as f64;
    let mut y = vec![0.0f64; n * c];
    for b in 0..n {
        for i in 0..h * w {
            let off = (b * h * w + i) * c;
            for ch in 0..c {
                y[b * c + ch] += xd[off + ch].to_f64();
            }
        }
    }
    Tensor::assemble(&[n, c], y.into_iter().map(|v| S::from_f64(v * scale)).collect())
}

pub(crate) fn gap_backward<S: Scalar>(x_shape: &[usize], dy: &Tensor<S>) -> Tensor<S> {
    let [n, h, w, c] = *x_shape else { unreachable!("pool input is rank 4") };
    let dyd = dy.data();
    let scale = S::from_f64(1.0 / (h * w) as f64);
    let mut dx = vec![S::ZERO; n * h * w * c];
    for b in 0..n {
        for i in 0..h * w {
            let off = (b * h * w + i) * c;
            for ch in 0..c {
                dx[off + ch] = dyd[b * c + ch] * scale;
            }
        }
    }
    Tensor::assemble(x_shape, dx)
}

/// Adds `src` onto `x`. When shapes differ, `src` is spatially subsampled
/// by stride 2 and its channels zero-padded at the high end.
pub(crate) fn residual_forward<S: Scalar>(x: &Tensor<S>, src: &Tensor<S>) -> Tensor<S> {
    if x.shape() == src.shape() {
        let data = x.data().iter().zip(src.data()).map(|(&a, &b)| a + b).collect();
        return Tensor::assemble(x.shape(), data);
    }
    let [n, h, w, c] = *x.shape() else { unreachable!("residual input is rank 4") };
    let [_, sh, sw, sc] = *src.shape() else { unreachable!("residual source is rank 4") };
    let xd = x.data();
    let sd = src.data();
    let mut y = xd.to_vec();
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let yoff = ((b * h + i) * w + j) * c;
                let soff = ((b * sh + 2 * i) * sw + 2 * j) * sc;
                for ch in 0..sc {
                    y[yoff + ch] = y[yoff + ch] + sd[soff + ch];
                }
            }
        }
    }
    Tensor::assemble(x.shape(), y)
}

/// Gradient of [`residual_forward`] with respect to the source branch.
pub(crate) fn residual_backward_src<S: Scalar>(dy: &Tensor<S>, src_shape: &[usize]) -> Tensor<S> {
    if dy.shape() == src_shape {
        return dy.clone();
    }
    let [n, h, w, c] = *dy.shape() else { unreachable!("residual grad is rank 4") };
    let [_, sh, sw, sc] = *src_shape else { unreachable!("residual source is rank 4") };
    let dyd = dy.data();
    let mut ds = vec![S::ZERO; n * sh * sw * sc];
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let yoff = ((b * h + i) * w + j) * c;
                let soff = ((b * sh + 2 * i) * sw + 2 * j) * sc;
                for ch in 0..sc {
                    ds[soff + ch] = dyd[yoff + ch];
                }
            }
        }
    }
    Tensor::assemble(src_shape, ds)
}
