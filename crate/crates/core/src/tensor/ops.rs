//! Forward operations and their hand-derived reverse-mode rules.
//!
//! Shape conventions: the channel axis is always last. 1-D ops accept
//! `[T, C]` or batched `[B, T, C]`; 2-D ops accept `[H, W, C]` or
//! `[B, H, W, C]`; `dense` accepts `[N]` or `[B, N]`. Every op validates its
//! inputs and rejects non-finite outputs instead of propagating them.

use std::sync::Arc;

use super::{BackwardFn, Mode, Padding, Result, Tensor, TensorError};
use crate::rng::SeedRng;
use crate::scalar::Scalar;

#[inline]
fn axpy<T: Scalar>(acc: &mut [T], a: T, xs: &[T]) {
    for (o, x) in acc.iter_mut().zip(xs) {
        *o += a * *x;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

fn mismatch(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

/// Split `[T, C]` / `[B, T, C]` into (batch, t, c, batched).
fn dims_1d(op: &'static str, input: &Tensor<impl Scalar>) -> Result<(usize, usize, usize, bool)> {
    match *input.shape() {
        [t, c] => Ok((1, t, c, false)),
        [b, t, c] => Ok((b, t, c, true)),
        ref s => Err(mismatch(op, format!("expected [T,C] or [B,T,C], got {:?}", s))),
    }
}

fn dims_2d(
    op: &'static str,
    input: &Tensor<impl Scalar>,
) -> Result<(usize, usize, usize, usize, bool)> {
    match *input.shape() {
        [h, w, c] => Ok((1, h, w, c, false)),
        [b, h, w, c] => Ok((b, h, w, c, true)),
        ref s => Err(mismatch(op, format!("expected [H,W,C] or [B,H,W,C], got {:?}", s))),
    }
}

fn pad_and_len(padding: Padding, t: usize, k: usize) -> (usize, usize) {
    match padding {
        Padding::Valid => (0, t + 1 - k),
        Padding::Same => ((k - 1) / 2, t),
    }
}

/// 1-D cross-correlation over all input channels.
///
/// `input` is `[T, C]` or `[B, T, C]`, `weight` is `[K, C, F]`, `bias` is
/// `[F]`. Valid padding yields `T' = T - K + 1`; same padding keeps `T`.
pub fn conv1d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    const OP: &str = "conv1d";
    let (bsz, t_in, cc, batched) = dims_1d(OP, input)?;
    let (k, wc, fc) = match *weight.shape() {
        [k, c, f] => (k, c, f),
        ref s => return Err(mismatch(OP, format!("weight must be [K,C,F], got {:?}", s))),
    };
    if wc != cc {
        return Err(mismatch(OP, format!("input has {} channels, weight expects {}", cc, wc)));
    }
    if bias.shape() != [fc] {
        return Err(mismatch(OP, format!("bias must be [{}], got {:?}", fc, bias.shape())));
    }
    if k == 0 || (padding == Padding::Valid && k > t_in) {
        return Err(mismatch(OP, format!("kernel {} does not fit input length {}", k, t_in)));
    }
    let (pad, t_out) = pad_and_len(padding, t_in, k);

    let x = input.values();
    let w = weight.values();
    let b = bias.values();
    let mut out = vec![T::zero(); bsz * t_out * fc];
    for bi in 0..bsz {
        for to in 0..t_out {
            let orow = &mut out[(bi * t_out + to) * fc..][..fc];
            orow.copy_from_slice(b);
            for kk in 0..k {
                let ti = to + kk;
                if ti < pad || ti - pad >= t_in {
                    continue;
                }
                let irow = &x[(bi * t_in + ti - pad) * cc..][..cc];
                for (c, &xv) in irow.iter().enumerate() {
                    axpy(orow, xv, &w[(kk * cc + c) * fc..][..fc]);
                }
            }
        }
    }

    let out_shape = if batched { vec![bsz, t_out, fc] } else { vec![t_out, fc] };
    let (xd, wd) = (Arc::clone(&input.inner.data), Arc::clone(&weight.inner.data));
    let (need_x, need_w, need_b) =
        (input.requires_grad(), weight.requires_grad(), bias.requires_grad());
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dx = if need_x { Some(vec![T::zero(); bsz * t_in * cc]) } else { None };
        let mut dw = if need_w { Some(vec![T::zero(); k * cc * fc]) } else { None };
        let mut db = if need_b { Some(vec![T::zero(); fc]) } else { None };
        for bi in 0..bsz {
            for to in 0..t_out {
                let grow = &g[(bi * t_out + to) * fc..][..fc];
                if let Some(db) = db.as_mut() {
                    axpy(db, T::one(), grow);
                }
                for kk in 0..k {
                    let ti = to + kk;
                    if ti < pad || ti - pad >= t_in {
                        continue;
                    }
                    let in_base = (bi * t_in + ti - pad) * cc;
                    for c in 0..cc {
                        let wrow = &wd[(kk * cc + c) * fc..][..fc];
                        if let Some(dx) = dx.as_mut() {
                            dx[in_base + c] += dot(grow, wrow);
                        }
                        if let Some(dw) = dw.as_mut() {
                            axpy(&mut dw[(kk * cc + c) * fc..][..fc], xd[in_base + c], grow);
                        }
                    }
                }
            }
        }
        vec![dx, dw, db]
    });
    Tensor::from_op(OP, out, out_shape, vec![input.clone(), weight.clone(), bias.clone()], backward)
}

/// 2-D cross-correlation with independent padding policy per axis.
///
/// `input` is `[H, W, C]` or `[B, H, W, C]`, `weight` is `[Kh, Kw, C, F]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    pad_h: Padding,
    pad_w: Padding,
) -> Result<Tensor<T>> {
    const OP: &str = "conv2d";
    let (bsz, h_in, w_in, cc, batched) = dims_2d(OP, input)?;
    let (kh, kw, wc, fc) = match *weight.shape() {
        [kh, kw, c, f] => (kh, kw, c, f),
        ref s => return Err(mismatch(OP, format!("weight must be [Kh,Kw,C,F], got {:?}", s))),
    };
    if wc != cc {
        return Err(mismatch(OP, format!("input has {} channels, weight expects {}", cc, wc)));
    }
    if bias.shape() != [fc] {
        return Err(mismatch(OP, format!("bias must be [{}], got {:?}", fc, bias.shape())));
    }
    if kh == 0 || kw == 0 {
        return Err(mismatch(OP, "zero-sized kernel".into()));
    }
    if (pad_h == Padding::Valid && kh > h_in) || (pad_w == Padding::Valid && kw > w_in) {
        return Err(mismatch(
            OP,
            format!("kernel {}x{} does not fit input {}x{}", kh, kw, h_in, w_in),
        ));
    }
    let (ph, h_out) = pad_and_len(pad_h, h_in, kh);
    let (pw, w_out) = pad_and_len(pad_w, w_in, kw);

    let x = input.values();
    let w = weight.values();
    let b = bias.values();
    let mut out = vec![T::zero(); bsz * h_out * w_out * fc];
    for bi in 0..bsz {
        for ho in 0..h_out {
            for wo in 0..w_out {
                let orow = &mut out[((bi * h_out + ho) * w_out + wo) * fc..][..fc];
                orow.copy_from_slice(b);
                for ki in 0..kh {
                    let hi = ho + ki;
                    if hi < ph || hi - ph >= h_in {
                        continue;
                    }
                    for kj in 0..kw {
                        let wi = wo + kj;
                        if wi < pw || wi - pw >= w_in {
                            continue;
                        }
                        let irow = &x[((bi * h_in + hi - ph) * w_in + wi - pw) * cc..][..cc];
                        for (c, &xv) in irow.iter().enumerate() {
                            axpy(orow, xv, &w[((ki * kw + kj) * cc + c) * fc..][..fc]);
                        }
                    }
                }
            }
        }
    }

    let out_shape =
        if batched { vec![bsz, h_out, w_out, fc] } else { vec![h_out, w_out, fc] };
    let (xd, wd) = (Arc::clone(&input.inner.data), Arc::clone(&weight.inner.data));
    let (need_x, need_w, need_b) =
        (input.requires_grad(), weight.requires_grad(), bias.requires_grad());
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dx = if need_x { Some(vec![T::zero(); bsz * h_in * w_in * cc]) } else { None };
        let mut dw = if need_w { Some(vec![T::zero(); kh * kw * cc * fc]) } else { None };
        let mut db = if need_b { Some(vec![T::zero(); fc]) } else { None };
        for bi in 0..bsz {
            for ho in 0..h_out {
                for wo in 0..w_out {
                    let grow = &g[((bi * h_out + ho) * w_out + wo) * fc..][..fc];
                    if let Some(db) = db.as_mut() {
                        axpy(db, T::one(), grow);
                    }
                    for ki in 0..kh {
                        let hi = ho + ki;
                        if hi < ph || hi - ph >= h_in {
                            continue;
                        }
                        for kj in 0..kw {
                            let wi = wo + kj;
                            if wi < pw || wi - pw >= w_in {
                                continue;
                            }
                            let in_base = ((bi * h_in + hi - ph) * w_in + wi - pw) * cc;
                            for c in 0..cc {
                                let wrow = &wd[((ki * kw + kj) * cc + c) * fc..][..fc];
                                if let Some(dx) = dx.as_mut() {
                                    dx[in_base + c] += dot(grow, wrow);
                                }
                                if let Some(dw) = dw.as_mut() {
                                    axpy(
                                        &mut dw[((ki * kw + kj) * cc + c) * fc..][..fc],
                                        xd[in_base + c],
                                        grow,
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        vec![dx, dw, db]
    });
    Tensor::from_op(OP, out, out_shape, vec![input.clone(), weight.clone(), bias.clone()], backward)
}

/// Per-channel running statistics owned by a batch-norm layer.
#[derive(Debug, Clone)]
pub struct RunningStats<T: Scalar> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![T::zero(); channels], var: vec![T::one(); channels] }
    }
}

/// Batch normalization over all axes but the last (channel) axis.
///
/// Train mode normalizes by batch statistics (biased variance) and folds them
/// into `running` with the given momentum; infer mode normalizes by the
/// running statistics. Variance is guarded by `eps`, never a bare division.
pub fn batch_norm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    mode: Mode,
    eps: f64,
    momentum: f64,
) -> Result<Tensor<T>> {
    const OP: &str = "batch_norm";
    let rank = input.rank();
    if rank < 2 {
        return Err(mismatch(OP, format!("input must have a channel axis, got {:?}", input.shape())));
    }
    let cc = input.shape()[rank - 1];
    let n = input.numel() / cc;
    if gamma.shape() != [cc] || beta.shape() != [cc] {
        return Err(mismatch(OP, format!("gamma/beta must be [{}]", cc)));
    }
    if running.mean.len() != cc || running.var.len() != cc {
        return Err(mismatch(OP, format!("running stats must have {} channels", cc)));
    }
    if mode == Mode::Train && n < 2 {
        return Err(TensorError::Invalid {
            op: OP,
            detail: format!("train mode needs batch*time > 1, got {}", n),
        });
    }

    let x = input.values();
    let gm = gamma.values();
    let bt = beta.values();
    let epsv = T::from_f64(eps);

    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![T::zero(); cc];
            let mut var = vec![T::zero(); cc];
            for row in x.chunks_exact(cc) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += *v;
                }
            }
            let inv_n = T::from_f64(1.0 / n as f64);
            for m in mean.iter_mut() {
                *m = *m * inv_n;
            }
            for row in x.chunks_exact(cc) {
                for c in 0..cc {
                    let d = row[c] - mean[c];
                    var[c] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v = *v * inv_n;
            }
            let mom = T::from_f64(momentum);
            let one_minus = T::one() - mom;
            for c in 0..cc {
                running.mean[c] = mom * running.mean[c] + one_minus * mean[c];
                running.var[c] = mom * running.var[c] + one_minus * var[c];
            }
            (mean, var)
        }
        Mode::Infer => (running.mean.clone(), running.var.clone()),
    };

    let inv_sigma: Vec<T> = var.iter().map(|&v| T::one() / (v + epsv).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for (i, &xv) in x.iter().enumerate() {
        let c = i % cc;
        let xh = (xv - mean[c]) * inv_sigma[c];
        xhat[i] = xh;
        out[i] = gm[c] * xh + bt[c];
    }

    let shape = input.shape().to_vec();
    let gamma_d = Arc::clone(&gamma.inner.data);
    let train = mode == Mode::Train;
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dgamma = vec![T::zero(); cc];
        let mut dbeta = vec![T::zero(); cc];
        for (i, &gv) in g.iter().enumerate() {
            let c = i % cc;
            dgamma[c] += gv * xhat[i];
            dbeta[c] += gv;
        }
        let mut dx = vec![T::zero(); g.len()];
        if train {
            // dx = gamma/sigma * (g - mean(g) - xhat * mean(g*xhat)), means per channel.
            let inv_n = T::from_f64(1.0 / n as f64);
            for (i, &gv) in g.iter().enumerate() {
                let c = i % cc;
                dx[i] = gamma_d[c]
                    * inv_sigma[c]
                    * (gv - dbeta[c] * inv_n - xhat[i] * dgamma[c] * inv_n);
            }
        } else {
            for (i, &gv) in g.iter().enumerate() {
                let c = i % cc;
                dx[i] = gv * gamma_d[c] * inv_sigma[c];
            }
        }
        vec![Some(dx), Some(dgamma), Some(dbeta)]
    });
    Tensor::from_op(OP, out, shape, vec![input.clone(), gamma.clone(), beta.clone()], backward)
}

/// Non-overlapping temporal max pooling; a trailing remainder shorter than
/// `size` is dropped (floor semantics).
pub fn max_pool1d<T: Scalar>(input: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    const OP: &str = "max_pool1d";
    let (bsz, t_in, cc, batched) = dims_1d(OP, input)?;
    if size == 0 {
        return Err(TensorError::Invalid { op: OP, detail: "pool size must be >= 1".into() });
    }
    if size > t_in {
        return Err(TensorError::Invalid {
            op: OP,
            detail: format!("pool size {} exceeds input length {}", size, t_in),
        });
    }
    let t_out = t_in / size;
    let x = input.values();
    let mut out = vec![T::zero(); bsz * t_out * cc];
    let mut arg = vec![0usize; bsz * t_out * cc];
    for bi in 0..bsz {
        for to in 0..t_out {
            for c in 0..cc {
                let mut best_i = (bi * t_in + to * size) * cc + c;
                let mut best = x[best_i];
                for j in 1..size {
                    let idx = (bi * t_in + to * size + j) * cc + c;
                    if x[idx] > best {
                        best = x[idx];
                        best_i = idx;
                    }
                }
                let o = (bi * t_out + to) * cc + c;
                out[o] = best;
                arg[o] = best_i;
            }
        }
    }
    let out_shape = if batched { vec![bsz, t_out, cc] } else { vec![t_out, cc] };
    let in_numel = input.numel();
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dx = vec![T::zero(); in_numel];
        for (o, &gv) in g.iter().enumerate() {
            dx[arg[o]] += gv;
        }
        vec![Some(dx)]
    });
    Tensor::from_op(OP, out, out_shape, vec![input.clone()], backward)
}

/// Collapse the temporal axis into per-channel mean then per-channel max,
/// concatenated in that fixed order: `[T, C] -> [2C]`, `[B, T, C] -> [B, 2C]`.
pub fn global_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    const OP: &str = "global_pool";
    let (bsz, t_in, cc, batched) = dims_1d(OP, input)?;
    if t_in == 0 {
        return Err(TensorError::Invalid { op: OP, detail: "empty temporal axis".into() });
    }
    let x = input.values();
    let mut out = vec![T::zero(); bsz * 2 * cc];
    let mut arg = vec![0usize; bsz * cc];
    let inv_t = T::from_f64(1.0 / t_in as f64);
    for bi in 0..bsz {
        let orow = &mut out[bi * 2 * cc..][..2 * cc];
        for c in 0..cc {
            let mut best_i = (bi * t_in) * cc + c;
            let mut best = x[best_i];
            let mut sum = T::zero();
            for t in 0..t_in {
                let idx = (bi * t_in + t) * cc + c;
                sum += x[idx];
                if x[idx] > best {
                    best = x[idx];
                    best_i = idx;
                }
            }
            orow[c] = sum * inv_t;
            orow[cc + c] = best;
            arg[bi * cc + c] = best_i;
        }
    }
    let out_shape = if batched { vec![bsz, 2 * cc] } else { vec![2 * cc] };
    let in_numel = input.numel();
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dx = vec![T::zero(); in_numel];
        let inv_t = T::from_f64(1.0 / t_in as f64);
        for bi in 0..bsz {
            let grow = &g[bi * 2 * cc..][..2 * cc];
            for c in 0..cc {
                let gm = grow[c] * inv_t;
                for t in 0..t_in {
                    dx[(bi * t_in + t) * cc + c] += gm;
                }
                dx[arg[bi * cc + c]] += grow[cc + c];
            }
        }
        vec![Some(dx)]
    });
    Tensor::from_op(OP, out, out_shape, vec![input.clone()], backward)
}

/// Affine map: `[N] -> [U]` or `[B, N] -> [B, U]` with weight `[N, U]`.
pub fn dense<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    const OP: &str = "dense";
    let (bsz, n, batched) = match *input.shape() {
        [n] => (1, n, false),
        [b, n] => (b, n, true),
        ref s => return Err(mismatch(OP, format!("expected [N] or [B,N], got {:?}", s))),
    };
    let (wn, u) = match *weight.shape() {
        [wn, u] => (wn, u),
        ref s => return Err(mismatch(OP, format!("weight must be [N,U], got {:?}", s))),
    };
    if wn != n {
        return Err(mismatch(OP, format!("input has {} features, weight expects {}", n, wn)));
    }
    if bias.shape() != [u] {
        return Err(mismatch(OP, format!("bias must be [{}], got {:?}", u, bias.shape())));
    }
    let x = input.values();
    let w = weight.values();
    let b = bias.values();
    let mut out = vec![T::zero(); bsz * u];
    for bi in 0..bsz {
        let orow = &mut out[bi * u..][..u];
        orow.copy_from_slice(b);
        for (i, &xv) in x[bi * n..][..n].iter().enumerate() {
            axpy(orow, xv, &w[i * u..][..u]);
        }
    }
    let out_shape = if batched { vec![bsz, u] } else { vec![u] };
    let (xd, wd) = (Arc::clone(&input.inner.data), Arc::clone(&weight.inner.data));
    let (need_x, need_w, need_b) =
        (input.requires_grad(), weight.requires_grad(), bias.requires_grad());
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dx = if need_x { Some(vec![T::zero(); bsz * n]) } else { None };
        let mut dw = if need_w { Some(vec![T::zero(); n * u]) } else { None };
        let mut db = if need_b { Some(vec![T::zero(); u]) } else { None };
        for bi in 0..bsz {
            let grow = &g[bi * u..][..u];
            if let Some(db) = db.as_mut() {
                axpy(db, T::one(), grow);
            }
            for i in 0..n {
                if let Some(dx) = dx.as_mut() {
                    dx[bi * n + i] += dot(grow, &wd[i * u..][..u]);
                }
                if let Some(dw) = dw.as_mut() {
                    axpy(&mut dw[i * u..][..u], xd[bi * n + i], grow);
                }
            }
        }
        vec![dx, dw, db]
    });
    Tensor::from_op(OP, out, out_shape, vec![input.clone(), weight.clone(), bias.clone()], backward)
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let x = input.values();
    let out: Vec<T> = x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    let xd = Arc::clone(&input.inner.data);
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let dx = g
            .iter()
            .zip(xd.iter())
            .map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() })
            .collect();
        vec![Some(dx)]
    });
    Tensor::from_op("relu", out, input.shape().to_vec(), vec![input.clone()], backward)
}

pub fn sigmoid<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let out: Vec<T> = input
        .values()
        .iter()
        .map(|&v| {
            if v >= T::zero() {
                T::one() / (T::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (T::one() + e)
            }
        })
        .collect();
    let yd: Arc<[T]> = out.clone().into();
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let dx = g
            .iter()
            .zip(yd.iter())
            .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
            .collect();
        vec![Some(dx)]
    });
    Tensor::from_op("sigmoid", out, input.shape().to_vec(), vec![input.clone()], backward)
}

/// Inverted dropout: train mode zeroes each element with probability `rate`
/// and scales survivors by `1/(1-rate)`; infer mode is the identity.
pub fn dropout<T: Scalar>(
    input: &Tensor<T>,
    rate: f64,
    mode: Mode,
    rng: &mut SeedRng,
) -> Result<Tensor<T>> {
    const OP: &str = "dropout";
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::Invalid {
            op: OP,
            detail: format!("rate must be in [0,1), got {}", rate),
        });
    }
    if mode == Mode::Infer || rate == 0.0 {
        // Identity, bit-exact; no rng draws are consumed.
        return Ok(input.clone());
    }
    let keep_scale = T::from_f64(1.0 / (1.0 - rate));
    let factors: Vec<T> = (0..input.numel())
        .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep_scale })
        .collect();
    let out: Vec<T> = input.values().iter().zip(&factors).map(|(&x, &f)| x * f).collect();
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let dx = g.iter().zip(&factors).map(|(&gv, &f)| gv * f).collect();
        vec![Some(dx)]
    });
    Tensor::from_op(OP, out, input.shape().to_vec(), vec![input.clone()], backward)
}

fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(mismatch(op, format!("axis {} out of range for {:?}", axis, shape)));
    }
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    if n == 0 {
        return Err(TensorError::Invalid { op, detail: "reduction over empty axis".into() });
    }
    Ok((outer, n, inner))
}

/// Mean over one axis; the axis is removed from the shape.
pub fn mean_axis<T: Scalar>(input: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    const OP: &str = "mean_axis";
    let (outer, n, inner) = axis_split(OP, input.shape(), axis)?;
    let x = input.values();
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut out = vec![T::zero(); outer * inner];
    // Sum first, scale once: keeps the mean order-insensitive for exactly
    // representable sums.
    for o in 0..outer {
        for j in 0..n {
            let base = (o * n + j) * inner;
            axpy(&mut out[o * inner..][..inner], T::one(), &x[base..][..inner]);
        }
        for v in out[o * inner..][..inner].iter_mut() {
            *v = *v * inv_n;
        }
    }
    let mut out_shape = input.shape().to_vec();
    out_shape.remove(axis);
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dx = vec![T::zero(); outer * n * inner];
        for o in 0..outer {
            let grow = &g[o * inner..][..inner];
            for j in 0..n {
                axpy(&mut dx[(o * n + j) * inner..][..inner], inv_n, grow);
            }
        }
        vec![Some(dx)]
    });
    Tensor::from_op(OP, out, out_shape, vec![input.clone()], backward)
}

/// Max over one axis; the axis is removed from the shape. Gradient routes to
/// the first maximum.
pub fn max_axis<T: Scalar>(input: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    const OP: &str = "max_axis";
    let (outer, n, inner) = axis_split(OP, input.shape(), axis)?;
    let x = input.values();
    let mut out = vec![T::zero(); outer * inner];
    let mut arg = vec![0usize; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            let mut best_i = o * n * inner + i;
            let mut best = x[best_i];
            for j in 1..n {
                let idx = (o * n + j) * inner + i;
                if x[idx] > best {
                    best = x[idx];
                    best_i = idx;
                }
            }
            out[o * inner + i] = best;
            arg[o * inner + i] = best_i;
        }
    }
    let mut out_shape = input.shape().to_vec();
    out_shape.remove(axis);
    let in_numel = input.numel();
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut dx = vec![T::zero(); in_numel];
        for (o, &gv) in g.iter().enumerate() {
            dx[arg[o]] += gv;
        }
        vec![Some(dx)]
    });
    Tensor::from_op(OP, out, out_shape, vec![input.clone()], backward)
}

/// Concatenate along the last axis; all other axes must agree.
pub fn concat_last<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    const OP: &str = "concat_last";
    if parts.is_empty() {
        return Err(TensorError::Invalid { op: OP, detail: "nothing to concatenate".into() });
    }
    let lead = &parts[0].shape()[..parts[0].rank() - 1];
    for p in parts {
        if p.rank() == 0 || &p.shape()[..p.rank() - 1] != lead {
            return Err(mismatch(
                OP,
                format!("incompatible shapes {:?} vs {:?}", parts[0].shape(), p.shape()),
            ));
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| p.shape()[p.rank() - 1]).collect();
    let total: usize = widths.iter().sum();
    let outer: usize = lead.iter().product();
    let mut out = vec![T::zero(); outer * total];
    for o in 0..outer {
        let mut at = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            out[o * total + at..][..w].copy_from_slice(&p.values()[o * w..][..w]);
            at += w;
        }
    }
    let mut out_shape = lead.to_vec();
    out_shape.push(total);
    let widths_b = widths.clone();
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let mut grads: Vec<Option<Vec<T>>> =
            widths_b.iter().map(|&w| Some(vec![T::zero(); outer * w])).collect();
        for o in 0..outer {
            let mut at = 0;
            for (gi, &w) in grads.iter_mut().zip(&widths_b) {
                gi.as_mut().unwrap()[o * w..][..w].copy_from_slice(&g[o * total + at..][..w]);
                at += w;
            }
        }
        grads
    });
    let parents: Vec<Tensor<T>> = parts.iter().map(|p| (*p).clone()).collect();
    Tensor::from_op(OP, out, out_shape, parents, backward)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    const OP: &str = "add";
    if a.shape() != b.shape() {
        return Err(mismatch(OP, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let out: Vec<T> = a.values().iter().zip(b.values()).map(|(&x, &y)| x + y).collect();
    let backward: BackwardFn<T> =
        Box::new(move |g: &[T]| vec![Some(g.to_vec()), Some(g.to_vec())]);
    Tensor::from_op(OP, out, a.shape().to_vec(), vec![a.clone(), b.clone()], backward)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    const OP: &str = "mul";
    if a.shape() != b.shape() {
        return Err(mismatch(OP, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let out: Vec<T> = a.values().iter().zip(b.values()).map(|(&x, &y)| x * y).collect();
    let (ad, bd) = (Arc::clone(&a.inner.data), Arc::clone(&b.inner.data));
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| {
        let da = g.iter().zip(bd.iter()).map(|(&gv, &y)| gv * y).collect();
        let db = g.iter().zip(ad.iter()).map(|(&gv, &x)| gv * x).collect();
        vec![Some(da), Some(db)]
    });
    Tensor::from_op(OP, out, a.shape().to_vec(), vec![a.clone(), b.clone()], backward)
}

pub fn scale<T: Scalar>(input: &Tensor<T>, factor: T) -> Result<Tensor<T>> {
    let out: Vec<T> = input.values().iter().map(|&x| x * factor).collect();
    let backward: BackwardFn<T> =
        Box::new(move |g: &[T]| vec![Some(g.iter().map(|&gv| gv * factor).collect())]);
    Tensor::from_op("scale", out, input.shape().to_vec(), vec![input.clone()], backward)
}

/// Sum of all elements, as a rank-0 tensor.
pub fn sum_all<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let s: T = input.values().iter().copied().sum();
    let n = input.numel();
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| vec![Some(vec![g[0]; n])]);
    Tensor::from_op("sum_all", vec![s], vec![], vec![input.clone()], backward)
}

/// Mean of all elements, as a rank-0 tensor.
pub fn mean_all<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    const OP: &str = "mean_all";
    let n = input.numel();
    if n == 0 {
        return Err(TensorError::Invalid { op: OP, detail: "mean of empty tensor".into() });
    }
    let inv_n = T::from_f64(1.0 / n as f64);
    let s: T = input.values().iter().copied().sum();
    let backward: BackwardFn<T> = Box::new(move |g: &[T]| vec![Some(vec![g[0] * inv_n; n])]);
    Tensor::from_op(OP, vec![s * inv_n], vec![], vec![input.clone()], backward)
}

/// View under a new shape (same element count, shared storage).
pub fn reshape<T: Scalar>(input: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    input.view("reshape", shape.to_vec())
}
