//! Dense kernels behind the tape ops. All reductions accumulate in f64.

use alloc::vec;
use alloc::vec::Vec;

use super::{Tensor, TensorError};

pub(crate) fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Tensor {
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p] as f64;
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                row[j] += av * brow[j] as f64;
            }
        }
    }
    Tensor::new(vec![m, n], out.iter().map(|&x| x as f32).collect()).expect("matmul shape")
}

/// dA = G * B^T for G `[m,n]`, B `[k,n]`.
pub(crate) fn matmul_grad_a(g: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f64; m * k];
    for i in 0..m {
        for p in 0..k {
            let mut acc = 0.0f64;
            let grow = &g[i * n..(i + 1) * n];
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                acc += grow[j] as f64 * brow[j] as f64;
            }
            out[i * k + p] = acc;
        }
    }
    out.iter().map(|&x| x as f32).collect()
}

/// dB = A^T * G for A `[m,k]`, G `[m,n]`.
pub(crate) fn matmul_grad_b(a: &[f32], g: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut out = vec![0.0f64; k * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p] as f64;
            if av == 0.0 {
                continue;
            }
            let grow = &g[i * n..(i + 1) * n];
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * grow[j] as f64;
            }
        }
    }
    out.iter().map(|&x| x as f32).collect()
}

// ── convolution ──────────────────────────────────────────────────────

fn conv_dims(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
) -> Result<(usize, usize, usize, usize, usize, usize), TensorError> {
    let (b, c, h, w) = input.dims4()?;
    let (f, ck, kh, kw) = kernel.dims4()?;
    if kh != kw || (kh != 1 && kh != 3) {
        return Err(TensorError::BadShape {
            op: "conv2d",
            shape: kernel.shape().to_vec(),
            detail: "kernel must be 1x1 or 3x3",
        });
    }
    if ck != c {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: input.shape().to_vec(),
            rhs: kernel.shape().to_vec(),
        });
    }
    if bias.shape() != [f] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            lhs: kernel.shape().to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    Ok((b, c, h, w, f, kh))
}

/// Same-padding stride-1 convolution. Accumulates each output plane in f64.
pub(crate) fn conv2d_forward(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
) -> Result<Tensor, TensorError> {
    let (b, c, h, w, f, k) = conv_dims(input, kernel, bias)?;
    let pad = (k - 1) as isize / 2;
    let hw = h * w;
    let x = input.data();
    let wgt = kernel.data();
    let mut out = vec![0.0f32; b * f * hw];
    let mut plane = vec![0.0f64; hw];
    for bi in 0..b {
        for fi in 0..f {
            plane.iter_mut().for_each(|v| *v = bias.data()[fi] as f64);
            for ci in 0..c {
                let xp = &x[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let wv = wgt[((fi * c + ci) * k + ky) * k + kx] as f64;
                        if wv == 0.0 {
                            continue;
                        }
                        for y in 0..h as isize {
                            let sy = y + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let x0 = (-dx).max(0);
                            let x1 = (w as isize - dx).min(w as isize);
                            let prow = &mut plane[(y as usize) * w..(y as usize + 1) * w];
                            let srow = &xp[(sy as usize) * w..(sy as usize + 1) * w];
                            for xx in x0..x1 {
                                prow[xx as usize] += wv * srow[(xx + dx) as usize] as f64;
                            }
                        }
                    }
                }
            }
            let op = &mut out[(bi * f + fi) * hw..(bi * f + fi + 1) * hw];
            for (o, &p) in op.iter_mut().zip(plane.iter()) {
                *o = p as f32;
            }
        }
    }
    Tensor::new(vec![b, f, h, w], out)
}

pub(crate) struct ConvGrads {
    pub dinput: Vec<f32>,
    pub dkernel: Vec<f32>,
    pub dbias: Vec<f32>,
}

pub(crate) fn conv2d_backward(input: &Tensor, kernel: &Tensor, grad_out: &[f32]) -> ConvGrads {
    let (b, c, h, w) = input.dims4().expect("validated at forward");
    let (f, _, k, _) = kernel.dims4().expect("validated at forward");
    let pad = (k - 1) as isize / 2;
    let hw = h * w;
    let x = input.data();
    let wgt = kernel.data();

    // dInput: correlate grad with the flipped kernel.
    let mut dinput = vec![0.0f32; b * c * hw];
    let mut plane = vec![0.0f64; hw];
    for bi in 0..b {
        for ci in 0..c {
            plane.iter_mut().for_each(|v| *v = 0.0);
            for fi in 0..f {
                let gp = &grad_out[(bi * f + fi) * hw..(bi * f + fi + 1) * hw];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let wv = wgt[((fi * c + ci) * k + ky) * k + kx] as f64;
                        if wv == 0.0 {
                            continue;
                        }
                        // out[y] consumed in[y+dy], so din[y] collects g[y-dy].
                        for y in 0..h as isize {
                            let gy = y - dy;
                            if gy < 0 || gy >= h as isize {
                                continue;
                            }
                            let x0 = dx.max(0);
                            let x1 = (w as isize + dx).min(w as isize);
                            let prow = &mut plane[(y as usize) * w..(y as usize + 1) * w];
                            let grow = &gp[(gy as usize) * w..(gy as usize + 1) * w];
                            for xx in x0..x1 {
                                prow[xx as usize] += wv * grow[(xx - dx) as usize] as f64;
                            }
                        }
                    }
                }
            }
            let op = &mut dinput[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
            for (o, &p) in op.iter_mut().zip(plane.iter()) {
                *o = p as f32;
            }
        }
    }

    // dKernel[f,c,ky,kx] = sum_{b,y,x} g[b,f,y,x] * in[b,c,y+dy,x+dx].
    let mut dkernel = vec![0.0f64; f * c * k * k];
    for bi in 0..b {
        for fi in 0..f {
            let gp = &grad_out[(bi * f + fi) * hw..(bi * f + fi + 1) * hw];
            for ci in 0..c {
                let xp = &x[(bi * c + ci) * hw..(bi * c + ci + 1) * hw];
                for ky in 0..k {
                    let dy = ky as isize - pad;
                    for kx in 0..k {
                        let dx = kx as isize - pad;
                        let mut acc = 0.0f64;
                        for y in 0..h as isize {
                            let sy = y + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            let x0 = (-dx).max(0);
                            let x1 = (w as isize - dx).min(w as isize);
                            let grow = &gp[(y as usize) * w..(y as usize + 1) * w];
                            let srow = &xp[(sy as usize) * w..(sy as usize + 1) * w];
                            for xx in x0..x1 {
                                acc += grow[xx as usize] as f64 * srow[(xx + dx) as usize] as f64;
                            }
                        }
                        dkernel[((fi * c + ci) * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    }

    let mut dbias = vec![0.0f64; f];
    for bi in 0..b {
        for fi in 0..f {
            let gp = &grad_out[(bi * f + fi) * hw..(bi * f + fi + 1) * hw];
            dbias[fi] += gp.iter().map(|&g| g as f64).sum::<f64>();
        }
    }

    ConvGrads {
        dinput,
        dkernel: dkernel.iter().map(|&v| v as f32).collect(),
        dbias: dbias.iter().map(|&v| v as f32).collect(),
    }
}

// ── batch normalization ──────────────────────────────────────────────

fn bn_check(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(usize, usize, usize, usize), TensorError> {
    let (b, c, h, w) = input.dims4()?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::ShapeMismatch {
            op: "batchnorm2d",
            lhs: input.shape().to_vec(),
            rhs: gamma.shape().to_vec(),
        });
    }
    Ok((b, c, h, w))
}

pub(crate) fn batchnorm_train_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    eps: f32,
) -> Result<(Tensor, super::tape::BatchStats, Vec<f32>), TensorError> {
    let (b, c, h, w) = bn_check(input, gamma, beta)?;
    let count = b * h * w;
    if count <= 1 {
        return Err(TensorError::BadShape {
            op: "batchnorm2d",
            shape: input.shape().to_vec(),
            detail: "train mode needs more than one element per channel",
        });
    }
    let hw = h * w;
    let x = input.data();
    let mut mean = vec![0.0f32; c];
    let mut var = vec![0.0f32; c];
    let mut invstd = vec![0.0f32; c];
    for ci in 0..c {
        let mut s = 0.0f64;
        let mut s2 = 0.0f64;
        for bi in 0..b {
            for &v in &x[(bi * c + ci) * hw..(bi * c + ci + 1) * hw] {
                let v = v as f64;
                s += v;
                s2 += v * v;
            }
        }
        let m = s / count as f64;
        let v = (s2 / count as f64 - m * m).max(0.0);
        mean[ci] = m as f32;
        var[ci] = v as f32;
        invstd[ci] = (1.0 / libm::sqrt(v + eps as f64)) as f32;
    }
    let mut out = vec![0.0f32; x.len()];
    for bi in 0..b {
        for ci in 0..c {
            let (g, bt, m, is) = (gamma.data()[ci], beta.data()[ci], mean[ci], invstd[ci]);
            let base = (bi * c + ci) * hw;
            for i in 0..hw {
                out[base + i] = (x[base + i] - m) * is * g + bt;
            }
        }
    }
    let value = Tensor::new(input.shape().to_vec(), out)?;
    let stats = super::tape::BatchStats { mean, var, count };
    Ok((value, stats, invstd))
}

pub(crate) fn batchnorm_eval_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    eps: f32,
) -> Result<(Tensor, Vec<f32>), TensorError> {
    let (b, c, h, w) = bn_check(input, gamma, beta)?;
    if running_mean.shape() != [c] || running_var.shape() != [c] {
        return Err(TensorError::ShapeMismatch {
            op: "batchnorm2d",
            lhs: input.shape().to_vec(),
            rhs: running_mean.shape().to_vec(),
        });
    }
    let hw = h * w;
    let x = input.data();
    let invstd: Vec<f32> = running_var
        .data()
        .iter()
        .map(|&v| (1.0 / libm::sqrt(v.max(0.0) as f64 + eps as f64)) as f32)
        .collect();
    let mut out = vec![0.0f32; x.len()];
    for bi in 0..b {
        for ci in 0..c {
            let (g, bt, m, is) = (gamma.data()[ci], beta.data()[ci], running_mean.data()[ci], invstd[ci]);
            let base = (bi * c + ci) * hw;
            for i in 0..hw {
                out[base + i] = (x[base + i] - m) * is * g + bt;
            }
        }
    }
    Ok((Tensor::new(input.shape().to_vec(), out)?, invstd))
}

pub(crate) struct BnGrads {
    pub dinput: Vec<f32>,
    pub dgamma: Vec<f32>,
    pub dbeta: Vec<f32>,
}

/// Backward through train-mode batch norm (batch statistics participate).
pub(crate) fn batchnorm_train_backward(
    input: &Tensor,
    gamma: &Tensor,
    mean: &[f32],
    invstd: &[f32],
    grad_out: &[f32],
) -> BnGrads {
    let (b, c, h, w) = input.dims4().expect("validated at forward");
    let hw = h * w;
    let n = (b * hw) as f64;
    let x = input.data();
    let mut dinput = vec![0.0f32; x.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ci in 0..c {
        let m = mean[ci] as f64;
        let is = invstd[ci] as f64;
        let g = gamma.data()[ci] as f64;
        // Accumulate sum(dy), sum(dy * xhat).
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for bi in 0..b {
            let base = (bi * c + ci) * hw;
            for i in 0..hw {
                let dy = grad_out[base + i] as f64;
                let xhat = (x[base + i] as f64 - m) * is;
                sum_dy += dy;
                sum_dy_xhat += dy * xhat;
            }
        }
        dbeta[ci] = sum_dy as f32;
        dgamma[ci] = sum_dy_xhat as f32;
        // dx = (g*is/n) * (n*dy - sum_dy - xhat*sum_dy_xhat)
        for bi in 0..b {
            let base = (bi * c + ci) * hw;
            for i in 0..hw {
                let dy = grad_out[base + i] as f64;
                let xhat = (x[base + i] as f64 - m) * is;
                dinput[base + i] =
                    ((g * is / n) * (n * dy - sum_dy - xhat * sum_dy_xhat)) as f32;
            }
        }
    }
    BnGrads { dinput, dgamma, dbeta }
}

/// Backward through eval-mode batch norm (statistics are constants).
pub(crate) fn batchnorm_eval_backward(
    input: &Tensor,
    gamma: &Tensor,
    mean: &[f32],
    invstd: &[f32],
    grad_out: &[f32],
) -> BnGrads {
    let (b, c, h, w) = input.dims4().expect("validated at forward");
    let hw = h * w;
    let x = input.data();
    let mut dinput = vec![0.0f32; x.len()];
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    for ci in 0..c {
        let m = mean[ci] as f64;
        let is = invstd[ci] as f64;
        let g = gamma.data()[ci] as f64;
        let mut sdg = 0.0f64;
        let mut sdb = 0.0f64;
        for bi in 0..b {
            let base = (bi * c + ci) * hw;
            for i in 0..hw {
                let dy = grad_out[base + i] as f64;
                let xhat = (x[base + i] as f64 - m) * is;
                dinput[base + i] = (dy * g * is) as f32;
                sdg += dy * xhat;
                sdb += dy;
            }
        }
        dgamma[ci] = sdg as f32;
        dbeta[ci] = sdb as f32;
    }
    BnGrads { dinput, dgamma, dbeta }
}

// ── pooling and upsampling ───────────────────────────────────────────

pub(crate) fn avgpool2_forward(input: &Tensor) -> Result<Tensor, TensorError> {
    let (b, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::BadShape {
            op: "avgpool2d",
            shape: input.shape().to_vec(),
            detail: "spatial dimensions must be even",
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = vec![0.0f32; b * c * oh * ow];
    for bc in 0..b * c {
        let xp = &x[bc * h * w..(bc + 1) * h * w];
        let op = &mut out[bc * oh * ow..(bc + 1) * oh * ow];
        for y in 0..oh {
            for xx in 0..ow {
                let s = xp[2 * y * w + 2 * xx] as f64
                    + xp[2 * y * w + 2 * xx + 1] as f64
                    + xp[(2 * y + 1) * w + 2 * xx] as f64
                    + xp[(2 * y + 1) * w + 2 * xx + 1] as f64;
                op[y * ow + xx] = (s * 0.25) as f32;
            }
        }
    }
    Tensor::new(vec![b, c, oh, ow], out)
}

pub(crate) fn avgpool2_backward(in_shape: &[usize], grad_out: &[f32]) -> Vec<f32> {
    let (b, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut dinput = vec![0.0f32; b * c * h * w];
    for bc in 0..b * c {
        let gp = &grad_out[bc * oh * ow..(bc + 1) * oh * ow];
        let dp = &mut dinput[bc * h * w..(bc + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let g = gp[y * ow + xx] * 0.25;
                dp[2 * y * w + 2 * xx] += g;
                dp[2 * y * w + 2 * xx + 1] += g;
                dp[(2 * y + 1) * w + 2 * xx] += g;
                dp[(2 * y + 1) * w + 2 * xx + 1] += g;
            }
        }
    }
    dinput
}

/// Source coordinate and interpolation weights for one output index
/// (align-corners=false, edges clamped).
#[inline]
fn bilinear_axis(o: usize, factor: usize, in_len: usize) -> (usize, usize, f32) {
    let s = (o as f64 + 0.5) / factor as f64 - 0.5;
    let s0 = libm::floor(s);
    let t = (s - s0) as f32;
    let i0 = (s0 as isize).clamp(0, in_len as isize - 1) as usize;
    let i1 = (s0 as isize + 1).clamp(0, in_len as isize - 1) as usize;
    (i0, i1, t)
}

pub(crate) fn upsample_bilinear_forward(input: &Tensor, factor: usize) -> Result<Tensor, TensorError> {
    let (b, c, h, w) = input.dims4()?;
    let (oh, ow) = (h * factor, w * factor);
    let x = input.data();
    let mut out = vec![0.0f32; b * c * oh * ow];
    for bc in 0..b * c {
        let xp = &x[bc * h * w..(bc + 1) * h * w];
        let op = &mut out[bc * oh * ow..(bc + 1) * oh * ow];
        for oy in 0..oh {
            let (y0, y1, ty) = bilinear_axis(oy, factor, h);
            for ox in 0..ow {
                let (x0, x1, tx) = bilinear_axis(ox, factor, w);
                let v = (1.0 - ty) * ((1.0 - tx) * xp[y0 * w + x0] + tx * xp[y0 * w + x1])
                    + ty * ((1.0 - tx) * xp[y1 * w + x0] + tx * xp[y1 * w + x1]);
                op[oy * ow + ox] = v;
            }
        }
    }
    Tensor::new(vec![b, c, oh, ow], out)
}

pub(crate) fn upsample_bilinear_backward(
    in_shape: &[usize],
    factor: usize,
    grad_out: &[f32],
) -> Vec<f32> {
    let (b, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let (oh, ow) = (h * factor, w * factor);
    let mut dinput = vec![0.0f32; b * c * h * w];
    for bc in 0..b * c {
        let gp = &grad_out[bc * oh * ow..(bc + 1) * oh * ow];
        let dp = &mut dinput[bc * h * w..(bc + 1) * h * w];
        for oy in 0..oh {
            let (y0, y1, ty) = bilinear_axis(oy, factor, h);
            for ox in 0..ow {
                let (x0, x1, tx) = bilinear_axis(ox, factor, w);
                let g = gp[oy * ow + ox];
                dp[y0 * w + x0] += (1.0 - ty) * (1.0 - tx) * g;
                dp[y0 * w + x1] += (1.0 - ty) * tx * g;
                dp[y1 * w + x0] += ty * (1.0 - tx) * g;
                dp[y1 * w + x1] += ty * tx * g;
            }
        }
    }
    dinput
}

// ── softmax ──────────────────────────────────────────────────────────

pub(crate) fn softmax_forward(input: &Tensor, axis: usize) -> Tensor {
    let shape = input.shape();
    let outer: usize = shape[..axis].iter().product();
    let lanes = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let x = input.data();
    let mut out = vec![0.0f32; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |l: usize| (o * lanes + l) * inner + i;
            let mut m = f32::NEG_INFINITY;
            for l in 0..lanes {
                m = m.max(x[idx(l)]);
            }
            let mut s = 0.0f64;
            for l in 0..lanes {
                s += libm::exp((x[idx(l)] - m) as f64);
            }
            for l in 0..lanes {
                out[idx(l)] = (libm::exp((x[idx(l)] - m) as f64) / s) as f32;
            }
        }
    }
    Tensor::new(shape.to_vec(), out).expect("softmax shape")
}

pub(crate) fn softmax_backward(out: &Tensor, axis: usize, grad_out: &[f32]) -> Vec<f32> {
    let shape = out.shape();
    let outer: usize = shape[..axis].iter().product();
    let lanes = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let s = out.data();
    let mut dinput = vec![0.0f32; s.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |l: usize| (o * lanes + l) * inner + i;
            let mut dot = 0.0f64;
            for l in 0..lanes {
                dot += grad_out[idx(l)] as f64 * s[idx(l)] as f64;
            }
            for l in 0..lanes {
                dinput[idx(l)] =
                    (s[idx(l)] as f64 * (grad_out[idx(l)] as f64 - dot)) as f32;
            }
        }
    }
    dinput
}

// ── triangular solve ─────────────────────────────────────────────────

/// Solve `L X = RHS` where only the lower triangle of `l` is read.
/// `rhs_shape` is preserved on the output (vector or matrix).
pub(crate) fn trisolve_lower(
    l: &[f32],
    rhs: &[f32],
    d: usize,
    cols: usize,
    rhs_shape: Vec<usize>,
) -> Tensor {
    let mut x = vec![0.0f64; d * cols];
    for j in 0..cols {
        for i in 0..d {
            let mut acc = rhs[i * cols + j] as f64;
            for p in 0..i {
                acc -= l[i * d + p] as f64 * x[p * cols + j];
            }
            x[i * cols + j] = acc / l[i * d + i] as f64;
        }
    }
    Tensor::new(rhs_shape, x.iter().map(|&v| v as f32).collect()).expect("trisolve shape")
}

/// Solve `L^T Y = G` (upper-triangular back substitution on L's transpose).
pub(crate) fn trisolve_lower_transpose(l: &[f32], g: &[f32], d: usize, cols: usize) -> Vec<f64> {
    let mut y = vec![0.0f64; d * cols];
    for j in 0..cols {
        for i in (0..d).rev() {
            let mut acc = g[i * cols + j] as f64;
            for p in i + 1..d {
                // (L^T)[i][p] = L[p][i]
                acc -= l[p * d + i] as f64 * y[p * cols + j];
            }
            y[i * cols + j] = acc / l[i * d + i] as f64;
        }
    }
    y
}
