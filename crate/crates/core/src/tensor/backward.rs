//! Reverse pass over the tape. Each node is visited exactly once, in reverse
//! recording order; operands always precede their outputs, so a single
//! backward sweep implements the chain rule.

use alloc::vec;
use alloc::vec::Vec;

use super::nn;
use super::tape::{sigmoid, BinaryKind, BnMode, Op, Tape, UnaryKind, Var};
use super::TensorError;

impl Tape {
    /// Populate gradients of `loss` w.r.t. every reachable grad-tracking
    /// leaf. Intermediate gradient buffers are released as the sweep passes
    /// them; after this call only leaf gradients remain readable. Leaves the
    /// loss never reaches keep a zero gradient (reported as such by
    /// [`Tape::grad_or_zeros`]).
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(TensorError::NonScalarLoss { numel: lv.numel() });
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            if !self.nodes[i].requires_grad {
                self.grads[i] = None;
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            let op = self.nodes[i].op.clone();
            let out = Var(i);
            match op {
                Op::Leaf => unreachable!(),
                Op::Unary { kind, a } => {
                    let delta: Vec<f32> = match kind {
                        UnaryKind::Neg => g.iter().map(|&gi| -gi).collect(),
                        UnaryKind::Exp => {
                            let o = self.value(out).data();
                            g.iter().zip(o).map(|(&gi, &oi)| gi * oi).collect()
                        }
                        UnaryKind::Log => {
                            let av = self.value(a).data();
                            g.iter().zip(av).map(|(&gi, &xi)| gi / xi).collect()
                        }
                        UnaryKind::Relu => {
                            let av = self.value(a).data();
                            g.iter()
                                .zip(av)
                                .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                                .collect()
                        }
                        UnaryKind::Sigmoid => {
                            let o = self.value(out).data();
                            g.iter().zip(o).map(|(&gi, &si)| gi * si * (1.0 - si)).collect()
                        }
                    };
                    self.accum(a, &delta);
                }
                Op::Binary { kind, a, b } => self.binary_backward(kind, a, b, &g),
                Op::Scale { a, c } => {
                    let delta: Vec<f32> = g.iter().map(|&gi| gi * c).collect();
                    self.accum(a, &delta);
                }
                Op::Matmul { a, b } => {
                    let (m, k) = {
                        let s = self.value(a).shape();
                        (s[0], s[1])
                    };
                    let n = self.value(b).shape()[1];
                    if self.requires_grad_of(a) {
                        let da = nn::matmul_grad_a(&g, self.value(b).data(), m, k, n);
                        self.accum(a, &da);
                    }
                    if self.requires_grad_of(b) {
                        let db = nn::matmul_grad_b(self.value(a).data(), &g, m, k, n);
                        self.accum(b, &db);
                    }
                }
                Op::Conv2d { input, kernel, bias } => {
                    let grads = nn::conv2d_backward(self.value(input), self.value(kernel), &g);
                    self.accum(input, &grads.dinput);
                    self.accum(kernel, &grads.dkernel);
                    self.accum(bias, &grads.dbias);
                }
                Op::BatchNorm { input, gamma, beta, mode } => {
                    let grads = match &mode {
                        BnMode::Batch { mean, invstd } => nn::batchnorm_train_backward(
                            self.value(input),
                            self.value(gamma),
                            mean,
                            invstd,
                            &g,
                        ),
                        BnMode::Running { mean, invstd } => nn::batchnorm_eval_backward(
                            self.value(input),
                            self.value(gamma),
                            mean,
                            invstd,
                            &g,
                        ),
                    };
                    self.accum(input, &grads.dinput);
                    self.accum(gamma, &grads.dgamma);
                    self.accum(beta, &grads.dbeta);
                }
                Op::AvgPool2 { a } => {
                    let delta = nn::avgpool2_backward(self.value(a).shape(), &g);
                    self.accum(a, &delta);
                }
                Op::UpsampleBilinear { a, factor } => {
                    let delta = nn::upsample_bilinear_backward(self.value(a).shape(), factor, &g);
                    self.accum(a, &delta);
                }
                Op::Softmax { a, axis } => {
                    let delta = nn::softmax_backward(self.value(out), axis, &g);
                    self.accum(a, &delta);
                }
                Op::Sum { a } => {
                    let delta = vec![g[0]; self.value(a).numel()];
                    self.accum(a, &delta);
                }
                Op::Mean { a } => {
                    let n = self.value(a).numel();
                    let delta = vec![g[0] / n as f32; n];
                    self.accum(a, &delta);
                }
                Op::LogSumExp { a } => {
                    let o = self.value(out).item();
                    let delta: Vec<f32> = self
                        .value(a)
                        .data()
                        .iter()
                        .map(|&x| (libm::exp((x - o) as f64) * g[0] as f64) as f32)
                        .collect();
                    self.accum(a, &delta);
                }
                Op::Concat { axis, parts } => {
                    let out_shape = self.value(out).shape().to_vec();
                    let outer: usize = out_shape[..axis].iter().product();
                    let inner: usize = out_shape[axis + 1..].iter().product();
                    let axis_total = out_shape[axis];
                    let mut offset = 0usize;
                    for &p in &parts {
                        let plen = self.value(p).shape()[axis];
                        let mut delta = vec![0.0f32; self.value(p).numel()];
                        for o in 0..outer {
                            let src = (o * axis_total + offset) * inner;
                            let dst = o * plen * inner;
                            delta[dst..dst + plen * inner]
                                .copy_from_slice(&g[src..src + plen * inner]);
                        }
                        self.accum(p, &delta);
                        offset += plen;
                    }
                }
                Op::Narrow { a, axis, start, len } => {
                    let in_shape = self.value(a).shape().to_vec();
                    let outer: usize = in_shape[..axis].iter().product();
                    let inner: usize = in_shape[axis + 1..].iter().product();
                    let mut delta = vec![0.0f32; self.value(a).numel()];
                    for o in 0..outer {
                        let dst = o * in_shape[axis] * inner + start * inner;
                        let src = o * len * inner;
                        delta[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                    }
                    self.accum(a, &delta);
                }
                Op::Reshape { a } => self.accum(a, &g),
                Op::TriFromRaw { a } => {
                    let d = self.value(a).shape()[0];
                    let o = self.value(out).data();
                    let mut delta = vec![0.0f32; d * d];
                    for r in 0..d {
                        for c in 0..r {
                            delta[r * d + c] = g[r * d + c];
                        }
                        delta[r * d + r] = g[r * d + r] * o[r * d + r];
                    }
                    self.accum(a, &delta);
                }
                Op::TrisolveLower { l, rhs } => {
                    let d = self.value(l).shape()[0];
                    let x = self.value(out).data();
                    let cols = x.len() / d;
                    let dz = nn::trisolve_lower_transpose(self.value(l).data(), &g, d, cols);
                    if self.requires_grad_of(rhs) {
                        let drhs: Vec<f32> = dz.iter().map(|&v| v as f32).collect();
                        self.accum(rhs, &drhs);
                    }
                    if self.requires_grad_of(l) {
                        let mut dl = vec![0.0f32; d * d];
                        for r in 0..d {
                            for c in 0..=r {
                                let mut acc = 0.0f64;
                                for j in 0..cols {
                                    acc += dz[r * cols + j] * x[c * cols + j] as f64;
                                }
                                dl[r * d + c] = (-acc) as f32;
                            }
                        }
                        self.accum(l, &dl);
                    }
                }
                Op::StOneHot { a } => self.accum(a, &g),
                Op::BceWithLogitsMean { logits, targets } => {
                    let n = self.value(logits).numel() as f32;
                    let lv = self.value(logits).data();
                    let tv = self.value(targets).data();
                    if self.requires_grad_of(logits) {
                        let delta: Vec<f32> = lv
                            .iter()
                            .zip(tv)
                            .map(|(&x, &y)| (sigmoid(x) - y) * g[0] / n)
                            .collect();
                        self.accum(logits, &delta);
                    }
                    if self.requires_grad_of(targets) {
                        let delta: Vec<f32> = lv.iter().map(|&x| -x * g[0] / n).collect();
                        self.accum(targets, &delta);
                    }
                }
                Op::SpatialMean { a } => {
                    let (b, c, h, w) = self.value(a).dims4().expect("validated at forward");
                    let hw = h * w;
                    let mut delta = vec![0.0f32; b * c * hw];
                    for bc in 0..b * c {
                        let gv = g[bc] / hw as f32;
                        delta[bc * hw..(bc + 1) * hw].fill(gv);
                    }
                    self.accum(a, &delta);
                }
                Op::TileSpatial { a, h, w } => {
                    let d = self.value(a).numel();
                    let hw = h * w;
                    let mut delta = vec![0.0f32; d];
                    for j in 0..d {
                        let s: f64 = g[j * hw..(j + 1) * hw].iter().map(|&v| v as f64).sum();
                        delta[j] = s as f32;
                    }
                    self.accum(a, &delta);
                }
            }
        }
        Ok(())
    }

    fn requires_grad_of(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn binary_backward(&mut self, kind: BinaryKind, a: Var, b: Var, g: &[f32]) {
        let a_numel = self.value(a).numel();
        let b_numel = self.value(b).numel();
        // Gradient w.r.t. `a`.
        if self.requires_grad_of(a) {
            let delta: Vec<f32> = match kind {
                BinaryKind::Add | BinaryKind::Sub => {
                    if a_numel == g.len() {
                        g.to_vec()
                    } else {
                        vec![g.iter().map(|&v| v as f64).sum::<f64>() as f32]
                    }
                }
                BinaryKind::Mul => {
                    let bv = self.value(b).data();
                    if a_numel == g.len() {
                        if b_numel == g.len() {
                            g.iter().zip(bv).map(|(&gi, &bi)| gi * bi).collect()
                        } else {
                            let bs = bv[0];
                            g.iter().map(|&gi| gi * bs).collect()
                        }
                    } else {
                        let s: f64 = g.iter().zip(bv).map(|(&gi, &bi)| gi as f64 * bi as f64).sum();
                        vec![s as f32]
                    }
                }
            };
            self.accum(a, &delta);
        }
        // Gradient w.r.t. `b`.
        if self.requires_grad_of(b) {
            let delta: Vec<f32> = match kind {
                BinaryKind::Add => {
                    if b_numel == g.len() {
                        g.to_vec()
                    } else {
                        vec![g.iter().map(|&v| v as f64).sum::<f64>() as f32]
                    }
                }
                BinaryKind::Sub => {
                    if b_numel == g.len() {
                        g.iter().map(|&gi| -gi).collect()
                    } else {
                        vec![-g.iter().map(|&v| v as f64).sum::<f64>() as f32]
                    }
                }
                BinaryKind::Mul => {
                    let av = self.value(a).data();
                    if b_numel == g.len() {
                        if a_numel == g.len() {
                            g.iter().zip(av).map(|(&gi, &ai)| gi * ai).collect()
                        } else {
                            let as_ = av[0];
                            g.iter().map(|&gi| gi * as_).collect()
                        }
                    } else {
                        let s: f64 = g.iter().zip(av).map(|(&gi, &ai)| gi as f64 * ai as f64).sum();
                        vec![s as f32]
                    }
                }
            };
            self.accum(b, &delta);
        }
    }

    fn accum(&mut self, v: Var, delta: &[f32]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(buf) => {
                for (gi, &d) in buf.iter_mut().zip(delta) {
                    *gi += d;
                }
            }
            slot @ None => *slot = Some(delta.to_vec()),
        }
    }
}
