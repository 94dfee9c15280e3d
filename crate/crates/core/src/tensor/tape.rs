//! Wengert tape: operations are recorded in execution order during the
//! forward pass and replayed in reverse by [`Tape::backward`].
//!
//! A tape and its tensors are confined to one thread; independent tapes may
//! run on separate threads. Noise is never drawn inside an op — samplers take
//! it as an explicit operand, so every recorded graph is a pure function of
//! its leaves.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::nn;
use super::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum UnaryKind {
    Neg,
    Exp,
    Log,
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
}

/// Per-channel batch statistics computed by a train-mode batch norm node.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f32>,
    /// Biased variance (divide by count), as used for normalization.
    pub var: Vec<f32>,
    /// Number of elements per channel (B*H*W).
    pub count: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum BnMode {
    /// Normalize by batch statistics; mean/invstd saved for backward.
    Batch { mean: Vec<f32>, invstd: Vec<f32> },
    /// Normalize by fixed running statistics (constants, no gradient).
    Running { mean: Vec<f32>, invstd: Vec<f32> },
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Unary {
        kind: UnaryKind,
        a: Var,
    },
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
    },
    Scale {
        a: Var,
        c: f32,
    },
    Matmul {
        a: Var,
        b: Var,
    },
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode,
    },
    AvgPool2 {
        a: Var,
    },
    UpsampleBilinear {
        a: Var,
        factor: usize,
    },
    Softmax {
        a: Var,
        axis: usize,
    },
    Sum {
        a: Var,
    },
    Mean {
        a: Var,
    },
    LogSumExp {
        a: Var,
    },
    Concat {
        axis: usize,
        parts: Vec<Var>,
    },
    Narrow {
        a: Var,
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape {
        a: Var,
    },
    TriFromRaw {
        a: Var,
    },
    TrisolveLower {
        l: Var,
        rhs: Var,
    },
    /// Forward: one-hot of argmax. Backward: identity (straight-through).
    StOneHot {
        a: Var,
    },
    BceWithLogitsMean {
        logits: Var,
        targets: Var,
    },
    SpatialMean {
        a: Var,
    },
    TileSpatial {
        a: Var,
        h: usize,
        w: usize,
    },
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
    pub label: Option<String>,
}

/// Append-only record of forward operations.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    pub(crate) grads: Vec<Option<Vec<f32>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. `v`, if any was propagated.
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as an owned vector; leaves the loss never reached get zeros.
    pub fn grad_or_zeros(&self, v: Var) -> Vec<f32> {
        match self.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.nodes[v.0].value.numel()],
        }
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Labels of all leaf nodes, in recording order (instrumentation).
    pub fn leaf_labels(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().filter_map(|n| match n.op {
            Op::Leaf => n.label.as_deref(),
            _ => None,
        })
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad, None)
    }

    pub fn labeled_leaf(&mut self, value: Tensor, requires_grad: bool, label: &str) -> Var {
        self.push(value, Op::Leaf, requires_grad, Some(String::from(label)))
    }

    /// Leaf with no gradient tracking.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar_const(&mut self, value: f32) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, label: Option<String>) -> Var {
        self.nodes.push(Node { value, op, requires_grad, label });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var, TensorError> {
        value.check_finite(op_name)?;
        Ok(self.push(value, op, requires_grad, None))
    }

    // ── elementwise ──────────────────────────────────────────────────

    fn unary(&mut self, kind: UnaryKind, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let (name, data): (&'static str, Vec<f32>) = match kind {
            UnaryKind::Neg => ("neg", av.data().iter().map(|&x| -x).collect()),
            UnaryKind::Exp => ("exp", av.data().iter().map(|&x| libm::expf(x)).collect()),
            UnaryKind::Log => {
                if av.data().iter().any(|&x| x <= 0.0) {
                    return Err(TensorError::Domain {
                        op: "log",
                        detail: "inputs must be strictly positive",
                    });
                }
                ("log", av.data().iter().map(|&x| libm::logf(x)).collect())
            }
            UnaryKind::Relu => ("relu", av.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()),
            UnaryKind::Sigmoid => ("sigmoid", av.data().iter().map(|&x| sigmoid(x)).collect()),
        };
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let rg = self.requires_grad(a);
        self.push_checked(name, value, Op::Unary { kind, a }, rg)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Log, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Sigmoid, a)
    }

    /// Binary elementwise op. Operands must have equal shapes, or one of them
    /// must be a scalar (shape `[1]`), which broadcasts.
    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let name: &'static str = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
        };
        let f = |x: f32, y: f32| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let value = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data).expect("same shape")
        } else if bv.is_scalar() {
            let y = bv.item();
            let data = av.data().iter().map(|&x| f(x, y)).collect();
            Tensor::new(av.shape().to_vec(), data).expect("same shape")
        } else if av.is_scalar() {
            let x = av.item();
            let data = bv.data().iter().map(|&y| f(x, y)).collect();
            Tensor::new(bv.shape().to_vec(), data).expect("same shape")
        } else {
            return Err(TensorError::ShapeMismatch {
                op: name,
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        };
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push_checked(name, value, Op::Binary { kind, a, b }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    /// Multiply by a compile-time constant (not a tape node).
    pub fn scale(&mut self, a: Var, c: f32) -> Result<Var, TensorError> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| x * c).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let rg = self.requires_grad(a);
        self.push_checked("scale", value, Op::Scale { a, c }, rg)
    }

    // ── linear algebra ───────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = match av.shape() {
            &[m, k] => (m, k),
            _ => {
                return Err(TensorError::BadShape {
                    op: "matmul",
                    shape: av.shape().to_vec(),
                    detail: "lhs must be a matrix",
                })
            }
        };
        let (k2, n) = match bv.shape() {
            &[k2, n] => (k2, n),
            _ => {
                return Err(TensorError::BadShape {
                    op: "matmul",
                    shape: bv.shape().to_vec(),
                    detail: "rhs must be a matrix",
                })
            }
        };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: av.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let value = nn::matmul(av.data(), bv.data(), m, k, n);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push_checked("matmul", value, Op::Matmul { a, b }, rg)
    }

    /// Lower-triangular solve `L X = RHS` by forward substitution.
    /// `l` is `[d, d]` (only the lower triangle is read), `rhs` is `[d, k]`.
    pub fn trisolve_lower(&mut self, l: Var, rhs: Var) -> Result<Var, TensorError> {
        let lv = self.value(l);
        let d = lv.dims_square()?;
        let rv = self.value(rhs);
        let (d2, _k) = match rv.shape() {
            &[d2, k] => (d2, k),
            &[d2] => (d2, 1),
            _ => {
                return Err(TensorError::BadShape {
                    op: "trisolve_lower",
                    shape: rv.shape().to_vec(),
                    detail: "rhs must be a vector or matrix",
                })
            }
        };
        if d != d2 {
            return Err(TensorError::ShapeMismatch {
                op: "trisolve_lower",
                lhs: lv.shape().to_vec(),
                rhs: rv.shape().to_vec(),
            });
        }
        let cols = rv.numel() / d;
        let value = nn::trisolve_lower(lv.data(), rv.data(), d, cols, rv.shape().to_vec());
        let rg = self.requires_grad(l) || self.requires_grad(rhs);
        self.push_checked("trisolve_lower", value, Op::TrisolveLower { l, rhs }, rg)
    }

    /// Build a Cholesky factor from an unconstrained square matrix: strict
    /// lower triangle copied, diagonal exponentiated, upper triangle masked.
    pub fn tri_from_raw(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let d = av.dims_square()?;
        let raw = av.data();
        let mut out = vec![0.0f32; d * d];
        for i in 0..d {
            for j in 0..i {
                out[i * d + j] = raw[i * d + j];
            }
            out[i * d + i] = libm::expf(raw[i * d + i]);
        }
        let value = Tensor::new(vec![d, d], out).expect("square");
        let rg = self.requires_grad(a);
        self.push_checked("tri_from_raw", value, Op::TriFromRaw { a }, rg)
    }

    // ── neural-network ops ───────────────────────────────────────────

    /// Same-padding convolution, stride 1. Kernel is `[F, C, k, k]` with
    /// k in {1, 3}; input is `[B, C, H, W]`; bias is `[F]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var, TensorError> {
        let value = nn::conv2d_forward(self.value(input), self.value(kernel), self.value(bias))?;
        let rg = self.requires_grad(input) || self.requires_grad(kernel) || self.requires_grad(bias);
        self.push_checked("conv2d", value, Op::Conv2d { input, kernel, bias }, rg)
    }

    /// Train-mode batch norm: normalizes by batch statistics and returns them
    /// so the caller can update its running buffers.
    pub fn batchnorm_train(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        eps: f32,
    ) -> Result<(Var, BatchStats), TensorError> {
        let (value, stats, invstd) =
            nn::batchnorm_train_forward(self.value(input), self.value(gamma), self.value(beta), eps)?;
        let mode = BnMode::Batch { mean: stats.mean.clone(), invstd };
        let rg = self.requires_grad(input) || self.requires_grad(gamma) || self.requires_grad(beta);
        let out = self.push_checked("batchnorm", value, Op::BatchNorm { input, gamma, beta, mode }, rg)?;
        Ok((out, stats))
    }

    /// Eval-mode batch norm using fixed running statistics.
    pub fn batchnorm_eval(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &Tensor,
        running_var: &Tensor,
        eps: f32,
    ) -> Result<Var, TensorError> {
        let (value, invstd) = nn::batchnorm_eval_forward(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            running_mean,
            running_var,
            eps,
        )?;
        let rg = self.requires_grad(input) || self.requires_grad(gamma) || self.requires_grad(beta);
        let mode = BnMode::Running { mean: running_mean.data().to_vec(), invstd };
        self.push_checked("batchnorm", value, Op::BatchNorm { input, gamma, beta, mode }, rg)
    }

    /// 2x2 average pooling with stride 2; spatial dimensions must be even.
    pub fn avgpool2(&mut self, a: Var) -> Result<Var, TensorError> {
        let value = nn::avgpool2_forward(self.value(a))?;
        let rg = self.requires_grad(a);
        self.push_checked("avgpool2d", value, Op::AvgPool2 { a }, rg)
    }

    /// Bilinear upsampling by an integer factor >= 2 (align-corners=false).
    pub fn upsample_bilinear(&mut self, a: Var, factor: usize) -> Result<Var, TensorError> {
        if factor < 2 {
            return Err(TensorError::BadShape {
                op: "bilinear_upsample2d",
                shape: self.value(a).shape().to_vec(),
                detail: "factor must be an integer >= 2",
            });
        }
        let value = nn::upsample_bilinear_forward(self.value(a), factor)?;
        let rg = self.requires_grad(a);
        self.push_checked("bilinear_upsample2d", value, Op::UpsampleBilinear { a, factor }, rg)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        if axis >= av.shape().len() {
            return Err(TensorError::BadShape {
                op: "softmax",
                shape: av.shape().to_vec(),
                detail: "axis out of range",
            });
        }
        let value = nn::softmax_forward(av, axis);
        let rg = self.requires_grad(a);
        self.push_checked("softmax", value, Op::Softmax { a, axis }, rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let total: f64 = self.value(a).data().iter().map(|&x| x as f64).sum();
        let rg = self.requires_grad(a);
        self.push_checked("sum", Tensor::scalar(total as f32), Op::Sum { a }, rg)
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let total: f64 = av.data().iter().map(|&x| x as f64).sum();
        let value = Tensor::scalar((total / av.numel() as f64) as f32);
        let rg = self.requires_grad(a);
        self.push_checked("mean", value, Op::Mean { a }, rg)
    }

    /// log(sum(exp(a))) over a vector, as a scalar (max-subtracted).
    pub fn logsumexp(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        if av.shape().len() != 1 {
            return Err(TensorError::BadShape {
                op: "logsumexp",
                shape: av.shape().to_vec(),
                detail: "expected a vector",
            });
        }
        let m = av.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let s: f64 = av.data().iter().map(|&x| libm::exp((x - m) as f64)).sum();
        let value = Tensor::scalar(m + libm::log(s) as f32);
        let rg = self.requires_grad(a);
        self.push_checked("logsumexp", value, Op::LogSumExp { a }, rg)
    }

    /// Concatenate along `axis`. All other dimensions must agree.
    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::BadShape {
                op: "concat",
                shape: vec![],
                detail: "no operands",
            });
        }
        let first = self.value(parts[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::BadShape {
                op: "concat",
                shape: first,
                detail: "axis out of range",
            });
        }
        let mut axis_total = 0usize;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: first,
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let outer: usize = out_shape[..axis].iter().product();
        let inner: usize = out_shape[axis + 1..].iter().product();
        let mut data = vec![0.0f32; out_shape.iter().product()];
        let mut offset = 0usize;
        for &p in parts {
            let pv = self.value(p);
            let plen = pv.shape()[axis];
            for o in 0..outer {
                let src = &pv.data()[o * plen * inner..(o + 1) * plen * inner];
                let dst_start = (o * axis_total + offset) * inner;
                data[dst_start..dst_start + plen * inner].copy_from_slice(src);
            }
            offset += plen;
        }
        let value = Tensor::new(out_shape, data).expect("concat shape");
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        self.push_checked("concat", value, Op::Concat { axis, parts: parts.to_vec() }, rg)
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        let shape = av.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] || len == 0 {
            return Err(TensorError::BadShape {
                op: "narrow",
                shape,
                detail: "slice out of range",
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut data = vec![0.0f32; outer * len * inner];
        for o in 0..outer {
            let src = o * shape[axis] * inner + start * inner;
            let dst = o * len * inner;
            data[dst..dst + len * inner].copy_from_slice(&av.data()[src..src + len * inner]);
        }
        let value = Tensor::new(out_shape, data).expect("narrow shape");
        let rg = self.requires_grad(a);
        self.push_checked("narrow", value, Op::Narrow { a, axis, start, len }, rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let av = self.value(a);
        let numel: usize = shape.iter().product();
        if numel != av.numel() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::BadShape {
                op: "reshape",
                shape: shape.to_vec(),
                detail: "element count must be preserved",
            });
        }
        let value = Tensor::new(shape.to_vec(), av.data().to_vec()).expect("reshape");
        let rg = self.requires_grad(a);
        self.push_checked("reshape", value, Op::Reshape { a }, rg)
    }

    /// Straight-through one-hot: forward is the exact one-hot of the argmax
    /// (ties broken by lowest index); backward passes the gradient unchanged.
    pub fn st_one_hot(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        if av.shape().len() != 1 {
            return Err(TensorError::BadShape {
                op: "straight_through_select",
                shape: av.shape().to_vec(),
                detail: "expected a vector",
            });
        }
        let arg = argmax(av.data());
        let mut data = vec![0.0f32; av.numel()];
        data[arg] = 1.0;
        let value = Tensor::new(av.shape().to_vec(), data).expect("one hot");
        let rg = self.requires_grad(a);
        self.push_checked("straight_through_select", value, Op::StOneHot { a }, rg)
    }

    /// Mean binary cross-entropy with logits, computed in the numerically
    /// stable form `max(x,0) - x*y + log(1+exp(-|x|))`. Targets carry no grad.
    pub fn bce_with_logits_mean(&mut self, logits: Var, targets: Var) -> Result<Var, TensorError> {
        let (lv, tv) = (self.value(logits), self.value(targets));
        if lv.shape() != tv.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: lv.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let mut acc = 0.0f64;
        for (&x, &y) in lv.data().iter().zip(tv.data()) {
            let x = x as f64;
            let y = y as f64;
            acc += x.max(0.0) - x * y + libm::log1p(libm::exp(-libm::fabs(x)));
        }
        let value = Tensor::scalar((acc / lv.numel() as f64) as f32);
        let rg = self.requires_grad(logits) || self.requires_grad(targets);
        self.push_checked("bce_with_logits", value, Op::BceWithLogitsMean { logits, targets }, rg)
    }

    /// Global average over the spatial dimensions: `[B,C,H,W] -> [B,C]`.
    pub fn spatial_mean(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let (b, c, h, w) = av.dims4()?;
        let hw = h * w;
        let mut data = vec![0.0f32; b * c];
        for bc in 0..b * c {
            let s: f64 = av.data()[bc * hw..(bc + 1) * hw].iter().map(|&x| x as f64).sum();
            data[bc] = (s / hw as f64) as f32;
        }
        let value = Tensor::new(vec![b, c], data).expect("spatial mean");
        let rg = self.requires_grad(a);
        self.push_checked("spatial_mean", value, Op::SpatialMean { a }, rg)
    }

    /// Broadcast a vector `[d]` over a spatial grid: `[d] -> [1, d, h, w]`.
    pub fn tile_spatial(&mut self, a: Var, h: usize, w: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        if av.shape().len() != 1 {
            return Err(TensorError::BadShape {
                op: "tile_spatial",
                shape: av.shape().to_vec(),
                detail: "expected a vector",
            });
        }
        let d = av.numel();
        let mut data = vec![0.0f32; d * h * w];
        for (j, &z) in av.data().iter().enumerate() {
            data[j * h * w..(j + 1) * h * w].fill(z);
        }
        let value = Tensor::new(vec![1, d, h, w], data).expect("tile");
        let rg = self.requires_grad(a);
        self.push_checked("tile_spatial", value, Op::TileSpatial { a, h, w }, rg)
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::expf(-x))
    } else {
        let e = libm::expf(x);
        e / (1.0 + e)
    }
}

/// Index of the maximum entry; ties broken by lowest index.
pub(crate) fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
