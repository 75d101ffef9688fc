use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col};
use super::{Dims, NnError, ParamStore, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output keeps the input size (for stride 1); odd kernels only.
    Same,
    Valid,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param(usize),
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    ConvTranspose2 {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    MaxPool2 {
        x: NodeId,
        argmax: Vec<u32>,
    },
    Upsample2 {
        x: NodeId,
    },
    Relu {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Gate {
        x: NodeId,
        alpha: NodeId,
    },
    Dot {
        a: NodeId,
        b: NodeId,
    },
    BceDice {
        pred: NodeId,
        target: Vec<T>,
        lambda: f64,
    },
    Mse {
        pred: NodeId,
        target: Vec<T>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recorded forward computation.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    #[cfg(test)]
    pub(crate) corrupt_conv_backward: bool,
}

/// Clamp applied to predictions inside the log terms of the BCE loss.
pub const BCE_CLAMP: f64 = 1e-7;
/// Smoothing term of the soft Dice ratio.
pub const DICE_EPS: f64 = 1e-6;

fn mismatch(op: &'static str, left: Dims, right: Dims) -> NnError {
    NnError::ShapeMismatch { op, left, right }
}

fn finite<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<(), NnError> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(NnError::NonFinite { op })
    }
}

#[inline]
/// Logistic function kept strictly inside `(0, 1)`; large logits would otherwise round to 0 or 1.
fn sigmoid<T: Scalar>(x: T) -> T {
    let s = if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    };
    if s < T::MIN_POSITIVE {
        T::MIN_POSITIVE
    } else if s > T::BELOW_ONE {
        T::BELOW_ONE
    } else {
        s
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            #[cfg(test)]
            corrupt_conv_backward: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn dims(&self, id: NodeId) -> Dims {
        self.nodes[id.0].value.dims()
    }

    fn push(
        &mut self,
        op: &'static str,
        value: Tensor<T>,
        kind: Op<T>,
        inputs: &[NodeId],
    ) -> Result<NodeId, NnError> {
        finite(op, &value)?;
        let requires_grad =
            matches!(kind, Op::Param(_)) || inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: kind,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor<T>) -> Result<NodeId, NnError> {
        self.push("input", value, Op::Input, &[])
    }

    /// Binds the named parameter of `store` as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<NodeId, NnError> {
        let idx = store
            .index_of(name)
            .ok_or_else(|| NnError::UnknownParam(name.into()))?;
        self.push("param", store.tensor(idx).clone(), Op::Param(idx), &[])
    }

    /// Cross-correlation with square kernel `w: (cout, cin, k, k)` and optional bias `(1, cout, 1, 1)`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        padding: Padding,
    ) -> Result<NodeId, NnError> {
        let [n, cin, h, wd] = self.dims(x);
        let [cout, wcin, k, k2] = self.dims(w);
        if wcin != cin || k != k2 || k == 0 || stride == 0 {
            return Err(mismatch("conv2d", self.dims(x), self.dims(w)));
        }
        let pad = match padding {
            Padding::Same if k % 2 == 1 => (k - 1) / 2,
            Padding::Same => {
                return Err(NnError::InvalidShape {
                    op: "conv2d",
                    dims: self.dims(w),
                })
            }
            Padding::Valid => 0,
        };
        if h + 2 * pad < k || wd + 2 * pad < k {
            return Err(NnError::InvalidShape {
                op: "conv2d",
                dims: self.dims(x),
            });
        }
        if let Some(b) = b {
            if self.dims(b) != [1, cout, 1, 1] {
                return Err(mismatch("conv2d bias", self.dims(b), [1, cout, 1, 1]));
            }
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let kk = cin * k * k;
        let hw = ho * wo;
        let mut out = Tensor::zeros([n, cout, ho, wo]);
        let direct = k == 1 && stride == 1;
        let mut cols = if direct {
            Vec::new()
        } else {
            vec![T::ZERO; kk * hw]
        };
        {
            let xv = &self.nodes[x.0].value;
            let wv = self.nodes[w.0].value.data();
            let bias = b.map(|b| self.nodes[b.0].value.data());
            let out_len = cout * hw;
            for item in 0..n {
                let xi = xv.item(item);
                let dst = &mut out.data_mut()[item * out_len..(item + 1) * out_len];
                if let Some(bias) = bias {
                    for (co, chunk) in dst.chunks_exact_mut(hw).enumerate() {
                        chunk.fill(bias[co]);
                    }
                }
                let src = if direct {
                    xi
                } else {
                    im2col(xi, cin, h, wd, k, stride, pad, ho, wo, &mut cols);
                    &cols
                };
                gemm_nn(cout, kk, hw, wv, src, dst);
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(
            "conv2d",
            out,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
            &inputs,
        )
    }

    /// Stride-2, kernel-2 transposed convolution, `w: (cin, cout, 2, 2)`. Doubles H and W.
    pub fn conv_transpose2(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    ) -> Result<NodeId, NnError> {
        let [n, cin, h, wd] = self.dims(x);
        let [wcin, cout, k1, k2] = self.dims(w);
        if wcin != cin || k1 != 2 || k2 != 2 {
            return Err(mismatch("conv_transpose2", self.dims(x), self.dims(w)));
        }
        if let Some(b) = b {
            if self.dims(b) != [1, cout, 1, 1] {
                return Err(mismatch(
                    "conv_transpose2 bias",
                    self.dims(b),
                    [1, cout, 1, 1],
                ));
            }
        }
        let hw = h * wd;
        let (ho, wo) = (2 * h, 2 * wd);
        let mut out = Tensor::zeros([n, cout, ho, wo]);
        let mut y = vec![T::ZERO; cout * 4 * hw];
        {
            let xv = &self.nodes[x.0].value;
            let wv = self.nodes[w.0].value.data();
            let bias = b.map(|b| self.nodes[b.0].value.data());
            let out_len = cout * ho * wo;
            for item in 0..n {
                y.fill(T::ZERO);
                gemm_tn(cout * 4, cin, hw, wv, xv.item(item), &mut y);
                let dst = &mut out.data_mut()[item * out_len..(item + 1) * out_len];
                for co in 0..cout {
                    let bv = bias.map_or(T::ZERO, |b| b[co]);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let src = &y[(co * 4 + dy * 2 + dx) * hw..][..hw];
                            for r in 0..h {
                                let row = &mut dst[(co * ho + 2 * r + dy) * wo..][..wo];
                                for c in 0..wd {
                                    row[2 * c + dx] = src[r * wd + c] + bv;
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(
            "conv_transpose2",
            out,
            Op::ConvTranspose2 { x, w, b },
            &inputs,
        )
    }

    /// 2x2 max pooling with stride 2. Ties go to the first element in row-major order.
    pub fn maxpool2(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let [n, c, h, w] = self.dims(x);
        if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
            return Err(NnError::InvalidShape {
                op: "maxpool2",
                dims: self.dims(x),
            });
        }
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Tensor::zeros([n, c, ho, wo]);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        {
            let xv = self.nodes[x.0].value.data();
            let dst = out.data_mut();
            for plane in 0..n * c {
                let base = plane * h * w;
                for r in 0..ho {
                    for col in 0..wo {
                        let mut best = base + 2 * r * w + 2 * col;
                        for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = base + (2 * r + dr) * w + 2 * col + dc;
                            if xv[idx] > xv[best] {
                                best = idx;
                            }
                        }
                        dst[(plane * ho + r) * wo + col] = xv[best];
                        argmax.push(best as u32);
                    }
                }
            }
        }
        self.push("maxpool2", out, Op::MaxPool2 { x, argmax }, &[x])
    }

    /// Nearest-neighbor 2x upsampling.
    pub fn upsample2(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let [n, c, h, w] = self.dims(x);
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = Tensor::zeros([n, c, ho, wo]);
        {
            let xv = self.nodes[x.0].value.data();
            let dst = out.data_mut();
            for plane in 0..n * c {
                for r in 0..ho {
                    for col in 0..wo {
                        dst[(plane * ho + r) * wo + col] = xv[(plane * h + r / 2) * w + col / 2];
                    }
                }
            }
        }
        self.push("upsample2", out, Op::Upsample2 { x }, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let xv = &self.nodes[x.0].value;
        let data = xv
            .data()
            .iter()
            .map(|&v| if v > T::ZERO { v } else { T::ZERO })
            .collect();
        let out = Tensor::from_vec(xv.dims(), data)?;
        self.push("relu", out, Op::Relu { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, NnError> {
        let xv = &self.nodes[x.0].value;
        let data = xv.data().iter().map(|&v| sigmoid(v)).collect();
        let out = Tensor::from_vec(xv.dims(), data)?;
        self.push("sigmoid", out, Op::Sigmoid { x }, &[x])
    }

    /// Concatenates along the channel axis.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da[0] != db[0] || da[2..] != db[2..] {
            return Err(mismatch("concat", da, db));
        }
        let mut out = Tensor::zeros([da[0], da[1] + db[1], da[2], da[3]]);
        {
            let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
            let (la, lb) = (av.item_len(), bv.item_len());
            let dst = out.data_mut();
            for item in 0..da[0] {
                dst[item * (la + lb)..][..la].copy_from_slice(av.item(item));
                dst[item * (la + lb) + la..][..lb].copy_from_slice(bv.item(item));
            }
        }
        self.push("concat", out, Op::Concat { a, b }, &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(mismatch("add", da, db));
        }
        let data = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| x + y)
            .collect();
        self.push(
            "add",
            Tensor::from_vec(da, data)?,
            Op::Add { a, b },
            &[a, b],
        )
    }

    /// `x * alpha` with a single-channel `alpha` broadcast over the channels of `x`.
    pub fn gate(&mut self, x: NodeId, alpha: NodeId) -> Result<NodeId, NnError> {
        let (dx, da) = (self.dims(x), self.dims(alpha));
        if da != [dx[0], 1, dx[2], dx[3]] {
            return Err(mismatch("gate", dx, da));
        }
        let hw = dx[2] * dx[3];
        let mut out = Tensor::zeros(dx);
        {
            let xv = self.nodes[x.0].value.data();
            let av = self.nodes[alpha.0].value.data();
            let dst = out.data_mut();
            for item in 0..dx[0] {
                let a = &av[item * hw..(item + 1) * hw];
                for ch in 0..dx[1] {
                    let off = (item * dx[1] + ch) * hw;
                    for i in 0..hw {
                        dst[off + i] = xv[off + i] * a[i];
                    }
                }
            }
        }
        self.push("gate", out, Op::Gate { x, alpha }, &[x, alpha])
    }

    /// `sum(a * b)` as a scalar.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NnError> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(mismatch("dot", da, db));
        }
        let s: f64 = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| x.to_f64() * y.to_f64())
            .sum();
        self.push(
            "dot",
            Tensor::scalar(T::from_f64(s)),
            Op::Dot { a, b },
            &[a, b],
        )
    }

    /// `lambda * BCE + (1 - lambda) * (1 - softDice)` against a `{0, 1}` target.
    pub fn bce_dice(
        &mut self,
        pred: NodeId,
        target: &Tensor<T>,
        lambda: f64,
    ) -> Result<NodeId, NnError> {
        let dp = self.dims(pred);
        if dp != target.dims() {
            return Err(mismatch("bce_dice", dp, target.dims()));
        }
        let p = self.nodes[pred.0].value.data();
        let t = target.data();
        let count = p.len() as f64;
        let (mut bce, mut spt, mut sp, mut st) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (&pv, &tv) in p.iter().zip(t) {
            let (pv, tv) = (pv.to_f64(), tv.to_f64());
            let pc = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            bce -= tv * libm::log(pc) + (1.0 - tv) * libm::log(1.0 - pc);
            spt += pv * tv;
            sp += pv;
            st += tv;
        }
        bce /= count;
        let dice = 2.0 * spt / (sp + st + DICE_EPS);
        let loss = lambda * bce + (1.0 - lambda) * (1.0 - dice);
        let op = Op::BceDice {
            pred,
            target: t.to_vec(),
            lambda,
        };
        self.push("bce_dice", Tensor::scalar(T::from_f64(loss)), op, &[pred])
    }

    /// Mean squared error.
    pub fn mse(&mut self, pred: NodeId, target: &Tensor<T>) -> Result<NodeId, NnError> {
        let dp = self.dims(pred);
        if dp != target.dims() {
            return Err(mismatch("mse", dp, target.dims()));
        }
        let p = self.nodes[pred.0].value.data();
        let s: f64 = p
            .iter()
            .zip(target.data())
            .map(|(&a, &b)| {
                let d = a.to_f64() - b.to_f64();
                d * d
            })
            .sum();
        let loss = s / p.len() as f64;
        let op = Op::Mse {
            pred,
            target: target.data().to_vec(),
        };
        self.push("mse", Tensor::scalar(T::from_f64(loss)), op, &[pred])
    }

    /// Fingerprint of every piecewise-linear branch taken in the forward pass
    /// (ReLU signs and pooling winners). Two passes with equal fingerprints are
    /// on the same smooth piece of the loss surface.
    pub fn branch_fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(PRIME);
        };
        for node in &self.nodes {
            match &node.op {
                Op::Relu { x } => {
                    for &v in self.nodes[x.0].value.data() {
                        mix(u64::from(v > T::ZERO));
                    }
                }
                Op::MaxPool2 { argmax, .. } => {
                    for &a in argmax {
                        mix(u64::from(a));
                    }
                }
                _ => {}
            }
        }
        h
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>, NnError> {
        let dl = self.dims(loss);
        if dl != [1, 1, 1, 1] {
            return Err(NnError::NotScalar(dl));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::ONE));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn backprop_node(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            } => self.backprop_conv(g, *x, *w, *b, *stride, *pad, grads),
            Op::ConvTranspose2 { x, w, b } => self.backprop_conv_t(g, *x, *w, *b, grads),
            Op::MaxPool2 { x, argmax } => {
                if self.wants(*x) {
                    let mut dx = Tensor::zeros(self.dims(*x));
                    let d = dx.data_mut();
                    for (&a, &gv) in argmax.iter().zip(g.data()) {
                        d[a as usize] += gv;
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::Upsample2 { x } => {
                if self.wants(*x) {
                    let [_, _, h, w] = self.dims(*x);
                    let (ho, wo) = (2 * h, 2 * w);
                    let mut dx = Tensor::zeros(self.dims(*x));
                    let d = dx.data_mut();
                    for (i, &gv) in g.data().iter().enumerate() {
                        let plane = i / (ho * wo);
                        let r = (i / wo) % ho;
                        let c = i % wo;
                        d[(plane * h + r / 2) * w + c / 2] += gv;
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::Relu { x } => {
                if self.wants(*x) {
                    let xv = self.nodes[x.0].value.data();
                    let data = g
                        .data()
                        .iter()
                        .zip(xv)
                        .map(|(&gv, &v)| if v > T::ZERO { gv } else { T::ZERO })
                        .collect();
                    accumulate(
                        grads,
                        *x,
                        Tensor::from_vec(g.dims(), data).expect("same dims"),
                    );
                }
            }
            Op::Sigmoid { x } => {
                if self.wants(*x) {
                    let s = node.value.data();
                    let data = g
                        .data()
                        .iter()
                        .zip(s)
                        .map(|(&gv, &sv)| gv * sv * (T::ONE - sv))
                        .collect();
                    accumulate(
                        grads,
                        *x,
                        Tensor::from_vec(g.dims(), data).expect("same dims"),
                    );
                }
            }
            Op::Concat { a, b } => {
                let (da, db) = (self.dims(*a), self.dims(*b));
                let (la, lb) = (da[1] * da[2] * da[3], db[1] * db[2] * db[3]);
                let mut ga = Tensor::zeros(da);
                let mut gb = Tensor::zeros(db);
                for item in 0..da[0] {
                    let src = &g.data()[item * (la + lb)..][..la + lb];
                    ga.data_mut()[item * la..][..la].copy_from_slice(&src[..la]);
                    gb.data_mut()[item * lb..][..lb].copy_from_slice(&src[la..]);
                }
                if self.wants(*a) {
                    accumulate(grads, *a, ga);
                }
                if self.wants(*b) {
                    accumulate(grads, *b, gb);
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if self.wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Op::Gate { x, alpha } => {
                let dx_dims = self.dims(*x);
                let hw = dx_dims[2] * dx_dims[3];
                let xv = self.nodes[x.0].value.data();
                let av = self.nodes[alpha.0].value.data();
                let mut gx = Tensor::zeros(dx_dims);
                let mut ga = Tensor::zeros(self.dims(*alpha));
                for item in 0..dx_dims[0] {
                    for ch in 0..dx_dims[1] {
                        let off = (item * dx_dims[1] + ch) * hw;
                        for i in 0..hw {
                            let gv = g.data()[off + i];
                            gx.data_mut()[off + i] = gv * av[item * hw + i];
                            ga.data_mut()[item * hw + i] += gv * xv[off + i];
                        }
                    }
                }
                if self.wants(*x) {
                    accumulate(grads, *x, gx);
                }
                if self.wants(*alpha) {
                    accumulate(grads, *alpha, ga);
                }
            }
            Op::Dot { a, b } => {
                let gs = g.value();
                let scale = |src: NodeId| {
                    let v = &self.nodes[src.0].value;
                    Tensor::from_vec(v.dims(), v.data().iter().map(|&e| e * gs).collect())
                        .expect("same dims")
                };
                if self.wants(*a) {
                    accumulate(grads, *a, scale(*b));
                }
                if self.wants(*b) {
                    accumulate(grads, *b, scale(*a));
                }
            }
            Op::BceDice {
                pred,
                target,
                lambda,
            } => {
                if self.wants(*pred) {
                    let p = self.nodes[pred.0].value.data();
                    let count = p.len() as f64;
                    let (mut spt, mut sp, mut st) = (0.0f64, 0.0f64, 0.0f64);
                    for (&pv, &tv) in p.iter().zip(target) {
                        spt += pv.to_f64() * tv.to_f64();
                        sp += pv.to_f64();
                        st += tv.to_f64();
                    }
                    let denom = sp + st + DICE_EPS;
                    let gs = g.value().to_f64();
                    let data = p
                        .iter()
                        .zip(target)
                        .map(|(&pv, &tv)| {
                            let (pv, tv) = (pv.to_f64(), tv.to_f64());
                            let dbce = if pv > BCE_CLAMP && pv < 1.0 - BCE_CLAMP {
                                (-tv / pv + (1.0 - tv) / (1.0 - pv)) / count
                            } else {
                                0.0
                            };
                            let ddice = (2.0 * tv * denom - 2.0 * spt) / (denom * denom);
                            T::from_f64(gs * (lambda * dbce - (1.0 - lambda) * ddice))
                        })
                        .collect();
                    accumulate(
                        grads,
                        *pred,
                        Tensor::from_vec(self.dims(*pred), data).expect("same dims"),
                    );
                }
            }
            Op::Mse { pred, target } => {
                if self.wants(*pred) {
                    let p = self.nodes[pred.0].value.data();
                    let scale = 2.0 * g.value().to_f64() / p.len() as f64;
                    let data = p
                        .iter()
                        .zip(target)
                        .map(|(&a, &b)| T::from_f64(scale * (a.to_f64() - b.to_f64())))
                        .collect();
                    accumulate(
                        grads,
                        *pred,
                        Tensor::from_vec(self.dims(*pred), data).expect("same dims"),
                    );
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_conv(
        &self,
        g: &Tensor<T>,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let [n, cin, h, wd] = self.dims(x);
        let [cout, _, k, _] = self.dims(w);
        let [_, _, ho, wo] = g.dims();
        let (kk, hw) = (cin * k * k, ho * wo);
        let xv = &self.nodes[x.0].value;
        let wv = self.nodes[w.0].value.data();
        let direct = k == 1 && stride == 1;
        let need_x = self.wants(x);
        let need_w = self.wants(w);
        let mut dw = Tensor::zeros(self.dims(w));
        let mut dx = if need_x {
            Some(Tensor::zeros(self.dims(x)))
        } else {
            None
        };
        let mut cols = if direct {
            Vec::new()
        } else {
            vec![T::ZERO; kk * hw]
        };
        let mut dcols = vec![T::ZERO; if direct { 0 } else { kk * hw }];
        for item in 0..n {
            let gi = g.item(item);
            if need_w {
                let src = if direct {
                    xv.item(item)
                } else {
                    im2col(xv.item(item), cin, h, wd, k, stride, pad, ho, wo, &mut cols);
                    &cols
                };
                gemm_nt(cout, hw, kk, gi, src, dw.data_mut());
            }
            if let Some(dx) = dx.as_mut() {
                let len = cin * h * wd;
                let dst = &mut dx.data_mut()[item * len..(item + 1) * len];
                if direct {
                    gemm_tn(kk, cout, hw, wv, gi, dst);
                } else {
                    dcols.fill(T::ZERO);
                    gemm_tn(kk, cout, hw, wv, gi, &mut dcols);
                    col2im(&dcols, cin, h, wd, k, stride, pad, ho, wo, dst);
                }
            }
        }
        #[cfg(test)]
        if self.corrupt_conv_backward {
            for v in dw.data_mut() {
                *v *= T::from_f64(1.5);
            }
        }
        if need_w {
            accumulate(grads, w, dw);
        }
        if let Some(dx) = dx {
            accumulate(grads, x, dx);
        }
        if let Some(b) = b {
            if self.wants(b) {
                accumulate(grads, b, channel_sums(g));
            }
        }
    }

    fn backprop_conv_t(
        &self,
        g: &Tensor<T>,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        grads: &mut [Option<Tensor<T>>],
    ) {
        let [n, cin, h, wd] = self.dims(x);
        let [_, cout, _, _] = self.dims(w);
        let (ho, wo, hw) = (2 * h, 2 * wd, h * wd);
        let xv = &self.nodes[x.0].value;
        let wv = self.nodes[w.0].value.data();
        let mut gathered = vec![T::ZERO; cout * 4 * hw];
        let mut dw = Tensor::zeros(self.dims(w));
        let mut dx = Tensor::zeros(self.dims(x));
        for item in 0..n {
            let gi = g.item(item);
            for co in 0..cout {
                for dy in 0..2 {
                    for dx_ in 0..2 {
                        let dst = &mut gathered[(co * 4 + dy * 2 + dx_) * hw..][..hw];
                        for r in 0..h {
                            let row = &gi[(co * ho + 2 * r + dy) * wo..][..wo];
                            for c in 0..wd {
                                dst[r * wd + c] = row[2 * c + dx_];
                            }
                        }
                    }
                }
            }
            if self.wants(w) {
                gemm_nt(cin, hw, cout * 4, xv.item(item), &gathered, dw.data_mut());
            }
            if self.wants(x) {
                let len = cin * hw;
                gemm_nn(
                    cin,
                    cout * 4,
                    hw,
                    wv,
                    &gathered,
                    &mut dx.data_mut()[item * len..(item + 1) * len],
                );
            }
        }
        if self.wants(w) {
            accumulate(grads, w, dw);
        }
        if self.wants(x) {
            accumulate(grads, x, dx);
        }
        if let Some(b) = b {
            if self.wants(b) {
                accumulate(grads, b, channel_sums(g));
            }
        }
    }
}

fn channel_sums<T: Scalar>(g: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = g.dims();
    let hw = h * w;
    let mut out = Tensor::zeros([1, c, 1, 1]);
    for item in 0..n {
        for ch in 0..c {
            let s: f64 = g.data()[(item * c + ch) * hw..][..hw]
                .iter()
                .map(|v| v.to_f64())
                .sum();
            out.data_mut()[ch] += T::from_f64(s);
        }
    }
    out
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of one backward pass, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient for every parameter of `store`, in store order. Parameters the
    /// graph never used get zeros.
    pub fn for_params(&self, graph: &Graph<T>, store: &ParamStore<T>) -> Vec<Tensor<T>> {
        let mut out: Vec<Tensor<T>> = store.iter().map(|(_, t)| Tensor::zeros(t.dims())).collect();
        for (i, node) in graph.nodes.iter().enumerate() {
            if let Op::Param(p) = node.op {
                if let Some(g) = &self.grads[i] {
                    out[p].add_assign(g);
                }
            }
        }
        out
    }
}
