//! Wengert-list reverse-mode differentiation.

use rand::Rng;

use super::kernels::{
    avgpool_backward, avgpool_forward, conv2d_backward, conv2d_forward, depthwise_backward, depthwise_forward,
    ConvGeometry,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::linalg::{MatMut, MatRef, Real};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-map statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased (n − 1) variance, the form kept in running averages.
    pub var_unbiased: Vec<T>,
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeometry },
    Depthwise { x: Var, w: Var, b: Option<Var> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T>, batch_stats: bool },
    Elu { x: Var },
    AvgPool { x: Var, k: usize, stride: usize },
    Dropout { x: Var, mask: Vec<T> },
    MatMul { a: Var, b: Var },
    AddBias { x: Var, b: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Reshape { x: Var },
    SwapLastAxes { x: Var },
    SelectStep { x: Var, step: usize },
    StackSteps { parts: Vec<Var> },
    SliceCols { x: Var, start: usize },
    ConcatLast { a: Var, b: Var },
    MeanLastAxis { x: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<T> },
    SumWeighted { x: Var, weights: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records operations in execution order; [`Tape::backward`] replays them in
/// reverse.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err<V>(msg: String) -> Result<V> {
    Err(Error::Shape(msg))
}

fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` root with respect to `v`; `None` when
    /// `v` does not influence it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads[v.0].take()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    // ---- operations -------------------------------------------------------

    /// Valid cross-correlation of `[B, Ci, H, W]` with `[Co, Ci, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: (usize, usize)) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(x), self.shape(w), stride)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.out_maps] {
                return shape_err(format!("conv bias {:?} for {} maps", self.shape(b), geom.out_maps));
            }
        }
        let y = conv2d_forward(&geom, self.data(x), self.data(w), b.map(|b| self.data(b)));
        let value = Tensor::new(geom.output_shape(), y)?;
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, &inputs))
    }

    /// `[B, M, H, W]` with one `H`-tall kernel per map (`w: [M, H]`) →
    /// `[B, M, 1, W]`.
    pub fn depthwise(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let &[bn, m, h, wd] = self.shape(x) else {
            return shape_err(format!("depthwise expects 4-d input, got {:?}", self.shape(x)));
        };
        if self.shape(w) != [m, h] {
            return shape_err(format!("depthwise kernel {:?} for input {:?}", self.shape(w), self.shape(x)));
        }
        if let Some(b) = b {
            if self.shape(b) != [m] {
                return shape_err("depthwise bias shape".into());
            }
        }
        let y = depthwise_forward([bn, m, h, wd], self.data(x), self.data(w), b.map(|b| self.data(b)));
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(Tensor::new([bn, m, 1, wd], y)?, Op::Depthwise { x, w, b }, &inputs))
    }

    fn map_layout(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let s = self.shape(x);
        if s.len() < 2 {
            return shape_err(format!("batch norm needs [B, M, ...], got {s:?}"));
        }
        let (bn, m) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        if self.shape(gamma) != [m] || self.shape(beta) != [m] {
            return shape_err(format!("batch norm affine parameters must be [{m}]"));
        }
        Ok((bn, m, inner))
    }

    /// Normalizes each map with the batch's own statistics, which are
    /// returned for the caller's running averages.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats<T>)> {
        let (bn, m, inner) = self.map_layout(x, gamma, beta)?;
        if bn < 2 {
            return Err(Error::Config("batch norm in training mode needs a batch of at least 2".into()));
        }
        let n = bn * inner;
        let xs = self.data(x);
        let mut mean = vec![T::zero(); m];
        let mut var = vec![T::zero(); m];
        for mi in 0..m {
            let mut s = 0.0f64;
            for b in 0..bn {
                s += xs[(b * m + mi) * inner..][..inner].iter().map(|v| v.to_f64().unwrap()).sum::<f64>();
            }
            let mu = s / n as f64;
            let mut q = 0.0f64;
            for b in 0..bn {
                q += xs[(b * m + mi) * inner..][..inner]
                    .iter()
                    .map(|v| (v.to_f64().unwrap() - mu).powi(2))
                    .sum::<f64>();
            }
            mean[mi] = T::from_f64_lossy(mu);
            var[mi] = T::from_f64_lossy(q / n as f64);
        }
        let eps_t = T::from_f64_lossy(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps_t).sqrt()).collect();
        let stats = BatchStats {
            mean: mean.clone(),
            var_unbiased: var
                .iter()
                .map(|&v| v * T::from_usize(n).unwrap() / T::from_usize(n - 1).unwrap())
                .collect(),
        };
        let (y, xhat) = self.normalize(x, gamma, beta, &mean, &inv_std, (bn, m, inner));
        let value = Tensor::new(self.shape(x).to_vec(), y)?;
        let op = Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: true };
        Ok((self.push(value, op, &[x, gamma, beta]), stats))
    }

    /// Normalizes with fixed (running) statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: f64) -> Result<Var> {
        let (bn, m, inner) = self.map_layout(x, gamma, beta)?;
        if mean.len() != m || var.len() != m {
            return shape_err("running statistics length".into());
        }
        let eps_t = T::from_f64_lossy(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps_t).sqrt()).collect();
        let (y, xhat) = self.normalize(x, gamma, beta, mean, &inv_std, (bn, m, inner));
        let value = Tensor::new(self.shape(x).to_vec(), y)?;
        let op = Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: false };
        Ok(self.push(value, op, &[x, gamma, beta]))
    }

    fn normalize(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        inv_std: &[T],
        (bn, m, inner): (usize, usize, usize),
    ) -> (Vec<T>, Vec<T>) {
        let (xs, g, be) = (self.data(x), self.data(gamma), self.data(beta));
        let mut xhat = vec![T::zero(); xs.len()];
        let mut y = vec![T::zero(); xs.len()];
        debug_assert_eq!(xs.len(), bn * m * inner);
        for (bm, ((xs, xh), y)) in xs
            .chunks_exact(inner)
            .zip(xhat.chunks_exact_mut(inner))
            .zip(y.chunks_exact_mut(inner))
            .enumerate()
        {
            let mi = bm % m;
            for ((&x, xh), y) in xs.iter().zip(xh).zip(y) {
                *xh = (x - mean[mi]) * inv_std[mi];
                *y = g[mi] * *xh + be[mi];
            }
        }
        (y, xhat)
    }

    /// `x` for `x > 0`, `eˣ − 1` otherwise.
    pub fn elu(&mut self, x: Var) -> Result<Var> {
        let y = self.data(x).iter().map(|&v| if v > T::zero() { v } else { v.exp_m1() }).collect();
        let value = Tensor::new(self.shape(x).to_vec(), y)?;
        Ok(self.push(value, Op::Elu { x }, &[x]))
    }

    /// Mean pooling over the last axis.
    pub fn avg_pool(&mut self, x: Var, k: usize, stride: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let width = *shape.last().unwrap();
        if k == 0 || stride == 0 || k > width {
            return shape_err(format!("pool of {k} (stride {stride}) over width {width}"));
        }
        let y = avgpool_forward(self.data(x), width, k, stride);
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = (width - k) / stride + 1;
        Ok(self.push(Tensor::new(out_shape, y)?, Op::AvgPool { x, k, stride }, &[x]))
    }

    /// Inverted dropout: each element survives with probability `1 − p` and is
    /// scaled by `1 / (1 − p)`.
    pub fn dropout<R: Rng>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} must lie in [0, 1)")));
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| if p > 0.0 && rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let y = self.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(self.shape(x).to_vec(), y)?;
        Ok(self.push(value, Op::Dropout { x, mask }, &[x]))
    }

    /// `[m, k] · [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (&[m, k], &[k2, n]) = (self.shape(a), self.shape(b)) else {
            return shape_err(format!("matmul of {:?} and {:?}", self.shape(a), self.shape(b)));
        };
        if k != k2 {
            return shape_err(format!("matmul inner dimensions {k} and {k2}"));
        }
        let mut y = vec![T::zero(); m * n];
        T::gemm(
            T::one(),
            MatRef::row_major(self.data(a), m, k),
            MatRef::row_major(self.data(b), k, n),
            T::zero(),
            MatMut::row_major(&mut y, m, n),
        );
        Ok(self.push(Tensor::new([m, n], y)?, Op::MatMul { a, b }, &[a, b]))
    }

    /// Adds `b: [n]` to every row of `x: [.., n]`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap();
        if self.shape(b) != [n] {
            return shape_err(format!("bias {:?} for rows of {n}", self.shape(b)));
        }
        let bias = self.data(b);
        let y = self.data(x).chunks(n).flat_map(|r| r.iter().zip(bias).map(|(&v, &c)| v + c)).collect();
        let value = Tensor::new(self.shape(x).to_vec(), y)?;
        Ok(self.push(value, Op::AddBias { x, b }, &[x, b]))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(format!("elementwise op on {:?} and {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let y = self.data(a).iter().zip(self.data(b)).map(|(&p, &q)| p + q).collect();
        let value = Tensor::new(self.shape(a).to_vec(), y)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let y = self.data(a).iter().zip(self.data(b)).map(|(&p, &q)| p * q).collect();
        let value = Tensor::new(self.shape(a).to_vec(), y)?;
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = self.data(x).iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::new(self.shape(x).to_vec(), y)?;
        Ok(self.push(value, Op::Sigmoid { x }, &[x]))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let y = self.data(x).iter().map(|&v| v.tanh()).collect();
        let value = Tensor::new(self.shape(x).to_vec(), y)?;
        Ok(self.push(value, Op::Tanh { x }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape { x }, &[x]))
    }

    /// `[B, P, Q] → [B, Q, P]`.
    pub fn swap_last_axes(&mut self, x: Var) -> Result<Var> {
        let &[b, p, q] = self.shape(x) else {
            return shape_err(format!("swap_last_axes expects 3-d input, got {:?}", self.shape(x)));
        };
        let xs = self.data(x);
        let mut y = vec![T::zero(); xs.len()];
        for bi in 0..b {
            for i in 0..p {
                for j in 0..q {
                    y[(bi * q + j) * p + i] = xs[(bi * p + i) * q + j];
                }
            }
        }
        Ok(self.push(Tensor::new([b, q, p], y)?, Op::SwapLastAxes { x }, &[x]))
    }

    /// `[B, L, F] → [B, F]` at position `step`.
    pub fn select_step(&mut self, x: Var, step: usize) -> Result<Var> {
        let &[b, l, f] = self.shape(x) else {
            return shape_err(format!("select_step expects 3-d input, got {:?}", self.shape(x)));
        };
        if step >= l {
            return shape_err(format!("step {step} of {l}"));
        }
        let xs = self.data(x);
        let y = (0..b).flat_map(|bi| xs[(bi * l + step) * f..][..f].iter().copied()).collect();
        Ok(self.push(Tensor::new([b, f], y)?, Op::SelectStep { x, step }, &[x]))
    }

    /// `L × [B, F] → [B, L, F]`.
    pub fn stack_steps(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("stack of nothing".into());
        };
        let &[b, f] = self.shape(first) else {
            return shape_err("stack_steps expects [B, F] parts".into());
        };
        if parts.iter().any(|&p| self.shape(p) != [b, f]) {
            return shape_err("stack_steps parts differ in shape".into());
        }
        let l = parts.len();
        let mut y = vec![T::zero(); b * l * f];
        for (s, &p) in parts.iter().enumerate() {
            let d = self.data(p);
            for bi in 0..b {
                y[(bi * l + s) * f..][..f].copy_from_slice(&d[bi * f..][..f]);
            }
        }
        let value = Tensor::new([b, l, f], y)?;
        Ok(self.push(value, Op::StackSteps { parts: parts.to_vec() }, parts))
    }

    /// Columns `start..start + len` of `[B, N]`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let &[b, n] = self.shape(x) else {
            return shape_err("slice_cols expects 2-d input".into());
        };
        if start + len > n || len == 0 {
            return shape_err(format!("columns {start}..{} of {n}", start + len));
        }
        let xs = self.data(x);
        let y = (0..b).flat_map(|bi| xs[bi * n + start..][..len].iter().copied()).collect();
        Ok(self.push(Tensor::new([b, len], y)?, Op::SliceCols { x, start }, &[x]))
    }

    /// `[B, P] ++ [B, Q] → [B, P + Q]`.
    pub fn concat_last(&mut self, a: Var, b: Var) -> Result<Var> {
        let (&[ba, p], &[bb, q]) = (self.shape(a), self.shape(b)) else {
            return shape_err("concat_last expects 2-d inputs".into());
        };
        if ba != bb {
            return shape_err("concat_last batch mismatch".into());
        }
        let (xa, xb) = (self.data(a), self.data(b));
        let y = (0..ba)
            .flat_map(|i| xa[i * p..][..p].iter().chain(&xb[i * q..][..q]).copied())
            .collect();
        Ok(self.push(Tensor::new([ba, p + q], y)?, Op::ConcatLast { a, b }, &[a, b]))
    }

    /// Mean over the last axis (global average pooling over time).
    pub fn mean_last_axis(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return shape_err("mean_last_axis expects at least 2-d input".into());
        }
        let w = *shape.last().unwrap();
        let scale = T::one() / T::from_usize(w).unwrap();
        let y = self.data(x).chunks(w).map(|r| r.iter().copied().sum::<T>() * scale).collect();
        let value = Tensor::new(shape[..shape.len() - 1].to_vec(), y)?;
        Ok(self.push(value, Op::MeanLastAxis { x }, &[x]))
    }

    /// Mean categorical cross-entropy of softmax(logits) against `labels`.
    /// Returns the scalar loss node; probabilities are available through
    /// [`Tape::probabilities`].
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let &[b, c] = self.shape(logits) else {
            return shape_err("logits must be [B, C]".into());
        };
        if labels.len() != b || labels.iter().any(|&l| l >= c) {
            return shape_err(format!("{} labels for {b} rows of {c} classes", labels.len()));
        }
        let probs = softmax_rows(self.data(logits), c);
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -probs[i * c + l].to_f64().unwrap().max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / b as f64;
        let value = Tensor::new([1], vec![T::from_f64_lossy(loss)])?;
        let op = Op::SoftmaxCrossEntropy { logits, labels: labels.to_vec(), probs };
        Ok(self.push(value, op, &[logits]))
    }

    pub fn probabilities(&self, loss: Var) -> Option<&[T]> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// `Σ wᵢ xᵢ`, a scalar probe for gradient checks.
    pub fn sum_weighted(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return shape_err("sum_weighted length".into());
        }
        let s = self.data(x).iter().zip(&weights).map(|(&a, &b)| a * b).sum::<T>();
        Ok(self.push(Tensor::new([1], vec![s])?, Op::SumWeighted { x, weights }, &[x]))
    }

    // ---- reverse pass -----------------------------------------------------

    /// Back-propagates from a scalar node. Gradients of earlier calls are
    /// cleared first.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).numel() != 1 {
            return shape_err(format!("backward from non-scalar {:?}", self.shape(root)));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let Some(gy) = self.grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.backward_node(i, &gy);
            }
            self.grads[i] = Some(gy);
        }
        Ok(())
    }

    fn backward_node(&mut self, i: usize, gy: &[T]) {
        let Tape { nodes, grads } = self;
        let node = &nodes[i];
        let val = |v: Var| nodes[v.0].value.data();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].requires_grad {
                return;
            }
            let n = nodes[v.0].value.numel();
            f(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]));
        };
        let add_into = |dst: &mut [T], src: &[T]| {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                let want_x = nodes[x.0].requires_grad;
                let (dx, dw, db) = conv2d_backward(geom, val(*x), val(*w), gy, want_x);
                if let Some(dx) = dx {
                    acc(*x, &mut |g| add_into(g, &dx));
                }
                acc(*w, &mut |g| add_into(g, &dw));
                if let Some(b) = b {
                    acc(*b, &mut |g| add_into(g, &db));
                }
            }
            Op::Depthwise { x, w, b } => {
                let s = nodes[x.0].value.shape();
                let (dx, dw, db) = depthwise_backward([s[0], s[1], s[2], s[3]], val(*x), val(*w), gy);
                acc(*x, &mut |g| add_into(g, &dx));
                acc(*w, &mut |g| add_into(g, &dw));
                if let Some(b) = b {
                    acc(*b, &mut |g| add_into(g, &db));
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let s = nodes[x.0].value.shape();
                let (bn, m) = (s[0], s[1]);
                let inner: usize = s[2..].iter().product();
                let gam = val(*gamma);
                let mut dgamma = vec![T::zero(); m];
                let mut dbeta = vec![T::zero(); m];
                for (bm, (g, xh)) in gy.chunks_exact(inner).zip(xhat.chunks_exact(inner)).enumerate() {
                    let mi = bm % m;
                    let (mut sg, mut sb) = (T::zero(), T::zero());
                    for (&g, &xh) in g.iter().zip(xh) {
                        sg = sg + g * xh;
                        sb = sb + g;
                    }
                    dgamma[mi] = dgamma[mi] + sg;
                    dbeta[mi] = dbeta[mi] + sb;
                }
                let n = T::from_usize(bn * inner).unwrap();
                let mut dx = vec![T::zero(); gy.len()];
                for (bm, ((d, g), xh)) in dx
                    .chunks_exact_mut(inner)
                    .zip(gy.chunks_exact(inner))
                    .zip(xhat.chunks_exact(inner))
                    .enumerate()
                {
                    let mi = bm % m;
                    let scale = gam[mi] * inv_std[mi];
                    if *batch_stats {
                        let (mb, mg) = (dbeta[mi] / n, dgamma[mi] / n);
                        for ((d, &g), &xh) in d.iter_mut().zip(g).zip(xh) {
                            *d = scale * (g - mb - xh * mg);
                        }
                    } else {
                        for (d, &g) in d.iter_mut().zip(g) {
                            *d = scale * g;
                        }
                    }
                }
                acc(*x, &mut |g| add_into(g, &dx));
                acc(*gamma, &mut |g| add_into(g, &dgamma));
                acc(*beta, &mut |g| add_into(g, &dbeta));
            }
            Op::Elu { x } => {
                let xs = val(*x);
                let ys = node.value.data();
                acc(*x, &mut |g| {
                    for (((g, &gy), &x), &y) in g.iter_mut().zip(gy).zip(xs).zip(ys) {
                        let d = if x > T::zero() { T::one() } else { y + T::one() };
                        *g = *g + gy * d;
                    }
                });
            }
            Op::AvgPool { x, k, stride } => {
                let width = *nodes[x.0].value.shape().last().unwrap();
                let dx = avgpool_backward(gy, width, *k, *stride);
                acc(*x, &mut |g| add_into(g, &dx));
            }
            Op::Dropout { x, mask } => {
                acc(*x, &mut |g| {
                    for ((g, &gy), &m) in g.iter_mut().zip(gy).zip(mask.iter()) {
                        *g = *g + gy * m;
                    }
                });
            }
            Op::MatMul { a, b } => {
                let (m, k) = (nodes[a.0].value.shape()[0], nodes[a.0].value.shape()[1]);
                let n = nodes[b.0].value.shape()[1];
                let gyv = MatRef::row_major(gy, m, n);
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |g| {
                    T::gemm(T::one(), gyv, MatRef::row_major(bv, k, n).t(), T::one(), MatMut::row_major(g, m, k))
                });
                acc(*b, &mut |g| {
                    T::gemm(T::one(), MatRef::row_major(av, m, k).t(), gyv, T::one(), MatMut::row_major(g, k, n))
                });
            }
            Op::AddBias { x, b } => {
                let n = nodes[b.0].value.numel();
                acc(*x, &mut |g| add_into(g, gy));
                acc(*b, &mut |g| {
                    for row in gy.chunks(n) {
                        add_into(g, row);
                    }
                });
            }
            Op::Add { a, b } => {
                acc(*a, &mut |g| add_into(g, gy));
                acc(*b, &mut |g| add_into(g, gy));
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                acc(*a, &mut |g| {
                    for ((g, &gy), &v) in g.iter_mut().zip(gy).zip(bv) {
                        *g = *g + gy * v;
                    }
                });
                acc(*b, &mut |g| {
                    for ((g, &gy), &v) in g.iter_mut().zip(gy).zip(av) {
                        *g = *g + gy * v;
                    }
                });
            }
            Op::Sigmoid { x } => {
                let ys = node.value.data();
                acc(*x, &mut |g| {
                    for ((g, &gy), &y) in g.iter_mut().zip(gy).zip(ys) {
                        *g = *g + gy * y * (T::one() - y);
                    }
                });
            }
            Op::Tanh { x } => {
                let ys = node.value.data();
                acc(*x, &mut |g| {
                    for ((g, &gy), &y) in g.iter_mut().zip(gy).zip(ys) {
                        *g = *g + gy * (T::one() - y * y);
                    }
                });
            }
            Op::Reshape { x } => acc(*x, &mut |g| add_into(g, gy)),
            Op::SwapLastAxes { x } => {
                let s = nodes[x.0].value.shape();
                let (b, p, q) = (s[0], s[1], s[2]);
                acc(*x, &mut |g| {
                    for bi in 0..b {
                        for i in 0..p {
                            for j in 0..q {
                                let d = &mut g[(bi * p + i) * q + j];
                                *d = *d + gy[(bi * q + j) * p + i];
                            }
                        }
                    }
                });
            }
            Op::SelectStep { x, step } => {
                let s = nodes[x.0].value.shape();
                let (b, l, f) = (s[0], s[1], s[2]);
                acc(*x, &mut |g| {
                    for bi in 0..b {
                        add_into(&mut g[(bi * l + step) * f..][..f], &gy[bi * f..][..f]);
                    }
                });
            }
            Op::StackSteps { parts } => {
                let s = node.value.shape();
                let (b, l, f) = (s[0], s[1], s[2]);
                for (st, &p) in parts.iter().enumerate() {
                    acc(p, &mut |g| {
                        for bi in 0..b {
                            add_into(&mut g[bi * f..][..f], &gy[(bi * l + st) * f..][..f]);
                        }
                    });
                }
            }
            Op::SliceCols { x, start } => {
                let n = nodes[x.0].value.shape()[1];
                let (b, len) = (node.value.shape()[0], node.value.shape()[1]);
                acc(*x, &mut |g| {
                    for bi in 0..b {
                        add_into(&mut g[bi * n + start..][..len], &gy[bi * len..][..len]);
                    }
                });
            }
            Op::ConcatLast { a, b } => {
                let p = nodes[a.0].value.shape()[1];
                let q = nodes[b.0].value.shape()[1];
                let rows = node.value.shape()[0];
                acc(*a, &mut |g| {
                    for r in 0..rows {
                        add_into(&mut g[r * p..][..p], &gy[r * (p + q)..][..p]);
                    }
                });
                acc(*b, &mut |g| {
                    for r in 0..rows {
                        add_into(&mut g[r * q..][..q], &gy[r * (p + q) + p..][..q]);
                    }
                });
            }
            Op::MeanLastAxis { x } => {
                let w = *nodes[x.0].value.shape().last().unwrap();
                let scale = T::one() / T::from_usize(w).unwrap();
                acc(*x, &mut |g| {
                    for (k, d) in g.iter_mut().enumerate() {
                        *d = *d + gy[k / w] * scale;
                    }
                });
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let c = nodes[logits.0].value.shape()[1];
                let scale = gy[0] / T::from_usize(labels.len()).unwrap();
                acc(*logits, &mut |g| {
                    for (r, &l) in labels.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == l { T::one() } else { T::zero() };
                            g[r * c + j] = g[r * c + j] + (probs[r * c + j] - onehot) * scale;
                        }
                    }
                });
            }
            Op::SumWeighted { x, weights } => {
                acc(*x, &mut |g| {
                    for (d, &w) in g.iter_mut().zip(weights) {
                        *d = *d + gy[0] * w;
                    }
                });
            }
        }
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows<T: Real>(logits: &[T], c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let s = e.iter().copied().sum::<T>();
        out.extend(e.into_iter().map(|v| v / s));
    }
    out
}
