//! Wengert tape: every op appends one node; `backward` walks the nodes in
//! reverse exactly once and accumulates vector-Jacobian products.
//!
//! The operation set is closed: linear, relu/silu/softmax, floored log,
//! elementwise add/sub/mul/scale, sum/mean and last-axis concatenation.

use crate::error::{Error, Result};

use super::tensor::check_shape;
use super::{Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    /// Softmax over the last axis.
    Softmax,
}

#[derive(Debug, Clone)]
enum Op<R> {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Act(Var, Activation),
    LnFloor { x: Var, floor: R },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, R),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node<R> {
    shape: Vec<usize>,
    value: Vec<R>,
    op: Op<R>,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape<R: Real = f32> {
    nodes: Vec<Node<R>>,
}

/// Result of [`Tape::backward`]: one optional buffer per node.
#[derive(Debug)]
pub struct Gradients<R> {
    grads: Vec<Option<Vec<R>>>,
    lens: Vec<usize>,
}

impl<R: Real> Gradients<R> {
    /// Gradient with respect to `var`; zeros when `var` is unreachable from the loss.
    pub fn wrt(&self, var: Var) -> Vec<R> {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => vec![R::zero(); self.lens[var.0]],
        }
    }

    pub fn take(&mut self, var: Var) -> Vec<R> {
        self.grads[var.0]
            .take()
            .unwrap_or_else(|| vec![R::zero(); self.lens[var.0]])
    }
}

fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

fn ensure_finite<R: Real>(what: &str, values: &[R]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "{what} produced a non-finite value"
        )))
    }
}

fn accumulate<R: Real>(slot: &mut Option<Vec<R>>, len: usize, f: impl FnOnce(&mut [R])) {
    let buf = slot.get_or_insert_with(|| vec![R::zero(); len]);
    f(buf);
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<R>, op: Op<R>, tracked: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            tracked,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records `tensor` as a leaf. It is differentiated iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: &Tensor<R>) -> Var {
        self.push(
            tensor.shape().to_vec(),
            tensor.data().to_vec(),
            Op::Leaf,
            tensor.requires_grad(),
        )
    }

    /// Records a non-differentiated input.
    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<R>) -> Result<Var> {
        let numel = check_shape(&shape)?;
        if numel != value.len() {
            return Err(Error::Dimension(format!(
                "constant of shape {shape:?} given {} values",
                value.len()
            )));
        }
        Ok(self.push(shape, value, Op::Leaf, false))
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[R] {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Tensor<R> {
        let node = &self.nodes[v.0];
        Tensor::new(node.shape.clone(), node.value.clone()).expect("tape nodes are well-formed")
    }

    pub fn scalar(&self, v: Var) -> Result<R> {
        match self.nodes[v.0].value.as_slice() {
            [x] => Ok(*x),
            other => Err(Error::Contract(format!(
                "expected a scalar, found {} values",
                other.len()
            ))),
        }
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let shape = &self.nodes[v.0].shape;
        match shape.as_slice() {
            [c] => Ok((1, *c)),
            [r, c] => Ok((*r, *c)),
            _ => Err(Error::Dimension(format!(
                "{what} must be 1-D or 2-D, found shape {shape:?}"
            ))),
        }
    }

    /// `x·W + b` for `x: [n, d_in]`, `W: [d_in, d_out]`, `b: [d_out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, d_in) = self.matrix_dims(x, "linear input x")?;
        let w_shape = self.shape(w).to_vec();
        let [w_in, d_out] = w_shape[..] else {
            return Err(Error::Dimension(format!(
                "linear weight must be 2-D, found shape {w_shape:?}"
            )));
        };
        if w_in != d_in {
            return Err(Error::Dimension(format!(
                "linear: x axis 1 has extent {d_in} but W axis 0 has extent {w_in}"
            )));
        }
        let mut out = match b {
            Some(b) => {
                let b_shape = self.shape(b);
                if b_shape != [d_out] {
                    return Err(Error::Dimension(format!(
                        "linear: b has shape {b_shape:?} but W axis 1 has extent {d_out}"
                    )));
                }
                let bias = self.value(b);
                let mut out = Vec::with_capacity(n * d_out);
                for _ in 0..n {
                    out.extend_from_slice(bias);
                }
                out
            }
            None => vec![R::zero(); n * d_out],
        };
        let beta = if b.is_some() { R::one() } else { R::zero() };
        R::gemm(
            n,
            d_in,
            d_out,
            self.value(x),
            (d_in, 1),
            self.value(w),
            (d_out, 1),
            beta,
            &mut out,
            (d_out, 1),
        );
        ensure_finite("linear", &out)?;
        let tracked = self.tracked(x) || self.tracked(w) || b.is_some_and(|b| self.tracked(b));
        let shape = if self.shape(x).len() == 1 {
            vec![d_out]
        } else {
            vec![n, d_out]
        };
        Ok(self.push(shape, out, Op::Linear { x, w, b }, tracked))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let node = &self.nodes[x.0];
        if node.value.is_empty() {
            return Err(Error::Dimension("activation of an empty tensor".into()));
        }
        let out: Vec<R> = match kind {
            Activation::Relu => node.value.iter().map(|&v| v.max(R::zero())).collect(),
            Activation::Silu => node.value.iter().map(|&v| v * sigmoid(v)).collect(),
            Activation::Softmax => {
                let width = *node.shape.last().expect("non-empty shape");
                let mut out = Vec::with_capacity(node.value.len());
                for row in node.value.chunks(width) {
                    let max = row.iter().copied().fold(R::neg_infinity(), R::max);
                    let start = out.len();
                    let mut total = R::zero();
                    for &v in row {
                        let e = (v - max).exp();
                        total = total + e;
                        out.push(e);
                    }
                    for e in &mut out[start..] {
                        *e = *e / total;
                    }
                }
                out
            }
        };
        ensure_finite("activation", &out)?;
        let shape = node.shape.clone();
        let tracked = node.tracked;
        Ok(self.push(shape, out, Op::Act(x, kind), tracked))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Silu)
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Softmax)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn ln_floor(&mut self, x: Var, floor: R) -> Result<Var> {
        if floor <= R::zero() {
            return Err(Error::Contract("log floor must be positive".into()));
        }
        let node = &self.nodes[x.0];
        let out: Vec<R> = node.value.iter().map(|&v| v.max(floor).ln()).collect();
        ensure_finite("ln", &out)?;
        let (shape, tracked) = (node.shape.clone(), node.tracked);
        Ok(self.push(shape, out, Op::LnFloor { x, floor }, tracked))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(R, R) -> R) -> Result<Var> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if na.shape != nb.shape {
            return Err(Error::Dimension(format!(
                "{name}: shapes {:?} and {:?} differ",
                na.shape, nb.shape
            )));
        }
        let out: Vec<R> = na
            .value
            .iter()
            .zip(&nb.value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        ensure_finite(name, &out)?;
        let shape = na.shape.clone();
        let tracked = na.tracked || nb.tracked;
        let op = match name {
            "add" => Op::Add(a, b),
            "sub" => Op::Sub(a, b),
            _ => Op::Mul(a, b),
        };
        Ok(self.push(shape, out, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, factor: R) -> Result<Var> {
        let node = &self.nodes[x.0];
        let out: Vec<R> = node.value.iter().map(|&v| v * factor).collect();
        ensure_finite("scale", &out)?;
        let (shape, tracked) = (node.shape.clone(), node.tracked);
        Ok(self.push(shape, out, Op::Scale(x, factor), tracked))
    }

    /// Serial left-to-right sum, so results do not depend on scheduling.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let node = &self.nodes[x.0];
        let total = node.value.iter().fold(R::zero(), |acc, &v| acc + v);
        ensure_finite("sum", &[total])?;
        let tracked = node.tracked;
        Ok(self.push(vec![1], vec![total], Op::Sum(x), tracked))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let node = &self.nodes[x.0];
        let total = node.value.iter().fold(R::zero(), |acc, &v| acc + v);
        let mean = total / R::of(node.value.len() as f64);
        ensure_finite("mean", &[mean])?;
        let tracked = node.tracked;
        Ok(self.push(vec![1], vec![mean], Op::Mean(x), tracked))
    }

    /// Concatenates 2-D tensors with equal row counts along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat of zero tensors".into()));
        }
        let mut rows = None;
        let mut widths = Vec::with_capacity(parts.len());
        for (i, &p) in parts.iter().enumerate() {
            let (r, c) = self.matrix_dims(p, "concat operand")?;
            match rows {
                None => rows = Some(r),
                Some(r0) if r0 != r => {
                    return Err(Error::Dimension(format!(
                        "concat: operand {i} has {r} rows on axis 0, operand 0 has {r0}"
                    )))
                }
                _ => {}
            }
            widths.push(c);
        }
        let rows = rows.expect("at least one part");
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.nodes[p.0].value[r * w..(r + 1) * w]);
            }
        }
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(vec![rows, total], out, Op::Concat(parts.to_vec()), tracked))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<R>> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, found shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Option<Vec<R>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![R::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[i].take() else { continue };
            self.propagate(node, &dy, &mut grads, &lens);
            grads[i] = Some(dy);
        }

        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if self.nodes[i].tracked {
                    ensure_finite("backward", g)?;
                }
            }
        }
        Ok(Gradients { grads, lens })
    }

    fn propagate(&self, node: &Node<R>, dy: &[R], grads: &mut [Option<Vec<R>>], lens: &[usize]) {
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (n, d_in) = self.matrix_dims(*x, "x").expect("validated in forward");
                let d_out = self.nodes[w.0].shape[1];
                if self.tracked(*x) {
                    let wv = &self.nodes[w.0].value;
                    accumulate(&mut grads[x.0], lens[x.0], |gx| {
                        // dx = dy · Wᵀ
                        R::gemm(
                            n,
                            d_out,
                            d_in,
                            dy,
                            (d_out, 1),
                            wv,
                            (1, d_out),
                            R::one(),
                            gx,
                            (d_in, 1),
                        );
                    });
                }
                if self.tracked(*w) {
                    let xv = &self.nodes[x.0].value;
                    accumulate(&mut grads[w.0], lens[w.0], |gw| {
                        // dW = xᵀ · dy
                        R::gemm(
                            d_in,
                            n,
                            d_out,
                            xv,
                            (1, d_in),
                            dy,
                            (d_out, 1),
                            R::one(),
                            gw,
                            (d_out, 1),
                        );
                    });
                }
                if let Some(b) = b {
                    if self.tracked(*b) {
                        accumulate(&mut grads[b.0], lens[b.0], |gb| {
                            for row in dy.chunks(d_out) {
                                for (g, &d) in gb.iter_mut().zip(row) {
                                    *g = *g + d;
                                }
                            }
                        });
                    }
                }
            }
            Op::Act(x, kind) => {
                if !self.tracked(*x) {
                    return;
                }
                let xv = &self.nodes[x.0].value;
                let yv = &node.value;
                accumulate(&mut grads[x.0], lens[x.0], |gx| match kind {
                    Activation::Relu => {
                        for ((g, &d), &v) in gx.iter_mut().zip(dy).zip(xv) {
                            if v > R::zero() {
                                *g = *g + d;
                            }
                        }
                    }
                    Activation::Silu => {
                        for ((g, &d), &v) in gx.iter_mut().zip(dy).zip(xv) {
                            let s = sigmoid(v);
                            *g = *g + d * s * (R::one() + v * (R::one() - s));
                        }
                    }
                    Activation::Softmax => {
                        let width = *node.shape.last().expect("non-empty");
                        for ((g_row, d_row), y_row) in gx
                            .chunks_mut(width)
                            .zip(dy.chunks(width))
                            .zip(yv.chunks(width))
                        {
                            let dot = d_row
                                .iter()
                                .zip(y_row)
                                .fold(R::zero(), |acc, (&d, &y)| acc + d * y);
                            for ((g, &d), &y) in g_row.iter_mut().zip(d_row).zip(y_row) {
                                *g = *g + y * (d - dot);
                            }
                        }
                    }
                });
            }
            Op::LnFloor { x, floor } => {
                if !self.tracked(*x) {
                    return;
                }
                let xv = &self.nodes[x.0].value;
                accumulate(&mut grads[x.0], lens[x.0], |gx| {
                    for ((g, &d), &v) in gx.iter_mut().zip(dy).zip(xv) {
                        if v > *floor {
                            *g = *g + d / v;
                        }
                    }
                });
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -R::one()
                } else {
                    R::one()
                };
                if self.tracked(*a) {
                    accumulate(&mut grads[a.0], lens[a.0], |ga| {
                        for (g, &d) in ga.iter_mut().zip(dy) {
                            *g = *g + d;
                        }
                    });
                }
                if self.tracked(*b) {
                    accumulate(&mut grads[b.0], lens[b.0], |gb| {
                        for (g, &d) in gb.iter_mut().zip(dy) {
                            *g = *g + sign * d;
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                for (this, other) in [(*a, *b), (*b, *a)] {
                    if !self.tracked(this) {
                        continue;
                    }
                    let ov = &self.nodes[other.0].value;
                    accumulate(&mut grads[this.0], lens[this.0], |g| {
                        for ((g, &d), &o) in g.iter_mut().zip(dy).zip(ov) {
                            *g = *g + d * o;
                        }
                    });
                }
            }
            Op::Scale(x, factor) => {
                if self.tracked(*x) {
                    accumulate(&mut grads[x.0], lens[x.0], |gx| {
                        for (g, &d) in gx.iter_mut().zip(dy) {
                            *g = *g + d * *factor;
                        }
                    });
                }
            }
            Op::Sum(x) | Op::Mean(x) => {
                if !self.tracked(*x) {
                    return;
                }
                let d = if matches!(node.op, Op::Mean(_)) {
                    dy[0] / R::of(lens[x.0] as f64)
                } else {
                    dy[0]
                };
                accumulate(&mut grads[x.0], lens[x.0], |gx| {
                    for g in gx.iter_mut() {
                        *g = *g + d;
                    }
                });
            }
            Op::Concat(parts) => {
                let widths: Vec<usize> = parts
                    .iter()
                    .map(|p| *self.nodes[p.0].shape.last().expect("non-empty"))
                    .collect();
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (&p, &w) in parts.iter().zip(&widths) {
                    if self.tracked(p) {
                        accumulate(&mut grads[p.0], lens[p.0], |gp| {
                            for (g_row, d_row) in gp.chunks_mut(w).zip(dy.chunks(total)) {
                                for (g, &d) in g_row.iter_mut().zip(&d_row[offset..offset + w]) {
                                    *g = *g + d;
                                }
                            }
                        });
                    }
                    offset += w;
                }
            }
        }
    }
}
