//! Define-by-run computation tape.
//!
//! A tape owns every intermediate [`Tensor`] of one forward pass. Operations
//! append nodes (output value + references to inputs) and return [`Var`]
//! handles; [`Tape::backward`] walks the nodes once in reverse, applying each
//! operation's local derivative. Nodes whose inputs cannot reach a tracked
//! leaf are skipped during the backward pass.

use super::{
    activation, concat_cols, elementwise, lookup, matmul, reduce, softmax_vec, Activation, EwKind,
    Reduce, Result, Tensor, TensorError,
};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul(Var, Var),
    ConcatCols(Vec<Var>),
    Elementwise(Var, Var, EwKind),
    Activation(Var, Activation),
    SoftmaxVec(Var),
    Transpose(Var),
    Reduce(Var, Reduce),
    Lookup(Var, Vec<usize>),
    AddScalar(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a tracked leaf: gradients will be accumulated for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an untracked constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Matmul(a, b), needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let value = concat_cols(&tensors)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), needs))
    }

    pub fn elementwise(&mut self, a: Var, b: Var, kind: EwKind) -> Result<Var> {
        let value = elementwise(self.value(a), self.value(b), kind)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Elementwise(a, b, kind), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, EwKind::Mul)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, EwKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, EwKind::Sub)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let value = activation(self.value(x), kind)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Activation(x, kind), needs))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Tanh)
    }

    pub fn softmax_vec(&mut self, x: Var) -> Result<Var> {
        let value = softmax_vec(self.value(x))?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::SoftmaxVec(x), needs))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transposed();
        let needs = self.needs(x);
        self.push(value, Op::Transpose(x), needs)
    }

    pub fn reduce(&mut self, x: Var, kind: Reduce) -> Result<Var> {
        let value = reduce(self.value(x), kind)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reduce(x, kind), needs))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, Reduce::Sum)
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        self.reduce(x, Reduce::MeanRows)
    }

    pub fn lookup(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let value = lookup(self.value(table), indices)?;
        let needs = self.needs(table);
        Ok(self.push(value, Op::Lookup(table, indices.to_vec()), needs))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x).map(|v| v + c);
        let needs = self.needs(x);
        self.push(value, Op::AddScalar(x), needs)
    }

    /// Backpropagates from a scalar loss through every recorded node.
    ///
    /// Leaves that the loss does not reach get no entry; [`Gradients::get`]
    /// reports zeros for them.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.shape() != (1, 1) {
            return Err(TensorError::BadShape {
                op: "backward",
                expected: "1x1 loss".into(),
                got: loss_value.shape_str(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.apply_backward(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: Var, delta: Tensor) {
        if !self.needs(target) {
            return;
        }
        match &mut grads[target.0] {
            Some(existing) => existing.add_into(&delta),
            slot => *slot = Some(delta),
        }
    }

    fn apply_backward(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                if self.needs(*a) {
                    let bt = self.value(*b).transposed();
                    self.accumulate(grads, *a, matmul(g, &bt)?);
                }
                if self.needs(*b) {
                    let at = self.value(*a).transposed();
                    self.accumulate(grads, *b, matmul(&at, g)?);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.needs(p) {
                        let mut slice = Tensor::zeros(g.rows(), pc);
                        for r in 0..g.rows() {
                            let src = &g.data()[r * g.cols() + offset..r * g.cols() + offset + pc];
                            slice.data_mut()[r * pc..(r + 1) * pc].copy_from_slice(src);
                        }
                        self.accumulate(grads, p, slice);
                    }
                    offset += pc;
                }
            }
            Op::Elementwise(a, b, kind) => match kind {
                EwKind::Mul => {
                    if self.needs(*a) {
                        self.accumulate(grads, *a, elementwise(g, self.value(*b), EwKind::Mul)?);
                    }
                    if self.needs(*b) {
                        self.accumulate(grads, *b, elementwise(g, self.value(*a), EwKind::Mul)?);
                    }
                }
                EwKind::Add => {
                    self.accumulate(grads, *a, g.clone());
                    self.accumulate(grads, *b, g.clone());
                }
                EwKind::Sub => {
                    self.accumulate(grads, *a, g.clone());
                    self.accumulate(grads, *b, g.scale(-1.0));
                }
            },
            Op::Activation(x, kind) => {
                let local = match kind {
                    Activation::Relu => {
                        let input = self.value(*x);
                        let mut d = g.clone();
                        for (dv, &xv) in d.data_mut().iter_mut().zip(input.data()) {
                            if xv <= 0.0 {
                                *dv = 0.0;
                            }
                        }
                        d
                    }
                    Activation::Sigmoid => {
                        let y = &self.nodes[idx].value;
                        let mut d = g.clone();
                        for (dv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                            *dv *= yv * (1.0 - yv);
                        }
                        d
                    }
                    Activation::Tanh => {
                        let y = &self.nodes[idx].value;
                        let mut d = g.clone();
                        for (dv, &yv) in d.data_mut().iter_mut().zip(y.data()) {
                            *dv *= 1.0 - yv * yv;
                        }
                        d
                    }
                };
                self.accumulate(grads, *x, local);
            }
            Op::SoftmaxVec(x) => {
                // dx_i = y_i * (g_i - sum_j g_j y_j)
                let y = &self.nodes[idx].value;
                let dot: f64 = g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                let mut d = Tensor::zeros(1, y.cols());
                for ((dv, &gv), &yv) in d.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *dv = yv * (gv - dot);
                }
                self.accumulate(grads, *x, d);
            }
            Op::Transpose(x) => {
                self.accumulate(grads, *x, g.transposed());
            }
            Op::Reduce(x, kind) => match kind {
                Reduce::Sum => {
                    let input = self.value(*x);
                    let gv = g.value()?;
                    self.accumulate(grads, *x, Tensor::filled(input.rows(), input.cols(), gv));
                }
                Reduce::MeanRows => {
                    let input = self.value(*x);
                    let inv = 1.0 / input.rows() as f64;
                    let mut d = Tensor::zeros(input.rows(), input.cols());
                    for r in 0..input.rows() {
                        for (dv, &gv) in d.data_mut()[r * input.cols()..(r + 1) * input.cols()]
                            .iter_mut()
                            .zip(g.data())
                        {
                            *dv = gv * inv;
                        }
                    }
                    self.accumulate(grads, *x, d);
                }
            },
            Op::Lookup(table, indices) => {
                let t = self.value(*table);
                let mut d = Tensor::zeros(t.rows(), t.cols());
                let cols = t.cols();
                for (pos, &i) in indices.iter().enumerate() {
                    let src = &g.data()[pos * cols..(pos + 1) * cols];
                    for (dv, &gv) in d.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                        *dv += gv;
                    }
                }
                self.accumulate(grads, *table, d);
            }
            Op::AddScalar(x) => {
                self.accumulate(grads, *x, g.clone());
            }
        }
        Ok(())
    }
}

/// Result of a backward pass: one gradient per reached tracked node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or zeros if the loss never reached it.
    pub fn get(&self, v: Var, shape: (usize, usize)) -> Tensor {
        match &self.grads[v.0] {
            Some(t) => t.clone(),
            None => Tensor::zeros(shape.0, shape.1),
        }
    }

    pub fn take(&mut self, v: Var, shape: (usize, usize)) -> Tensor {
        match self.grads[v.0].take() {
            Some(t) => t,
            None => Tensor::zeros(shape.0, shape.1),
        }
    }
}
