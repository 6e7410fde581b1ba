//! Dense row-major matrices with reverse-mode automatic differentiation.
//!
//! [`Tensor`] is an immutable value type. Differentiable computations are
//! recorded on a [`Tape`] (define-by-run: a fresh tape per forward pass),
//! which hands out [`Var`] handles and replays local backward rules in
//! reverse order on [`Tape::backward`]. [`Adam`] applies the standard
//! bias-corrected update to a flat list of parameter tensors.

mod adam;
mod tape;

pub use adam::Adam;
pub use tape::{Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {lhs} and {rhs}")]
    DimMismatch {
        op: &'static str,
        lhs: String,
        rhs: String,
    },
    #[error("{op}: expected {expected}, got {got}")]
    BadShape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("{op}: row index {index} out of range for {rows} rows")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        rows: usize,
    },
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense matrix of `f64` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(TensorError::BadShape {
                op: "new",
                expected: format!("{} values for {rows}x{cols}", rows * cols),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![1.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    /// 1x1 tensor holding a single value.
    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    /// 1xN row vector.
    pub fn row(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        for r in rows {
            if r.len() != cols {
                return Err(TensorError::DimMismatch {
                    op: "from_rows",
                    lhs: format!("row of {cols}"),
                    rhs: format!("row of {}", r.len()),
                });
            }
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Value of a 1x1 tensor.
    pub fn value(&self) -> Result<f64> {
        if self.rows == 1 && self.cols == 1 {
            Ok(self.data[0])
        } else {
            Err(TensorError::BadShape {
                op: "value",
                expected: "1x1".into(),
                got: self.shape_str(),
            })
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transposed(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add_into(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::DimMismatch {
            op,
            lhs: a.shape_str(),
            rhs: b.shape_str(),
        });
    }
    Ok(())
}

/// Matrix product, `(m x k) * (k x n) -> (m x n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols != b.rows {
        return Err(TensorError::DimMismatch {
            op: "matmul",
            lhs: a.shape_str(),
            rhs: b.shape_str(),
        });
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a.data[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor {
        rows: m,
        cols: n,
        data: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EwKind {
    Mul,
    Add,
    Sub,
}

pub fn elementwise(a: &Tensor, b: &Tensor, kind: EwKind) -> Result<Tensor> {
    check_same_shape("elementwise", a, b)?;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| match kind {
            EwKind::Mul => x * y,
            EwKind::Add => x + y,
            EwKind::Sub => x - y,
        })
        .collect();
    Ok(Tensor {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activation(x: &Tensor, kind: Activation) -> Result<Tensor> {
    if !x.all_finite() {
        return Err(TensorError::NonFinite { op: "activation" });
    }
    Ok(x.map(|v| match kind {
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => sigmoid(v),
        Activation::Tanh => v.tanh(),
    }))
}

/// Stable softmax over a 1xN row vector (max-subtraction).
pub fn softmax_vec(x: &Tensor) -> Result<Tensor> {
    if x.rows != 1 || x.cols == 0 {
        return Err(TensorError::BadShape {
            op: "softmax_vec",
            expected: "1xN with N >= 1".into(),
            got: x.shape_str(),
        });
    }
    let max = x.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.data.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Tensor {
        rows: 1,
        cols: x.cols,
        data: exps.into_iter().map(|e| e / sum).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    /// Sum of every entry, producing a 1x1 tensor.
    Sum,
    /// Column means over rows, producing a 1xC tensor.
    MeanRows,
}

pub fn reduce(x: &Tensor, kind: Reduce) -> Result<Tensor> {
    if x.is_empty() {
        return Err(TensorError::BadShape {
            op: "reduce",
            expected: "nonempty tensor".into(),
            got: x.shape_str(),
        });
    }
    match kind {
        Reduce::Sum => Ok(Tensor::scalar(x.data.iter().sum())),
        Reduce::MeanRows => {
            let mut out = vec![0.0; x.cols];
            for r in 0..x.rows {
                for (o, &v) in out.iter_mut().zip(x.row_slice(r)) {
                    *o += v;
                }
            }
            let inv = 1.0 / x.rows as f64;
            for o in &mut out {
                *o *= inv;
            }
            Ok(Tensor::row(out))
        }
    }
}

/// Gathers `indices` rows of `table` into a new tensor, in order.
pub fn lookup(table: &Tensor, indices: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(indices.len() * table.cols);
    for &i in indices {
        if i >= table.rows {
            return Err(TensorError::IndexOutOfRange {
                op: "lookup",
                index: i,
                rows: table.rows,
            });
        }
        data.extend_from_slice(table.row_slice(i));
    }
    Ok(Tensor {
        rows: indices.len(),
        cols: table.cols,
        data,
    })
}

/// Stacks parts side by side; all parts must share a row count.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let rows = parts.first().map_or(0, |p| p.rows);
    let mut cols = 0;
    for p in parts {
        if p.rows != rows {
            return Err(TensorError::DimMismatch {
                op: "concat_cols",
                lhs: format!("{rows} rows"),
                rhs: p.shape_str(),
            });
        }
        cols += p.cols;
    }
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for p in parts {
            data.extend_from_slice(p.row_slice(r));
        }
    }
    Ok(Tensor { rows, cols, data })
}
