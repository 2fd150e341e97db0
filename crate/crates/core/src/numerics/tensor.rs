use crate::error::{Error, Result};

use super::sigmoid;

/// Row-major 2-D array of `f64`. Column vectors have shape `(n, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Sigmoid,
    Tanh,
    Square,
    Sqrt,
    Sign,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Max,
}

impl UnaryOp {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::Sigmoid => sigmoid(x),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Square => x * x,
            UnaryOp::Sqrt => x.sqrt(),
            UnaryOp::Sign => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            UnaryOp::Abs => x.abs(),
        }
    }
}

impl BinaryOp {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Max => a.max(b),
        }
    }
}

impl Tensor {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    left: (1, cols),
                    right: (1, r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Matrix-vector product `self · x`; `x` must be a column vector.
    pub fn matvec(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols != 1 || x.rows != self.cols {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                left: self.shape(),
                right: x.shape(),
            });
        }
        let mut out = vec![0.0; self.rows];
        kernels::matvec_acc(&self.data, self.rows, self.cols, &x.data, &mut out);
        Ok(Tensor::vector(out))
    }

    pub fn map(&self, op: UnaryOp) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| op.apply(x)).collect(),
        }
    }

    pub fn zip(&self, op: BinaryOp, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "elementwise",
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| op.apply(a, b))
                .collect(),
        })
    }
}

/// Slice-level kernels used by the model's hot loops. Callers guarantee the
/// lengths; the debug assertions document the contract.
pub mod kernels {
    /// `out += W · x` for row-major `W` of shape `(rows, cols)`.
    #[inline]
    pub fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), rows * cols);
        debug_assert_eq!(x.len(), cols);
        debug_assert_eq!(out.len(), rows);
        for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
            let mut s = 0.0;
            for (a, b) in row.iter().zip(x) {
                s += a * b;
            }
            *o += s;
        }
    }

    /// `out += Wᵀ · d` for row-major `W` of shape `(rows, cols)`.
    #[inline]
    pub fn matvec_t_acc(w: &[f64], rows: usize, cols: usize, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), rows * cols);
        debug_assert_eq!(d.len(), rows);
        debug_assert_eq!(out.len(), cols);
        for (row, &dr) in w.chunks_exact(cols).zip(d) {
            if dr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * dr;
            }
        }
    }

    /// `G += d · xᵀ` (rank-one update), `G` row-major `(d.len(), x.len())`.
    #[inline]
    pub fn outer_acc(g: &mut [f64], d: &[f64], x: &[f64]) {
        debug_assert_eq!(g.len(), d.len() * x.len());
        let cols = x.len();
        for (row, &dr) in g.chunks_exact_mut(cols).zip(d) {
            if dr == 0.0 {
                continue;
            }
            for (gv, xv) in row.iter_mut().zip(x) {
                *gv += dr * xv;
            }
        }
    }

    #[inline]
    pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), y.len());
        for (yv, xv) in y.iter_mut().zip(x) {
            *yv += alpha * xv;
        }
    }
}
