//! Dense row-major tensor of `f64` values and the pure forward math used
//! throughout the pipeline.
//!
//! Scalars are rank-0 tensors (empty shape, one element). Every operation
//! returns an error on shape disagreement rather than broadcasting; the
//! pipeline never needs broadcast semantics.

use crate::error::{Error, Result};

/// Dense shaped array of 64-bit floats, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, checking that the shape product equals the data length.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::contract(format!(
                "tensor shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    /// Rank-0 scalar.
    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    /// Rank-1 vector.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Rank-2 matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Value of a rank-0 tensor.
    pub fn scalar_value(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::contract(format!(
                "expected scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the flattened data.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// In-place `self += scale * other`. Shapes must agree.
    pub fn axpy(&mut self, scale: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "axpy",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
        Ok(())
    }
}

fn require_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    Ok(())
}

fn require_rank1(op: &'static str, t: &Tensor) -> Result<()> {
    if t.rank() != 1 {
        return Err(Error::ShapeMismatch {
            op,
            lhs: t.shape.to_vec(),
            rhs: vec![0],
        });
    }
    Ok(())
}

/// Elementwise sum. Shapes must agree.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_same_shape("add", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// Elementwise difference `a - b`. Shapes must agree.
pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_same_shape("sub", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// Elementwise (channel-wise) product. Shapes must agree.
pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_same_shape("hadamard", a, b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}

/// Multiply every element by a constant.
pub fn scale(a: &Tensor, c: f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|x| c * x).collect(),
    }
}

/// Add a constant to every element.
pub fn add_const(a: &Tensor, c: f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|x| x + c).collect(),
    }
}

/// Matrix product of two rank-2 tensors `[m×k] · [k×n] -> [m×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let aip = a.data[i * k + p];
            for j in 0..n {
                data[i * n + j] += aip * b.data[p * n + j];
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data,
    })
}

/// Matrix-vector product `[m×k] · [k] -> [m]`.
pub fn matvec(a: &Tensor, x: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || x.rank() != 1 || a.shape[1] != x.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matvec",
            lhs: a.shape.clone(),
            rhs: x.shape.clone(),
        });
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let mut data = vec![0.0; m];
    for (row, out) in a.data.chunks_exact(k).zip(data.iter_mut()) {
        *out = row.iter().zip(x.data.iter()).map(|(&aij, &xj)| aij * xj).sum();
    }
    Ok(Tensor {
        shape: vec![m],
        data,
    })
}

/// Transposed matrix-vector product `A^T · y` for `A: [m×k]`, `y: [m]` -> `[k]`.
pub fn matvec_t(a: &Tensor, y: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || y.rank() != 1 || a.shape[0] != y.shape[0] {
        return Err(Error::ShapeMismatch {
            op: "matvec_t",
            lhs: a.shape.clone(),
            rhs: y.shape.clone(),
        });
    }
    let k = a.shape[1];
    let mut data = vec![0.0; k];
    for (row, &yi) in a.data.chunks_exact(k).zip(y.data.iter()) {
        for (acc, &aij) in data.iter_mut().zip(row) {
            *acc += aij * yi;
        }
    }
    Ok(Tensor {
        shape: vec![k],
        data,
    })
}

/// Outer product `u ⊗ v -> [len(u)×len(v)]`.
pub fn outer(u: &Tensor, v: &Tensor) -> Result<Tensor> {
    require_rank1("outer", u)?;
    require_rank1("outer", v)?;
    let (m, n) = (u.numel(), v.numel());
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            data[i * n + j] = u.data[i] * v.data[j];
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data,
    })
}

/// Transpose of a rank-2 tensor.
pub fn transpose(a: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "transpose",
            lhs: a.shape.clone(),
            rhs: vec![0, 0],
        });
    }
    let (m, n) = (a.shape[0], a.shape[1]);
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            data[j * m + i] = a.data[i * n + j];
        }
    }
    Ok(Tensor {
        shape: vec![n, m],
        data,
    })
}

/// Concatenation of two rank-1 tensors.
pub fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_rank1("concat", a)?;
    require_rank1("concat", b)?;
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Ok(Tensor::vector(data))
}

/// Numerically stable logistic function.
///
/// For `x >= 0` uses `1/(1+e^-x)`, otherwise `e^x/(1+e^x)`, so neither branch
/// can overflow. Output is strictly inside (0,1) for |x| <= ~745; beyond that
/// the underflowed side rounds to exactly 0 or 1.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise stable sigmoid.
pub fn sigmoid(a: &Tensor) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| sigmoid_scalar(x)).collect(),
    }
}

/// Elementwise `max(0, x)`.
pub fn relu(a: &Tensor) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect(),
    }
}

/// Max-subtracted softmax over a rank-1 tensor.
pub fn softmax(v: &Tensor) -> Result<Tensor> {
    require_rank1("softmax", v)?;
    if v.numel() == 0 {
        return Err(Error::contract("softmax of empty vector"));
    }
    let max = v.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.data.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(Tensor::vector(exps.iter().map(|e| e / sum).collect()))
}

/// `log(sum_i exp(v_i))` computed with max subtraction; scalar output.
pub fn log_sum_exp(v: &Tensor) -> Result<f64> {
    require_rank1("log_sum_exp", v)?;
    if v.numel() == 0 {
        return Err(Error::contract("log_sum_exp of empty vector"));
    }
    let max = v.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.data.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Entry `v[idx]` of a rank-1 tensor.
pub fn pick(v: &Tensor, idx: usize) -> Result<f64> {
    require_rank1("pick", v)?;
    if idx >= v.numel() {
        return Err(Error::contract(format!(
            "pick index {} out of range for length {}",
            idx,
            v.numel()
        )));
    }
    Ok(v.data[idx])
}

/// Sum of all entries.
pub fn sum_all(v: &Tensor) -> f64 {
    v.data.iter().sum()
}
