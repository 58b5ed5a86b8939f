//! Dense `f64` tensors.
//!
//! A [`Tensor`] is a flat buffer with a shape. Every constructor and every
//! public operation checks that the buffer length matches the shape and that
//! all elements are finite; a NaN or infinity is reported as an error rather
//! than carried forward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Right-hand side of [`combine`]: another tensor or a broadcast scalar.
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Tensor(&'a Tensor),
    Scalar(f64),
}

impl<'a> From<&'a Tensor> for Operand<'a> {
    fn from(t: &'a Tensor) -> Self {
        Operand::Tensor(t)
    }
}

impl From<f64> for Operand<'_> {
    fn from(s: f64) -> Self {
        Operand::Scalar(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CombineOp {
    Add,
    Sub,
    Mul,
    Div,
    /// `a + scale * b`
    ScaleAdd(f64),
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::Shape(format!("dimensions must be positive, got {shape:?}")));
    }
    Ok(shape.iter().product())
}

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Numerical(format!("element {i} is not finite ({})", data[i]))),
        None => Ok(()),
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Tensor { shape, data })
    }

    /// One-dimensional tensor over `data`.
    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        check_finite(&[value])?;
        t.data.fill(value);
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Mutable access for in-place kernels inside the crate. Callers are
    /// responsible for re-establishing finiteness (see [`Tensor::ensure_finite`]).
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn ensure_finite(&self) -> Result<()> {
        check_finite(&self.data)
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub fn l2_norm(&self) -> Result<f64> {
        l2_norm(self)
    }

    /// Reinterprets the buffer with a new shape of equal element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if len != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let data: Vec<f64> = self.data.iter().map(|&x| f(x)).collect();
        check_finite(&data)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }
}

/// Euclidean norm over every element of `t`.
pub fn l2_norm(t: &Tensor) -> Result<f64> {
    check_finite(&t.data)?;
    Ok(norm_of(&t.data))
}

/// Norm of a raw slice. The caller guarantees finiteness.
pub(crate) fn norm_of(data: &[f64]) -> f64 {
    // Scale by the largest magnitude so squares cannot overflow.
    let scale = data.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    if !(1e-150..=1e150).contains(&scale) {
        let sum: f64 = data.iter().map(|x| (x / scale) * (x / scale)).sum();
        return scale * sum.sqrt();
    }
    data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Elementwise `a op b`, where `b` is a tensor of the same shape or a scalar.
pub fn combine<'a>(a: &Tensor, b: impl Into<Operand<'a>>, op: CombineOp) -> Result<Tensor> {
    let b = b.into();
    if let Operand::Tensor(bt) = b {
        if !a.same_shape(bt) {
            return Err(Error::Shape(format!("{:?} vs {:?}", a.shape, bt.shape)));
        }
    }
    let rhs = |i: usize| match b {
        Operand::Tensor(t) => t.data[i],
        Operand::Scalar(s) => s,
    };
    if op == CombineOp::Div {
        if let Some(i) = (0..a.len()).find(|&i| rhs(i) == 0.0) {
            return Err(Error::Numerical(format!("division by zero at element {i}")));
        }
    }
    let data: Vec<f64> = a
        .data
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let y = rhs(i);
            match op {
                CombineOp::Add => x + y,
                CombineOp::Sub => x - y,
                CombineOp::Mul => x * y,
                CombineOp::Div => x / y,
                CombineOp::ScaleAdd(s) => x + s * y,
            }
        })
        .collect();
    check_finite(&data)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data,
    })
}
