use crate::error::{NetError, NetResult};
use crate::real::Real;

pub const MAX_TENSOR_RANK: usize = 4;

/// Dense row-major tensor with an optional gradient of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R: Real> {
    pub shape: Vec<usize>,
    pub data: Vec<R>,
    pub grad: Option<Vec<R>>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: &[usize], data: Vec<R>) -> NetResult<Self> {
        if shape.len() > MAX_TENSOR_RANK {
            return Err(NetError::Shape(format!("rank {} exceeds {MAX_TENSOR_RANK}", shape.len())));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NetError::Shape(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(shape, vec![R::zero(); shape.iter().product()]).expect("rank checked by caller")
    }

    pub fn scalar(v: R) -> Self {
        Self::new(&[1], vec![v]).unwrap()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    /// Rows and columns when viewed as a matrix over the first axis.
    pub fn as_matrix(&self) -> (usize, usize) {
        let rows = self.shape.first().copied().unwrap_or(1);
        (rows, self.data.len() / rows.max(1))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| S::of(v.f64())).collect(),
            grad: self.grad.as_ref().map(|g| g.iter().map(|v| S::of(v.f64())).collect()),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.f64()).collect()
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> NetResult<Self> {
        Self::new(shape, data.iter().map(|v| R::of(*v)).collect())
    }
}
