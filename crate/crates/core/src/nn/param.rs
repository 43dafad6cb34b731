use super::real::Real;
use super::tensor::Tensor;

/// A trainable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub m1: Tensor<T>,
    pub m2: Tensor<T>,
    pub step_count: u64,
    /// Frozen parameters keep receiving gradients but are skipped by the optimizer.
    pub frozen: bool,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Self {
            name: name.into(),
            grad: Tensor::zeros(&shape),
            m1: Tensor::zeros(&shape),
            m2: Tensor::zeros(&shape),
            value,
            step_count: 0,
            frozen: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}
