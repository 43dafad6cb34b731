use serde::{Deserialize, Serialize};

use super::param::Parameter;
use super::real::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every non-frozen parameter, then
/// zeroes all gradients. Nothing is updated if any gradient is non-finite.
pub fn adam_step<T: Real>(params: &mut [&mut Parameter<T>], cfg: &AdamConfig) -> Result<()> {
    if let Some(p) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(Error::NonFiniteGradient(p.name.clone()));
    }
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one, lr, eps) = (T::one(), T::lit(cfg.learning_rate), T::lit(cfg.epsilon));
    for p in params.iter_mut() {
        if p.frozen {
            p.zero_grad();
            continue;
        }
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        let Parameter { value, grad, m1, m2, .. } = &mut **p;
        for (((w, g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut().iter_mut())
            .zip(m1.data_mut().iter_mut())
            .zip(m2.data_mut().iter_mut())
        {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            *g = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar(v: f64) -> Parameter<f64> {
        Parameter::new("w", Tensor::new(vec![1], vec![v]).unwrap())
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut p = scalar(0.7);
        adam_step(&mut [&mut p], &AdamConfig::default()).unwrap();
        assert_eq!(p.value.data()[0], 0.7);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 → Δ = lr / (1 + ε).
        let mut p = scalar(0.0);
        p.grad.data_mut()[0] = 1.0;
        let cfg = AdamConfig::default();
        adam_step(&mut [&mut p], &cfg).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn identical_parameters_identical_trajectories() {
        let (mut a, mut b) = (scalar(1.0), scalar(1.0));
        for k in 0..10 {
            let g = (k as f64).sin();
            a.grad.data_mut()[0] = g;
            b.grad.data_mut()[0] = g;
            adam_step(&mut [&mut a, &mut b], &AdamConfig::default()).unwrap();
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = scalar(0.0);
        let mut q = Parameter::new("conv3.weight", Tensor::new(vec![1], vec![0.0]).unwrap());
        q.grad.data_mut()[0] = f64::NAN;
        let err = adam_step(&mut [&mut p, &mut q], &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("conv3.weight"));
        assert_eq!(p.step_count, 0);
    }

    #[test]
    fn frozen_parameter_is_not_updated() {
        let mut p = scalar(0.5);
        p.frozen = true;
        p.grad.data_mut()[0] = 3.0;
        adam_step(&mut [&mut p], &AdamConfig::default()).unwrap();
        assert_eq!(p.value.data()[0], 0.5);
        assert_eq!(p.grad.data()[0], 0.0);
    }
}
