use super::{Float, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Float> AdamState<T> {
    pub fn new() -> Self {
        Self { step: 0, m: Vec::new(), v: Vec::new() }
    }
}

/// One bias-corrected Adam update, applied in place. Moments are created
/// zero-filled on the first call.
pub fn adam_step<T: Float>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!("adam: {} params but {} grads", params.len(), grads.len())));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!("adam: param {i} is {:?}, grad is {:?}", p.shape(), g.shape())));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        state.v = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
    }
    let moments_match = state.m.len() == params.len()
        && params.iter().zip(&state.m).zip(&state.v).all(|((p, m), v)| m.len() == p.len() && v.len() == p.len());
    if !moments_match {
        return Err(Error::Shape("adam: optimizer state does not match parameter shapes".into()));
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let (one, eps, lr) = (T::one(), T::lit(config.eps), T::lit(config.lr));
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight-line scalar Adam used as the reference.
    fn scalar_adam(mut w: f64, grads: &[f64], c: &AdamConfig) -> f64 {
        let (mut m, mut v) = (0.0, 0.0);
        for (i, &g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = c.beta1 * m + (1.0 - c.beta1) * g;
            v = c.beta2 * v + (1.0 - c.beta2) * g * g;
            let mh = m / (1.0 - c.beta1.powi(t));
            let vh = v / (1.0 - c.beta2.powi(t));
            w -= c.lr * mh / (vh.sqrt() + c.eps);
        }
        w
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let cfg = AdamConfig::default();
        let mut params = vec![Tensor::<f64>::full(&[3], 0.5)];
        let grads = vec![Tensor::full(&[3], 1.0)];
        let mut state = AdamState::new();
        adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        assert_eq!(state.step, 1);
        for &w in params[0].data() {
            // m_hat = v_hat = 1, so the step is lr / (1 + eps)
            assert!((0.5 - w - 0.001).abs() < 1e-10, "{w}");
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![Tensor::<f32>::new(&[2], vec![1.0, -2.0]).unwrap()];
        let grads = vec![Tensor::zeros(&[2])];
        let mut state = AdamState::new();
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut params = vec![Tensor::<f64>::full(&[1], 0.3)];
        let mut state = AdamState::new();
        for _ in 0..2 {
            adam_step(&mut params, &[Tensor::full(&[1], 0.7)], &mut state, &cfg).unwrap();
        }
        let expect = scalar_adam(0.3, &[0.7, 0.7], &cfg);
        assert!((params[0].data()[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut params = vec![Tensor::<f32>::zeros(&[2])];
        let mut state = AdamState::new();
        let err = adam_step(&mut params, &[Tensor::zeros(&[3])], &mut state, &AdamConfig::default());
        assert!(err.is_err());
        adam_step(&mut params, &[Tensor::zeros(&[2])], &mut state, &AdamConfig::default()).unwrap();
        let mut other = vec![Tensor::<f32>::zeros(&[5])];
        assert!(adam_step(&mut other, &[Tensor::zeros(&[5])], &mut state, &AdamConfig::default()).is_err());
    }
}
