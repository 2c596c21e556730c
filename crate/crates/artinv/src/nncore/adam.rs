//! Adam with bias correction, plus global-norm gradient clipping.

use crate::error::{Error, Result};

use super::Params;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, params: &mut Params, grads: &[f64], lr: f64) -> Result<()> {
        if grads.len() != params.data.len() {
            return Err(Error::Shape(format!(
                "gradient length {} != parameter length {}",
                grads.len(),
                params.data.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient in Adam step".into()));
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for i in 0..grads.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params.data[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
        Ok(())
    }
}

/// Scale gradients down to `max_norm` when their global L2 norm exceeds it.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = Params {
            data: vec![1.0, -2.0, 3.0],
        };
        let mut state = AdamState::new(3);
        state.update(&mut params, &[0.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(params.data, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_signed_lr() {
        // At t=1 the bias-corrected update is -lr * g / (|g| + eps'), which is
        // -lr * sign(g) for |g| far above epsilon.
        for &g in &[0.5f64, -3.0, 40.0] {
            let mut params = Params { data: vec![0.0] };
            let mut state = AdamState::new(1);
            state.update(&mut params, &[g], 1e-3).unwrap();
            let expected = -1e-3 * g.signum();
            assert!(
                (params.data[0] - expected).abs() < 1e-6,
                "g={g}: {} vs {expected}",
                params.data[0]
            );
        }
    }

    #[test]
    fn deterministic_trajectories() {
        let grads = [[0.1, -0.2], [0.05, 0.3], [-0.4, 0.0]];
        let run = || {
            let mut params = Params {
                data: vec![1.0, 1.0],
            };
            let mut state = AdamState::new(2);
            for g in &grads {
                state.update(&mut params, g, 0.01).unwrap();
            }
            params.data
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_errors() {
        let mut params = Params { data: vec![0.0] };
        let mut state = AdamState::new(1);
        assert!(state.update(&mut params, &[f64::NAN], 0.1).is_err());
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut grads = vec![3.0, 4.0];
        let norm = clip_grad_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let new_norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        assert!((new_norm - 1.0).abs() < 1e-12);

        let mut small = vec![0.3, 0.4];
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small, vec![0.3, 0.4]);
    }
}
