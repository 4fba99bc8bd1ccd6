use crate::network::Gradients;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer state: first/second moments mirroring the parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Gradients<T>,
    pub v: Gradients<T>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[&[T]]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.len()]).collect::<Vec<_>>();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One bias-corrected update of every parameter tensor.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &Gradients<T>) {
        assert_eq!(params.len(), self.m.len(), "parameter list does not match optimizer state");
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let correction1 = 1.0 - beta1.powi(self.t as i32);
        let correction2 = 1.0 - beta2.powi(self.t as i32);
        let (b1, b2) = (T::lit(beta1), T::lit(beta2));
        let (one_minus_b1, one_minus_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let (c1, c2) = (T::lit(correction1), T::lit(correction2));
        let (lr, eps) = (T::lit(learning_rate), T::lit(eps));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((pi, &gi), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + one_minus_b1 * gi;
                *vi = b2 * *vi + one_minus_b2 * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi = *pi - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_alone() {
        let mut p = vec![0.5f64, -2.0];
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        adam.step(&mut [&mut p], &vec![vec![0.0, 0.0]]);
        assert_eq!(p, vec![0.5, -2.0]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut p = vec![0.0f64];
        let mut adam = Adam::new(AdamConfig::default(), &[&p]);
        adam.step(&mut [&mut p], &vec![vec![1.0]]);
        let expected = -1e-4 * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{}", p[0]);
    }

    #[test]
    fn identical_states_give_identical_steps() {
        let grads = vec![vec![0.3f64, -0.7, 2.0]];
        let mut a = vec![1.0f64, 2.0, 3.0];
        let mut b = a.clone();
        let mut sa = Adam::new(AdamConfig::default(), &[&a]);
        let mut sb = sa.clone();
        for _ in 0..3 {
            sa.step(&mut [&mut a], &grads);
            sb.step(&mut [&mut b], &grads);
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }
}
