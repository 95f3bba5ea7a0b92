//! Adam optimizer over a flat parameter vector.

use super::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Adam<F> {
    m: Vec<F>,
    v: Vec<F>,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

impl<F: Scalar> Adam<F> {
    pub fn new(n_params: usize) -> Self {
        Adam {
            m: vec![F::ZERO; n_params],
            v: vec![F::ZERO; n_params],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [F], grads: &[F], lr: f64) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let b1 = F::from_f64(self.beta1);
        let b2 = F::from_f64(self.beta2);
        let one_m_b1 = F::from_f64(1.0 - self.beta1);
        let one_m_b2 = F::from_f64(1.0 - self.beta2);
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        let step_size = F::from_f64(lr / bias1);
        let bias2_sqrt = F::from_f64(1.0 / bias2.sqrt());
        let eps = F::from_f64(self.eps);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + one_m_b1 * g;
            self.v[i] = b2 * self.v[i] + one_m_b2 * g * g;
            let denom = (self.v[i]).sqrt() * bias2_sqrt + eps;
            params[i] = params[i] - step_size * self.m[i] / denom;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut adam = Adam::<f64>::new(3);
        let mut params = vec![1.0, -2.0, 0.5];
        adam.step(&mut params, &[0.0, 0.0, 0.0], 1e-3);
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn quadratic_converges() {
        // minimize (x - 3)^2
        let mut adam = Adam::<f64>::new(1);
        let mut params = vec![0.0];
        for _ in 0..4000 {
            let g = 2.0 * (params[0] - 3.0);
            adam.step(&mut params, &[g], 0.01);
        }
        assert!((params[0] - 3.0).abs() < 1e-3, "{}", params[0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // Adam's bias-corrected first step has magnitude ~lr regardless of
        // gradient scale.
        let mut adam = Adam::<f64>::new(1);
        let mut params = vec![0.0];
        adam.step(&mut params, &[1234.5], 0.01);
        assert!((params[0] + 0.01).abs() < 1e-6, "{}", params[0]);
    }
}
