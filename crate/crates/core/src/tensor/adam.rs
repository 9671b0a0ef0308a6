use crate::{Error, Result};

/// Bias-corrected Adam moments for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            step_count: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        let n = self.first_moment.len();
        if params.len() != n || grads.len() != n || self.second_moment.len() != n {
            return Err(Error::dim(
                "adam step",
                &[n, n],
                &[params.len(), grads.len()],
            ));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..n {
            let g = grads[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3, 0.001);
        let mut p = vec![1.0, -2.0, 0.5];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = AdamState::new(1, 0.001);
        let mut p = vec![0.0];
        s.step(&mut p, &[0.1]).unwrap();
        let expected = -0.001 * 0.1 / (0.1 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 0.001).abs() < 1e-9);

        let mut s = AdamState::new(1, 0.001);
        let mut q = vec![0.0];
        s.step(&mut q, &[-0.1]).unwrap();
        assert_eq!(q[0], -p[0]);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut s = AdamState::new(2, 0.001);
        let mut p = vec![0.0; 3];
        assert!(matches!(s.step(&mut p, &[0.0; 3]), Err(Error::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn fresh_state_zero_gradient_is_fixed_point(p in prop::collection::vec(-10.0f64..10.0, 1..20), steps in 1usize..5) {
            let mut s = AdamState::new(p.len(), 0.01);
            let mut q = p.clone();
            for _ in 0..steps {
                s.step(&mut q, &vec![0.0; p.len()]).unwrap();
            }
            prop_assert_eq!(q, p);
        }
    }
}
