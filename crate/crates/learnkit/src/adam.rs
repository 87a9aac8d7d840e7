use crate::error::{LearnError, Result};
use crate::real::Real;

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

/// Adam with bias-corrected moment estimates over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<R: Real = f32> {
    pub config: AdamConfig,
    m: Vec<R>,
    v: Vec<R>,
    t: u64,
}

impl<R: Real> Adam<R> {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self { config, m: vec![R::ZERO; n_params], v: vec![R::ZERO; n_params], t: 0 }
    }

    pub fn from_state(config: AdamConfig, m: Vec<R>, v: Vec<R>, t: u64) -> Result<Self> {
        if m.len() != v.len() {
            return Err(LearnError::DimMismatch { context: "adam moments", expected: m.len(), got: v.len() });
        }
        Ok(Self { config, m, v, t })
    }

    pub fn first_moment(&self) -> &[R] {
        &self.m
    }

    pub fn second_moment(&self) -> &[R] {
        &self.v
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update in place. Rejects non-finite gradients before
    /// touching any state.
    pub fn step(&mut self, params: &mut [R], grads: &[R]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(LearnError::DimMismatch { context: "adam params", expected: self.m.len(), got: params.len() });
        }
        if grads.len() != params.len() {
            return Err(LearnError::DimMismatch { context: "adam grads", expected: params.len(), got: grads.len() });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(LearnError::NonFinite("gradient"));
        }
        self.t += 1;
        let c = &self.config;
        let b1 = R::from_f64(c.beta1);
        let b2 = R::from_f64(c.beta2);
        let one_m_b1 = R::from_f64(1.0 - c.beta1);
        let one_m_b2 = R::from_f64(1.0 - c.beta2);
        let bc1 = R::from_f64(1.0 - c.beta1.powi(self.t.min(i32::MAX as u64) as i32));
        let bc2 = R::from_f64(1.0 - c.beta2.powi(self.t.min(i32::MAX as u64) as i32));
        let lr = R::from_f64(c.lr);
        let eps = R::from_f64(c.eps);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + one_m_b1 * g;
            self.v[i] = b2 * self.v[i] + one_m_b2 * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut adam = Adam::<f64>::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut p, &[1.0, 1.0, 1.0]).unwrap();
        let m_before = adam.first_moment().to_vec();
        let v_before = adam.second_moment().to_vec();
        let p_before = p.clone();
        // After the first step the bias-corrected moment is nonzero, so a zero
        // gradient still moves params; start fresh to check the pure case.
        let mut fresh = Adam::<f64>::new(AdamConfig::default(), 3);
        let mut q = p_before.clone();
        fresh.step(&mut q, &[0.0; 3]).unwrap();
        assert_eq!(q, p_before);
        adam.step(&mut p, &[0.0; 3]).unwrap();
        for i in 0..3 {
            assert_eq!(adam.first_moment()[i], 0.9 * m_before[i]);
            assert_eq!(adam.second_moment()[i], 0.999 * v_before[i]);
        }
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // m_hat = g, v_hat = g^2 so the step is lr * g / (|g| + eps).
        let cfg = AdamConfig { lr: 0.01, ..Default::default() };
        for g in [0.3, -4.0, 1e-3] {
            let mut adam = Adam::<f64>::new(cfg, 1);
            let mut p = [0.0];
            adam.step(&mut p, &[g]).unwrap();
            let expected = -cfg.lr * g / (g.abs() + cfg.eps);
            assert!((p[0] - expected).abs() <= 1e-15, "g={g}: {} vs {expected}", p[0]);
            assert!((p[0].abs() - cfg.lr).abs() < 1e-7);
        }
    }

    #[test]
    fn identical_calls_identical_results() {
        let run = || {
            let mut adam = Adam::<f32>::new(AdamConfig::default(), 2);
            let mut p = vec![0.1f32, 0.2];
            for k in 0..5 {
                adam.step(&mut p, &[k as f32 * 0.1, -0.3]).unwrap();
            }
            (p, adam)
        };
        let (p1, a1) = run();
        let (p2, a2) = run();
        assert_eq!(p1, p2);
        assert_eq!(a1, a2);
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut adam = Adam::<f32>::new(AdamConfig::default(), 2);
        let mut p = vec![1.0f32, 1.0];
        assert!(matches!(adam.step(&mut p, &[f32::NAN, 0.0]), Err(LearnError::NonFinite(_))));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(adam.steps(), 0);
    }
}
