use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 1024,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), NumericsError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size >= 1;
        if ok {
            Ok(())
        } else {
            Err(NumericsError::Config(format!("{self:?}")))
        }
    }
}

/// One bias-corrected Adam update over every tensor in `store`.
///
/// `step` is 1-based. Gradients are checked for finiteness before anything
/// is written, and zeroed afterwards.
pub fn adam_step(store: &mut ParamStore, config: &OptimizerConfig, step: u64) -> Result<(), NumericsError> {
    for t in store.tensors() {
        if t.grad.iter().any(|g| !g.is_finite()) {
            return Err(NumericsError::NonFinite {
                what: "gradient",
                param: t.name.clone(),
            });
        }
    }
    let step = step.max(1) as i32;
    let c1 = 1.0 - config.beta1.powi(step);
    let c2 = 1.0 - config.beta2.powi(step);
    let (b1, b2, lr, eps) = (config.beta1, config.beta2, config.learning_rate, config.epsilon);
    for t in store.tensors_mut() {
        for i in 0..t.values.len() {
            let g = t.grad[i];
            let m = b1 * t.moment1[i] + (1.0 - b1) * g;
            let v = b2 * t.moment2[i] + (1.0 - b2) * g * g;
            t.moment1[i] = m;
            t.moment2[i] = v;
            t.values[i] -= lr * (m / c1) / ((v / c2).sqrt() + eps);
            t.grad[i] = 0.0;
        }
    }
    store.check_finite()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamTensor;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let mut t = ParamTensor::zeros("theta", vec![1]);
        t.values[0] = value;
        s.add(t);
        s
    }

    #[test]
    fn zero_gradient_leaves_values_and_decays_moments() {
        let mut s = single(1.5);
        {
            let t = &mut s.tensors_mut()[0];
            t.moment1[0] = 0.2;
            t.moment2[0] = 0.04;
        }
        let cfg = OptimizerConfig::default();
        let before = s.tensors()[0].values[0];
        adam_step(&mut s, &cfg, 1).unwrap();
        let t = &s.tensors()[0];
        assert!((t.moment1[0] - 0.18).abs() < 1e-15);
        assert!((t.moment2[0] - 0.04 * 0.999).abs() < 1e-15);
        // stale momentum still moves the value; a truly fresh state does not
        let mut fresh = single(1.5);
        adam_step(&mut fresh, &cfg, 1).unwrap();
        assert_eq!(fresh.tensors()[0].values[0], 1.5);
        assert!(t.values[0] < before);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        let cfg = OptimizerConfig { learning_rate: 1e-3, ..Default::default() };
        for g in [0.5, -3.0, 1e-2] {
            let mut s = single(0.0);
            s.tensors_mut()[0].grad[0] = g;
            adam_step(&mut s, &cfg, 1).unwrap();
            // closed form: m_hat = g, v_hat = g^2
            let expected = -cfg.learning_rate * g / (g.abs() + cfg.epsilon);
            assert!((s.tensors()[0].values[0] - expected).abs() < 1e-18);
            assert!(s.tensors()[0].grad[0] == 0.0);
        }
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let cfg = OptimizerConfig { learning_rate: 1e-2, ..Default::default() };
        let mut s = single(0.0);
        for step in 1..=100 {
            s.tensors_mut()[0].grad[0] = -0.7;
            adam_step(&mut s, &cfg, step).unwrap();
        }
        assert!(s.tensors()[0].values[0] > 0.5);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut s = single(0.0);
        s.tensors_mut()[0].grad[0] = f64::NAN;
        match adam_step(&mut s, &OptimizerConfig::default(), 1) {
            Err(NumericsError::NonFinite { param, .. }) => assert_eq!(param, "theta"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.tensors()[0].values[0], 0.0);
    }
}
