use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ParameterSet, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Self::default()
        }
    }
}

/// First/second moment accumulators for one [`ParameterSet`].
#[derive(Debug, Clone)]
pub struct OptimizerState<R: Real = f32> {
    pub config: AdamConfig,
    step: u64,
    moments: IndexMap<String, (Vec<R>, Vec<R>)>,
}

impl<R: Real> OptimizerState<R> {
    pub fn new(params: &ParameterSet<R>, config: AdamConfig) -> Self {
        let moments = params
            .iter()
            .map(|(name, t)| {
                let zeros = vec![R::zero(); t.numel()];
                (name.to_string(), (zeros.clone(), zeros))
            })
            .collect();
        OptimizerState {
            config,
            step: 0,
            moments,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam step over `params`, in parameter order.
///
/// Every parameter must carry a gradient; nothing is modified otherwise.
pub fn adam_update<R: Real>(
    params: &mut ParameterSet<R>,
    state: &mut OptimizerState<R>,
) -> Result<()> {
    for (name, t) in params.iter() {
        let grad = t
            .grad()
            .ok_or_else(|| Error::Contract(format!("parameter '{name}' has no gradient")))?;
        let (m, _) = state
            .moments
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no optimizer state for '{name}'")))?;
        if m.len() != grad.len() {
            return Err(Error::Dimension(format!(
                "optimizer state for '{name}' has {} entries, parameter has {}",
                m.len(),
                grad.len()
            )));
        }
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let correction1 = R::of(1.0 - cfg.beta1.powi(t));
    let correction2 = R::of(1.0 - cfg.beta2.powi(t));
    let (b1, b2) = (R::of(cfg.beta1), R::of(cfg.beta2));
    let (one_b1, one_b2) = (R::of(1.0 - cfg.beta1), R::of(1.0 - cfg.beta2));
    let lr = R::of(cfg.learning_rate);
    let eps = R::of(cfg.epsilon);

    for (name, tensor) in params.iter_mut() {
        let (m, v) = state.moments.get_mut(name).expect("checked above");
        let grad = tensor.grad().expect("checked above").to_vec();
        for (((p, g), m), v) in tensor
            .data_mut()
            .iter_mut()
            .zip(&grad)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = b1 * *m + one_b1 * *g;
            *v = b2 * *v + one_b2 * *g * *g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn scalar_param(value: f64) -> ParameterSet<f64> {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::vector(vec![value]).unwrap()).unwrap();
        p
    }

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut p = scalar_param(1.5);
        let mut s = OptimizerState::new(&p, AdamConfig::default());
        for _ in 0..3 {
            p.get_mut("w").unwrap().set_grad(vec![0.0]).unwrap();
            adam_update(&mut p, &mut s).unwrap();
        }
        assert_eq!(p.get("w").unwrap().data(), &[1.5]);
        assert_eq!(s.step(), 3);
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let mut p = scalar_param(-0.25);
        let mut s = OptimizerState::new(&p, AdamConfig::with_learning_rate(0.0));
        p.get_mut("w").unwrap().set_grad(vec![3.0]).unwrap();
        adam_update(&mut p, &mut s).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[-0.25]);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut p = scalar_param(0.0);
        let mut s = OptimizerState::new(&p, AdamConfig::default());
        let err = adam_update(&mut p, &mut s).unwrap_err();
        assert!(err.to_string().contains("'w'"));
        assert_eq!(s.step(), 0);
    }

    #[test]
    fn matches_hand_stepped_trajectory() {
        // Oracle written out from the update rule in closed form per step.
        let grads = [0.5, -1.0, 2.0, 0.0, -0.3];
        let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let (mut w, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for (i, g) in grads.iter().enumerate() {
            let k = (i + 1) as i32;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(k));
            let v_hat = v / (1.0 - b2.powi(k));
            w -= lr * m_hat / (v_hat.sqrt() + eps);
            expected.push(w);
        }

        let mut p = scalar_param(0.7);
        let mut s = OptimizerState::new(&p, AdamConfig::default());
        for (g, want) in grads.iter().zip(expected) {
            p.get_mut("w").unwrap().set_grad(vec![*g]).unwrap();
            adam_update(&mut p, &mut s).unwrap();
            let got = p.get("w").unwrap().data()[0];
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }
}
