use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

use super::{ParameterStore, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

/// Adam moments for every parameter of one store.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParameterStore<T>, config: AdamConfig) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(config_err!("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(config_err!("Adam betas must lie in [0, 1)"));
        }
        let zeros = |s: &ParameterStore<T>| s.iter().map(|p| vec![T::zero(); p.value.numel()]).collect::<Vec<_>>();
        Ok(AdamState {
            config,
            m: zeros(store),
            v: zeros(store),
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update from the accumulated gradients, which
    /// are zeroed afterwards.
    pub fn step(&mut self, store: &mut ParameterStore<T>) -> Result<()> {
        store.check_grads_finite()?;
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (ob1, ob2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let step = T::from_f64(c.learning_rate / bc1);
        let inv_bc2 = T::from_f64(1.0 / bc2);
        let eps = T::from_f64(c.eps);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + ob1 * g;
                v[i] = b2 * v[i] + ob2 * g * g;
                value[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
            p.value.check_finite(&p.name)?;
        }
        store.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn scalar_store(w: f64) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.register("w", Tensor::from_f64(&[1], &[w]).unwrap()).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut s = scalar_store(1.5);
        let mut adam = AdamState::new(&s, AdamConfig::with_lr(0.1)).unwrap();
        for _ in 0..5 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.value(crate::numerics::ParamId(0)).data(), &[1.5]);
        assert_eq!(adam.steps(), 5);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_learning_rate() {
        let mut s = scalar_store(0.0);
        let mut adam = AdamState::new(&s, AdamConfig::with_lr(0.1)).unwrap();
        s.get_mut(crate::numerics::ParamId(0)).grad.data_mut()[0] = 1.0;
        adam.step(&mut s).unwrap();
        let w = s.value(crate::numerics::ParamId(0)).data()[0];
        assert!((w + 0.1).abs() < 1e-8, "{w}");
        // gradient was consumed
        assert_eq!(s.get(crate::numerics::ParamId(0)).grad.data(), &[0.0]);
    }

    #[test]
    fn rejects_nonpositive_learning_rate() {
        let s = scalar_store(0.0);
        assert!(AdamState::new(&s, AdamConfig::with_lr(0.0)).is_err());
    }
}
