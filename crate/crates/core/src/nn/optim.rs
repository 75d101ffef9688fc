use alloc::string::ToString;
use alloc::vec::Vec;

use super::{NnError, ParamStore, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with moments held in `f64`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
}

impl Adam {
    pub fn new<T: Scalar>(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, t)| alloc::vec![0.0; t.len()])
                .collect()
        };
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// One update. Every gradient is checked before any weight changes.
    pub fn step<T: Scalar>(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &[Tensor<T>],
    ) -> Result<(), NnError> {
        if grads.len() != store.len() || self.m.len() != store.len() {
            return Err(NnError::GradientCount(grads.len(), store.len()));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.dims() != store.tensor(i).dims() {
                return Err(NnError::ShapeMismatch {
                    op: "adam",
                    left: store.tensor(i).dims(),
                    right: g.dims(),
                });
            }
            if !g.all_finite() {
                return Err(NnError::NonFiniteGradient(store.name(i).to_string()));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - libm::pow(beta1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(beta2, f64::from(self.t));
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = store.tensor_mut(i).data_mut();
            for (j, &gv) in g.data().iter().enumerate() {
                let gv = gv.to_f64();
                m[j] = beta1 * m[j] + (1.0 - beta1) * gv;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gv * gv;
                let update = lr * (m[j] / c1) / (libm::sqrt(v[j] / c2) + eps);
                w[j] = T::from_f64(w[j].to_f64() - update);
            }
        }
        Ok(())
    }
}
