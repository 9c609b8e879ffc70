//! Adam with bias correction.

use crate::error::{bail, Result};
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    /// Applies one update from the gradients held in `store`, then zeroes
    /// them. Nothing is modified when any gradient is non-finite.
    pub fn step(&self, store: &mut ParamStore) -> Result<()> {
        for id in store.ids() {
            if !store.grad(id).is_finite() {
                bail!(Numeric, "non-finite gradient for parameter {:?}", store.name(id));
            }
        }
        store.step_count += 1;
        let t = store.step_count as f64;
        let correct1 = 1.0 - libm::pow(self.beta1, t);
        let correct2 = 1.0 - libm::pow(self.beta2, t);
        let slots = store
            .values
            .iter_mut()
            .zip(&store.grads)
            .zip(store.adam_m.iter_mut().zip(store.adam_v.iter_mut()));
        for ((value, grad), (m, v)) in slots {
            let cells = value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((w, g), (m, v)) in cells {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / correct1;
                let v_hat = *v / correct2;
                *w -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            }
        }
        store.zero_grads();
        Ok(())
    }
}
