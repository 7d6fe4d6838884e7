use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Grads, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.98, eps: 1e-9 }
    }
}

/// Bias-corrected Adam with per-parameter moment accumulators.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Grads,
    v: Grads,
    k: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        Adam {
            config,
            m: Grads::zeros_like(params),
            v: Grads::zeros_like(params),
            k: 0,
        }
    }

    pub fn iteration(&self) -> u64 {
        self.k
    }

    /// Applies one update. Fails before touching anything if a gradient is
    /// non-finite or shaped unlike its parameter.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Grads, rate: f64) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::shape("adam_step", format!("{} grads for {} params", grads.len(), params.len())));
        }
        for (id, g) in grads.iter() {
            let p = params.get(id);
            if !p.same_shape(g) {
                return Err(Error::shape("adam_step", format!("gradient of `{}`", params.name(id))));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{}`", params.name(id))));
            }
        }
        self.k += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.k as i32);
        let c2 = 1.0 - beta2.powi(self.k as i32);
        for (id, g) in grads.iter() {
            let m = self.m.get_mut(id).data_mut();
            let v = self.v.get_mut(id).data_mut();
            let p = params.get_mut(id).data_mut();
            for (((pi, mi), vi), &gi) in p.iter_mut().zip(m).zip(v).zip(g.data()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
