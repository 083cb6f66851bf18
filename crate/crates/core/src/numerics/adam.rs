use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything whose trainable state can be viewed as a list of flat blocks.
/// Gradients use the same type as the parameters they belong to.
pub trait ParamBlocks {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
    fn block_names(&self) -> Vec<String>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: ParamBlocks + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let m: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            config,
            step: 0,
            v: m.clone(),
            m,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update in place.
    pub fn step<P: ParamBlocks + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = grads.blocks();
        if grad_blocks.len() != self.m.len()
            || grad_blocks.iter().zip(&self.m).any(|(g, m)| g.len() != m.len())
        {
            return Err(Error::shape(
                "Adam accumulators vs gradients",
                format!("{:?}", self.m.iter().map(Vec::len).collect::<Vec<_>>()),
                format!("{:?}", grad_blocks.iter().map(|b| b.len()).collect::<Vec<_>>()),
            ));
        }
        if let Some(bad) = grad_blocks
            .iter()
            .position(|b| b.iter().any(|g| !g.is_finite()))
        {
            let name = grads.block_names().swap_remove(bad);
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let mut param_blocks = params.blocks_mut();
        if param_blocks.len() != self.m.len() {
            return Err(Error::shape(
                "Adam parameters",
                self.m.len(),
                param_blocks.len(),
            ));
        }
        for (((p, g), m), v) in param_blocks
            .iter_mut()
            .zip(&grad_blocks)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
