//! Adam with Nesterov momentum (Nadam), using the warming momentum schedule
//! `mu_t = beta1 * (1 - 0.5 * 0.96^(t * schedule_decay))`.

use super::{FreezeMask, Layer, NetworkParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule_decay: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            beta1: 0.99,
            beta2: 0.999,
            eps: 1e-8,
            schedule_decay: 0.004,
        }
    }
}

/// Moment accumulators for a group of tensors that always step together.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub step: u64,
    pub m_schedule: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl MomentState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            step: 0,
            m_schedule: 1.0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update(&mut self, config: &NadamConfig, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        self.step += 1;
        let t = self.step as f64;
        let mu_t = config.beta1 * (1.0 - 0.5 * 0.96f64.powf(t * config.schedule_decay));
        let mu_next = config.beta1 * (1.0 - 0.5 * 0.96f64.powf((t + 1.0) * config.schedule_decay));
        let sched = self.m_schedule * mu_t;
        let sched_next = sched * mu_next;
        self.m_schedule = sched;
        let bias2 = 1.0 - config.beta2.powf(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
                v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
                let g_hat = gj / (1.0 - sched);
                let m_hat = m[j] / (1.0 - sched_next);
                let v_hat = v[j] / bias2;
                let m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
                p[j] -= config.lr * m_bar / (v_hat.sqrt() + config.eps);
            }
        }
    }
}

/// Per-layer-group Nadam state. Groups of frozen layers are never touched.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: NadamConfig,
    pub groups: [MomentState; 4],
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, config: NadamConfig) -> Self {
        let groups = Layer::ALL.map(|layer| {
            let sizes: Vec<usize> = params
                .tensors()
                .iter()
                .filter(|t| t.layer == layer)
                .map(|t| t.data.len())
                .collect();
            MomentState::new(&sizes)
        });
        Self { config, groups }
    }

    /// Applies one update to the layers in `mask`.
    pub fn step(
        &mut self,
        params: &mut NetworkParams,
        grads: &NetworkParams,
        mask: FreezeMask,
    ) -> Result<()> {
        if params.shape != grads.shape {
            return Err(Error::Shape(
                "gradient shapes do not match parameters".into(),
            ));
        }
        let gtensors = grads.tensors();
        for g in &gtensors {
            if mask.contains(g.layer) && g.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(g.layer));
            }
        }
        let mut ptensors = params.tensors_mut();
        for layer in mask.layers() {
            let (ps, gs): (Vec<&mut [f64]>, Vec<&[f64]>) = ptensors
                .iter_mut()
                .zip(&gtensors)
                .filter(|(p, _)| p.layer == layer)
                .map(|(p, g)| (&mut *p.data, g.data))
                .unzip();
            self.groups[usize::from(layer.id() - 1)].update(&self.config, ps, gs);
        }
        Ok(())
    }
}
