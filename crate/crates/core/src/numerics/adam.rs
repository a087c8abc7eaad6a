use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result, TbrError};
use crate::numerics::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every parameter group of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<P: ParamSet + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.groups().iter().map(|g| g.len()).collect();
        Self {
            config,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. A non-finite gradient anywhere aborts
    /// the step before any parameter or moment is touched.
    pub fn step<P: ParamSet + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let gs = grads.groups();
        if gs.len() != self.m.len() {
            return Err(shape_err("adam_step", self.m.len(), gs.len()));
        }
        for (i, (g, m)) in gs.iter().zip(&self.m).enumerate() {
            if g.len() != m.len() {
                return Err(shape_err("adam_step", m.len(), g.len()));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TbrError::NonFiniteGradient { group: i });
            }
        }
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - b1.powi(t);
        let bc2_sqrt = (1.0 - b2.powi(t)).sqrt();
        let step_size = lr / bc1;

        let mut ps = params.groups_mut();
        if ps.len() != gs.len() {
            return Err(shape_err("adam_step", gs.len(), ps.len()));
        }
        for (((p, g), m), v) in ps.iter_mut().zip(&gs).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let denom = v.sqrt() / bc2_sqrt + eps;
                *p -= step_size * *m / denom;
            }
        }
        Ok(())
    }
}
