use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::{Error, Result};

/// Step-decay schedule `initial · decay^⌊epoch / every⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
    pub every: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial: 1e-4,
            decay: 0.7,
            every: 40,
        }
    }
}

impl LrSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        self.initial * self.decay.powi((epoch / self.every.max(1)) as i32)
    }
}

/// Learning rate at `epoch` under the default schedule.
pub fn lr_schedule(epoch: usize) -> f64 {
    LrSchedule::default().lr(epoch)
}

/// Adam moments and hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(1e-4)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry are left alone.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
) -> Result<()> {
    for (name, g) in grads {
        let p = params
            .get(name)
            .ok_or_else(|| Error::Config(format!("gradient for unknown parameter {name:?}")))?;
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "adam: parameter {name:?} is {:?}, gradient is {:?}",
                p.shape(),
                g.shape()
            )));
        }
        if let Some(m) = state.m.get(name) {
            if m.len() != g.len() {
                return Err(Error::Shape(format!("adam: moment size mismatch for {name:?}")));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (name, g) in grads {
        let n = g.len();
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
        let p = params.get_mut(name).expect("checked above").data_mut();
        for i in 0..n {
            let gi = g.data()[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= state.lr * mhat / (vhat.sqrt() + state.eps);
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("adam update of {name:?}")));
        }
    }
    Ok(())
}
