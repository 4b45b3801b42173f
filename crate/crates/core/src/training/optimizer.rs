//! Adam with per-component step sizes.

use std::collections::BTreeMap;

use eventcast_numerics::{Gradients, NumericsError, ParameterSet};

use super::config::{FreezePolicy, RateMap};
use crate::error::Result;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Adam {
    /// Completed steps.
    pub t: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.data().iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            for x in g.data_mut() {
                *x *= s;
            }
        }
    }
    norm
}

impl Adam {
    pub fn new() -> Self {
        Self::default()
    }

    /// One update of every trainable, non-frozen parameter that has a
    /// gradient. Frozen parameters are skipped even when a gradient is
    /// supplied.
    pub fn step(
        &mut self,
        params: &mut ParameterSet,
        grads: &Gradients,
        rates: &RateMap,
        freeze: &FreezePolicy,
    ) -> Result<()> {
        if let Some(name) = grads.keys().find(|n| !params.contains(n)) {
            return Err(NumericsError::Contract(format!("gradient for unknown parameter `{name}`")).into());
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (name, g) in grads {
            if freeze.is_frozen(name) || !params.is_trainable(name)? {
                continue;
            }
            let lr = rates.rate_for(name)?;
            let value = params.get_mut(name)?;
            if g.len() != value.len() {
                return Err(NumericsError::Shape(format!("gradient of `{name}` has the wrong size")).into());
            }
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for (((p, &gi), mi), vi) in value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

/// One Adam update carrying moments in `state`.
pub fn optimizer_step(
    state: &mut Adam,
    grads: &Gradients,
    params: &mut ParameterSet,
    rates: &RateMap,
    freeze: &FreezePolicy,
) -> Result<()> {
    state.step(params, grads, rates, freeze)
}
