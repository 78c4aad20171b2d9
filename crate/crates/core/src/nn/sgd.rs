//! SGD with classic momentum and coupled (L2) weight decay:
//! g' = g + wd·w;  v = momentum·v + g';  w ← w − lr·v.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::network::Network;

/// Optimizer state: hyperparameters plus one velocity buffer per parameter
/// tensor, keyed by parameter name so head resets can drop exactly the stale
/// buffers.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub learning_rate: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: BTreeMap<String, Vec<f32>>,
}

impl Sgd {
    pub fn new(learning_rate: f32, momentum: f32, weight_decay: f32) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be ≥ 0, got {weight_decay}")));
        }
        Ok(Sgd { learning_rate, momentum, weight_decay, velocity: BTreeMap::new() })
    }

    /// Applies one update to every parameter from its accumulated gradient.
    pub fn step(&mut self, net: &mut Network<f32>) {
        let (lr, mom, wd) = (self.learning_rate, self.momentum, self.weight_decay);
        let velocity = &mut self.velocity;
        net.visit_params(|name, w, g| {
            let v = velocity.entry(name.to_string()).or_insert_with(|| vec![0.0; w.len()]);
            debug_assert_eq!(v.len(), w.len(), "velocity shape drifted for {name}");
            sgd_step(w, g, v, lr, mom, wd);
        });
    }

    /// Drops velocity buffers whose parameter name starts with `prefix`
    /// (a freshly reset head must not inherit the old head's momentum).
    pub fn reset_velocity(&mut self, prefix: &str) {
        self.velocity.retain(|name, _| !name.starts_with(prefix));
    }
}

/// The raw update rule on one parameter tensor.
pub fn sgd_step(w: &mut [f32], g: &[f32], v: &mut [f32], lr: f32, momentum: f32, wd: f32) {
    assert!(w.len() == g.len() && w.len() == v.len(), "sgd: shape mismatch");
    for i in 0..w.len() {
        let g_eff = g[i] + wd * w[i];
        v[i] = momentum * v[i] + g_eff;
        w[i] -= lr * v[i];
    }
}
