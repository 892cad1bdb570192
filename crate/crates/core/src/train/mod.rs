//! Training regimes: dedicated nets, AllFeatNet, Mod-Drop and the two
//! multistage strategies, all driven by one deterministic stage runner.

mod regimes;
mod stage;

pub use regimes::{
    extend_with_kind, train_allfeatnet, train_allfeatnetinit, train_dedicated, train_moddrop,
    train_multistage_seedinit, train_regime, NetSpec, Regime, TrainOutcome,
};
pub use stage::{run_schedule, run_stage, MaskPolicy, Selection, Stage, StageSchedule};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::model::{ExampleRef, FeatureMask, Group, HybridNet};
use crate::nn::SgdMomentum;
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Epochs per stage.
    pub epochs: usize,
    pub seed: u64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Run independent branch stages on worker threads. Results are identical
    /// to the sequential run.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            momentum: 0.0,
            weight_decay: 0.0,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be finite and >= 0");
        }
        Ok(())
    }
}

/// One row of the per-epoch log. Epoch 0 is the stage's starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: String,
    pub train_loss: Option<f64>,
    pub val_map: Option<f64>,
}

pub fn render_log_csv(rows: &[EpochLog]) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from("epoch,stage,train_loss,val_map\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.stage, opt(r.train_loss), opt(r.val_map));
    }
    s
}

/// Velocity buffers for every layer of a net.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    branches: Vec<[SgdMomentum<T>; 2]>,
    trunk: [SgdMomentum<T>; 3],
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(net: &HybridNet<T>) -> Self {
        let t = &net.trunk;
        Self {
            branches: net
                .encoder
                .branches
                .iter()
                .map(|b| [SgdMomentum::for_layer(&b.layer1), SgdMomentum::for_layer(&b.layer2)])
                .collect(),
            trunk: [
                SgdMomentum::for_layer(&t.layer3),
                SgdMomentum::for_layer(&t.layer4),
                SgdMomentum::for_layer(&t.out),
            ],
        }
    }
}

/// Groups a step with `mask` would update: trainable trunk plus the
/// trainable branches inside the mask.
pub fn active_groups<T: Scalar>(net: &HybridNet<T>, mask: FeatureMask) -> Vec<Group> {
    mask.iter()
        .map(Group::Branch)
        .chain(std::iter::once(Group::Trunk))
        .filter(|g| net.is_trainable(*g))
        .collect()
}

/// One SGD update on `batch` with `mask`; returns the batch-mean loss.
///
/// Only active groups move, so frozen groups and branches outside the mask
/// stay bit-identical even with momentum or weight decay.
pub fn train_step<T: Scalar>(
    net: &mut HybridNet<T>,
    batch: &[ExampleRef<'_, T>],
    mask: FeatureMask,
    cfg: &TrainConfig,
    opt: &mut Optimizer<T>,
) -> Result<T> {
    let active = active_groups(net, mask);
    if active.is_empty() {
        return Err(Error::NoTrainableGroup);
    }
    if opt.branches.len() != net.kind_count() {
        return Err(Error::shape("optimizer branches", net.kind_count(), opt.branches.len()));
    }
    let (loss, grad) = crate::model::net_backward(batch, mask, net)?;
    let (lr, mom, wd) = (T::lit(cfg.lr), T::lit(cfg.momentum), T::lit(cfg.weight_decay));
    for g in active {
        match g {
            Group::Branch(k) => {
                let layers = net.encoder.branches[k].layers_mut();
                let grads = grad.branches[k].layers();
                for ((layer, g), o) in layers.into_iter().zip(grads).zip(opt.branches[k].iter_mut()) {
                    o.step(layer, g, lr, mom, wd)?;
                }
            }
            Group::Trunk => {
                let layers = net.trunk.layers_mut();
                for ((layer, g), o) in layers.into_iter().zip(grad.trunk.layers()).zip(opt.trunk.iter_mut()) {
                    o.step(layer, g, lr, mom, wd)?;
                }
            }
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests;
