use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::model::{Architecture, FeatureMask, Group, HybridNet, Profile};
use crate::{Error, Result, Scalar};

use super::stage::{run_schedule, MaskPolicy, Selection, Stage, StageRecord, StageSchedule};
use super::{EpochLog, TrainConfig};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Regime {
    Dedicated(String),
    AllFeat,
    ModDrop,
    Multistage(String),
    AllFeatInit,
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = |k: &str| {
            if k.is_empty() {
                Err(Error::Config(format!("regime `{s}` needs a kind")))
            } else {
                Ok(k.to_string())
            }
        };
        match s.split_once(':') {
            Some(("dedicated", k)) => Ok(Regime::Dedicated(kind(k)?)),
            Some(("multistage", k)) => Ok(Regime::Multistage(kind(k)?)),
            None if s == "allfeat" => Ok(Regime::AllFeat),
            None if s == "moddrop" => Ok(Regime::ModDrop),
            None if s == "allfeatinit" => Ok(Regime::AllFeatInit),
            _ => Err(Error::Config(format!(
                "unknown regime `{s}` (dedicated:<kind>|allfeat|moddrop|multistage:<kind>|allfeatinit)"
            ))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Dedicated(k) => write!(f, "dedicated:{k}"),
            Regime::AllFeat => f.write_str("allfeat"),
            Regime::ModDrop => f.write_str("moddrop"),
            Regime::Multistage(k) => write!(f, "multistage:{k}"),
            Regime::AllFeatInit => f.write_str("allfeatinit"),
        }
    }
}

/// Shape of the nets a regime builds. `arch.outputs` must match the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub profile: String,
    pub arch: Architecture,
}

impl NetSpec {
    pub fn from_profile(profile: Profile, outputs: usize) -> Self {
        Self {
            profile: profile.name().to_string(),
            arch: profile.architecture(outputs),
        }
    }

    fn build<T: Scalar>(&self, kinds: &[(String, usize)], data: &Dataset<T>, seed: u64) -> Result<HybridNet<T>> {
        HybridNet::new(&self.profile, self.arch, kinds, data.attributes.clone(), seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub net: HybridNet<T>,
    pub log: Vec<EpochLog>,
    /// Mask of every batch, in training order.
    pub masks: Vec<FeatureMask>,
    /// Net after the first stage (multistage regimes only).
    pub first_stage: Option<HybridNet<T>>,
}

impl<T> TrainOutcome<T> {
    fn absorb(&mut self, records: Vec<StageRecord>) {
        for r in records {
            self.log.extend(r.log);
            self.masks.extend(r.masks);
        }
    }
}

fn all_kinds<T>(data: &Dataset<T>) -> Result<FeatureMask> {
    if data.kinds.is_empty() {
        return Err(Error::Empty("feature banks"));
    }
    Ok(FeatureMask::all(data.kinds.len()))
}

fn single_schedule(
    name: String,
    groups: Vec<Group>,
    policy: MaskPolicy,
    selection: Selection,
    cfg: &TrainConfig,
) -> StageSchedule {
    StageSchedule {
        stages: vec![Stage {
            name,
            groups,
            policy,
            selection,
            epochs: cfg.epochs,
            key: 0,
        }],
    }
}

fn run_single<T: Scalar>(mut net: HybridNet<T>, data: &Dataset<T>, cfg: &TrainConfig, schedule: StageSchedule) -> Result<TrainOutcome<T>> {
    let records = run_schedule(&mut net, data, cfg, &schedule)?;
    let mut out = TrainOutcome {
        net,
        log: Vec::new(),
        masks: Vec::new(),
        first_stage: None,
    };
    out.absorb(records);
    Ok(out)
}

/// One branch for `kind` plus the trunk, trained end to end on `{kind}`.
pub fn train_dedicated<T: Scalar>(kind: &str, data: &Dataset<T>, spec: &NetSpec, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let dim = data
        .kinds
        .iter()
        .find(|(n, _)| n == kind)
        .map(|(_, d)| *d)
        .ok_or_else(|| Error::MissingBank(kind.to_string()))?;
    let net = spec.build(&[(kind.to_string(), dim)], data, cfg.seed)?;
    let m = FeatureMask::single(0);
    let schedule = single_schedule(
        format!("dedicated:{kind}"),
        vec![Group::Branch(0), Group::Trunk],
        MaskPolicy::Fixed(m),
        Selection::Mask(m),
        cfg,
    );
    run_single(net, data, cfg, schedule)
}

/// All kinds, every batch with the full mask, all groups trainable.
pub fn train_allfeatnet<T: Scalar>(data: &Dataset<T>, spec: &NetSpec, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let full = all_kinds(data)?;
    let net = spec.build(&data.kinds, data, cfg.seed)?;
    let groups = net.groups().collect();
    let schedule = single_schedule("allfeat".into(), groups, MaskPolicy::Fixed(full), Selection::Mask(full), cfg);
    run_single(net, data, cfg, schedule)
}

/// Each batch sees one uniformly drawn kind; trunk updates every batch.
pub fn train_moddrop<T: Scalar>(data: &Dataset<T>, spec: &NetSpec, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let full = all_kinds(data)?;
    let net = spec.build(&data.kinds, data, cfg.seed)?;
    let groups = net.groups().collect();
    let schedule = single_schedule(
        "moddrop".into(),
        groups,
        MaskPolicy::RandomSingle(full),
        Selection::MeanOfSingles(full),
        cfg,
    );
    run_single(net, data, cfg, schedule)
}

fn kind_name<T>(net: &HybridNet<T>, k: usize) -> &str {
    &net.encoder.branches[k].kind.name
}

/// Seed branch and trunk first; then, with the trunk frozen, each other
/// branch alone on its own kind, starting from its fresh initialization.
pub fn train_multistage_seedinit<T: Scalar>(
    seed_kind: &str,
    data: &Dataset<T>,
    spec: &NetSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    all_kinds(data)?;
    let mut net = spec.build(&data.kinds, data, cfg.seed)?;
    let s = net.kind_id(seed_kind)?;
    let m = FeatureMask::single(s);
    let stage1 = single_schedule(
        format!("stage1:{seed_kind}"),
        vec![Group::Branch(s), Group::Trunk],
        MaskPolicy::Fixed(m),
        Selection::Mask(m),
        cfg,
    );
    let mut records = run_schedule(&mut net, data, cfg, &stage1)?;
    let first = net.clone();
    let rest = StageSchedule {
        stages: (0..net.kind_count())
            .filter(|&k| k != s)
            .map(|k| Stage::branch_only(format!("branch:{}", kind_name(&net, k)), k, cfg.epochs))
            .collect(),
    };
    if !rest.stages.is_empty() {
        records.extend(run_schedule(&mut net, data, cfg, &rest)?);
    }
    let mut out = TrainOutcome {
        net,
        log: Vec::new(),
        masks: Vec::new(),
        first_stage: Some(first),
    };
    out.absorb(records);
    Ok(out)
}

/// AllFeatNet first; then, with its trunk frozen, each branch fine-tuned
/// alone on its own kind from its AllFeatNet values.
pub fn train_allfeatnetinit<T: Scalar>(data: &Dataset<T>, spec: &NetSpec, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let phase1 = train_allfeatnet(data, spec, cfg)?;
    let mut net = phase1.net.clone();
    let schedule = StageSchedule {
        stages: (0..net.kind_count())
            .map(|k| Stage::branch_only(format!("finetune:{}", kind_name(&net, k)), k, cfg.epochs))
            .collect(),
    };
    let records = run_schedule(&mut net, data, cfg, &schedule)?;
    let mut out = TrainOutcome {
        first_stage: Some(phase1.net),
        net,
        log: phase1.log,
        masks: phase1.masks,
    };
    out.absorb(records);
    Ok(out)
}

/// Adds a branch for `kind` to a trained net and trains only that branch.
pub fn extend_with_kind<T: Scalar>(
    mut net: HybridNet<T>,
    kind: &str,
    data: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let dim = data
        .kinds
        .iter()
        .find(|(n, _)| n == kind)
        .map(|(_, d)| *d)
        .ok_or_else(|| Error::MissingBank(kind.to_string()))?;
    let k = net.add_kind(kind, dim, cfg.seed)?;
    let schedule = StageSchedule {
        stages: vec![Stage::branch_only(format!("branch:{kind}"), k, cfg.epochs)],
    };
    run_single(net, data, cfg, schedule)
}

pub fn train_regime<T: Scalar>(regime: &Regime, data: &Dataset<T>, spec: &NetSpec, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    match regime {
        Regime::Dedicated(k) => train_dedicated(k, data, spec, cfg),
        Regime::AllFeat => train_allfeatnet(data, spec, cfg),
        Regime::ModDrop => train_moddrop(data, spec, cfg),
        Regime::Multistage(k) => train_multistage_seedinit(k, data, spec, cfg),
        Regime::AllFeatInit => train_allfeatnetinit(data, spec, cfg),
    }
}
