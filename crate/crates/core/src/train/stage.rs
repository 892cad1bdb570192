use log::{debug, info};

use crate::data::{ColumnMap, Dataset};
use crate::eval::mean_ap;
use crate::model::{ExampleRef, FeatureMask, Group, HybridNet};
use crate::rng::SeededRng;
use crate::{Error, Result, Scalar};

use super::{active_groups, train_step, EpochLog, Optimizer, TrainConfig};

// Per-purpose RNG streams, offset by the stage key.
const SHUFFLE_STREAM: u64 = 0x7368_7566_0000_0000;
const MASK_STREAM: u64 = 0x6d61_736b_0000_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskPolicy {
    /// Every batch uses this mask.
    Fixed(FeatureMask),
    /// Every batch uses one kind drawn uniformly from these.
    RandomSingle(FeatureMask),
}

impl MaskPolicy {
    pub fn draw(&self, rng: &mut SeededRng) -> FeatureMask {
        match *self {
            MaskPolicy::Fixed(m) => m,
            MaskPolicy::RandomSingle(m) => {
                let kinds: Vec<usize> = m.iter().collect();
                FeatureMask::single(kinds[rng.below(kinds.len())])
            }
        }
    }

    /// Every kind a batch may use.
    pub fn support(&self) -> FeatureMask {
        match *self {
            MaskPolicy::Fixed(m) | MaskPolicy::RandomSingle(m) => m,
        }
    }
}

/// Validation metric used to pick the returned epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Mask(FeatureMask),
    /// Average of the single-kind mean APs over these kinds.
    MeanOfSingles(FeatureMask),
}

impl Selection {
    fn support(&self) -> FeatureMask {
        match *self {
            Selection::Mask(m) | Selection::MeanOfSingles(m) => m,
        }
    }

    pub fn score<T: Scalar>(&self, net: &HybridNet<T>, data: &Dataset<T>) -> Result<f64> {
        match *self {
            Selection::Mask(m) => mean_ap(net, &data.val, m),
            Selection::MeanOfSingles(m) => {
                let mut sum = 0.0;
                for k in m.iter() {
                    sum += mean_ap(net, &data.val, FeatureMask::single(k))?;
                }
                Ok(sum / m.len() as f64)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub groups: Vec<Group>,
    pub policy: MaskPolicy,
    pub selection: Selection,
    pub epochs: usize,
    /// Picks the shuffle and mask streams. Stages with distinct keys draw
    /// independent sequences regardless of the order they run in.
    pub key: u64,
}

impl Stage {
    /// Trains only branch `k` on `{k}` with everything else frozen.
    pub fn branch_only(name: String, k: usize, epochs: usize) -> Self {
        let m = FeatureMask::single(k);
        Self {
            name,
            groups: vec![Group::Branch(k)],
            policy: MaskPolicy::Fixed(m),
            selection: Selection::Mask(m),
            epochs,
            key: 1 + k as u64,
        }
    }

    /// True when the stage reads and writes nothing but one branch (and the
    /// frozen trunk), so it commutes with other such stages.
    fn isolated_branch(&self) -> Option<usize> {
        match (self.groups.as_slice(), self.policy, self.selection) {
            ([Group::Branch(k)], MaskPolicy::Fixed(p), Selection::Mask(s))
                if p == FeatureMask::single(*k) && s == p =>
            {
                Some(*k)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageSchedule {
    pub stages: Vec<Stage>,
}

impl StageSchedule {
    pub fn validate<T: Scalar>(&self, net: &HybridNet<T>) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Empty("stage schedule"));
        }
        for s in &self.stages {
            if s.groups.is_empty() {
                return Err(Error::NoTrainableGroup);
            }
            for g in &s.groups {
                if let Group::Branch(k) = g {
                    if *k >= net.kind_count() {
                        return Err(Error::UnknownGroup(g.to_string()));
                    }
                }
            }
            if s.epochs == 0 {
                return Err(Error::Config(format!("stage `{}` has no epochs", s.name)));
            }
        }
        Ok(())
    }
}

/// Per-stage record: the epoch log and the mask used by each batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageRecord {
    pub log: Vec<EpochLog>,
    pub masks: Vec<FeatureMask>,
}

/// Runs one stage in place and leaves `net` at the best validation epoch
/// (epoch 0 included; ties keep the earlier epoch).
pub fn run_stage<T: Scalar>(net: &mut HybridNet<T>, data: &Dataset<T>, cfg: &TrainConfig, stage: &Stage) -> Result<StageRecord> {
    cfg.validate()?;
    net.train_only(&stage.groups)?;
    let support = stage.policy.support();
    if support.is_empty() || support.iter().any(|k| k >= net.kind_count()) {
        return Err(Error::Config(format!("stage `{}` has an invalid mask", stage.name)));
    }
    let reachable = support.iter().any(|k| net.is_trainable(Group::Branch(k))) || net.is_trainable(Group::Trunk);
    if !reachable {
        return Err(Error::NoTrainableGroup);
    }
    let map: ColumnMap = data.column_map(&net.encoder)?;
    if data.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    data.train.require(&map, support)?;
    let select = !data.val.is_empty();
    if select {
        data.val.require(&map, stage.selection.support())?;
    }

    let feats: Vec<Vec<Option<&[T]>>> = (0..data.train.len())
        .map(|i| {
            let mut f = Vec::new();
            data.train.features(&map, i, &mut f);
            f
        })
        .collect();

    let mut record = StageRecord::default();
    let mut best = None;
    let mut best_score = f64::NEG_INFINITY;
    if select {
        best_score = stage.selection.score(net, data)?;
        best = Some(net.clone());
    }
    record.log.push(EpochLog {
        epoch: 0,
        stage: stage.name.clone(),
        train_loss: None,
        val_map: select.then_some(best_score),
    });

    let mut shuffle = SeededRng::with_stream(cfg.seed, SHUFFLE_STREAM.wrapping_add(stage.key));
    let mut masks = SeededRng::with_stream(cfg.seed, MASK_STREAM.wrapping_add(stage.key));
    let mut opt = Optimizer::new(net);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=stage.epochs {
        order.sort_unstable();
        shuffle.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mask = stage.policy.draw(&mut masks);
            record.masks.push(mask);
            if active_groups(net, mask).is_empty() {
                continue;
            }
            batch.clear();
            batch.extend(chunk.iter().map(|&i| ExampleRef {
                features: feats[i].as_slice(),
                labels: data.train.labels(i),
            }));
            let loss = train_step(net, &batch, mask, cfg, &mut opt)?;
            total += loss.as_f64() * chunk.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        let val = if select { Some(stage.selection.score(net, data)?) } else { None };
        debug!("{} epoch {epoch}: loss {train_loss:.5} val {val:?}", stage.name);
        record.log.push(EpochLog {
            epoch,
            stage: stage.name.clone(),
            train_loss: Some(train_loss),
            val_map: val,
        });
        if let Some(v) = val {
            if v > best_score {
                best_score = v;
                best = Some(net.clone());
            }
        }
    }
    if let Some(b) = best {
        *net = b;
    }
    info!("stage {} done, val mAP {best_score:.4}", stage.name);
    Ok(record)
}

/// Runs stages in order. Consecutive isolated branch stages run on copies
/// of the net (optionally on threads) and only their branch is written back.
pub fn run_schedule<T: Scalar>(
    net: &mut HybridNet<T>,
    data: &Dataset<T>,
    cfg: &TrainConfig,
    schedule: &StageSchedule,
) -> Result<Vec<StageRecord>> {
    cfg.validate()?;
    schedule.validate(net)?;
    let mut records = Vec::with_capacity(schedule.stages.len());
    let stages = &schedule.stages;
    let mut i = 0;
    while i < stages.len() {
        let mut j = i;
        while j < stages.len() && stages[j].isolated_branch().is_some() {
            j += 1;
        }
        if j == i {
            records.push(run_stage(net, data, cfg, &stages[i])?);
            i += 1;
            continue;
        }
        let group = &stages[i..j];
        let run_one = |s: &Stage| -> Result<(HybridNet<T>, StageRecord)> {
            let mut copy = net.clone();
            let rec = run_stage(&mut copy, data, cfg, s)?;
            Ok((copy, rec))
        };
        let results: Vec<Result<(HybridNet<T>, StageRecord)>> = if cfg.parallel && group.len() > 1 {
            std::thread::scope(|scope| {
                let handles: Vec<_> = group.iter().map(|s| scope.spawn(move || run_one(s))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Config("training worker panicked".into()))))
                    .collect()
            })
        } else {
            group.iter().map(run_one).collect()
        };
        for (s, r) in group.iter().zip(results) {
            let (copy, rec) = r?;
            let k = s.isolated_branch().expect("isolated stage");
            net.copy_group_from(&copy, Group::Branch(k))?;
            records.push(rec);
        }
        i = j;
    }
    for g in net.groups().collect::<Vec<_>>() {
        net.set_trainable(g, true)?;
    }
    Ok(records)
}
