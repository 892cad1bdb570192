use super::*;
use crate::data::{synth_generate, Dataset, SyntheticSpec, ViewSpec};
use crate::eval::mean_ap;
use crate::model::{net_backward, FeatureMask, Group, Profile};
use crate::rng::SeededRng;

fn spec_with(views: &[(&str, f64)], attrs: usize, counts: [usize; 3]) -> SyntheticSpec {
    SyntheticSpec {
        latent_dim: 6,
        views: views
            .iter()
            .enumerate()
            .map(|(i, (n, s))| ViewSpec {
                name: n.to_string(),
                dim: 8,
                mixing_seed: 100 + i as u64,
                noise: *s,
            })
            .collect(),
        attributes: attrs,
        projection_seed: 3,
        sample_seed: 4,
        counts,
    }
}

fn dataset(views: &[(&str, f64)], attrs: usize, counts: [usize; 3]) -> Dataset<f64> {
    let (t, b) = synth_generate(&spec_with(views, attrs, counts)).unwrap();
    Dataset::assemble(&t, &b).unwrap()
}

fn three() -> Dataset<f64> {
    dataset(&[("fv", 0.1), ("cnn", 0.2), ("lbp", 0.4)], 3, [300, 100, 0])
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 0.05,
        batch_size: 16,
        epochs,
        seed: 9,
        ..Default::default()
    }
}

fn netspec(d: &Dataset<f64>) -> NetSpec {
    NetSpec::from_profile(Profile::Desk, d.attribute_count())
}

#[test]
fn regime_names_roundtrip() {
    for s in ["dedicated:lbp", "allfeat", "moddrop", "multistage:fv", "allfeatinit"] {
        assert_eq!(s.parse::<Regime>().unwrap().to_string(), s);
    }
    for bad in ["dedicated:", "fvnet", "multistage", "allfeat:x"] {
        assert!(bad.parse::<Regime>().is_err(), "{bad}");
    }
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { lr: -1.0, ..Default::default() }.validate().is_err());
    assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
}

#[test]
fn zero_lr_keeps_initialization() {
    let d = three();
    let c = TrainConfig { lr: 0.0, ..cfg(2) };
    let out = train_dedicated("cnn", &d, &netspec(&d), &c).unwrap();
    let init = HybridNet::<f64>::new("desk", netspec(&d).arch, &[("cnn".into(), 8)], d.attributes.clone(), c.seed).unwrap();
    assert_eq!(out.net.params(), init.params());
}

#[test]
fn dedicated_is_deterministic() {
    let d = three();
    let a = train_dedicated("fv", &d, &netspec(&d), &cfg(3)).unwrap();
    let b = train_dedicated("fv", &d, &netspec(&d), &cfg(3)).unwrap();
    assert_eq!(a.net, b.net);
    assert_eq!(a.log, b.log);
}

#[test]
fn dedicated_learns_separable_data() {
    let d = dataset(&[("fv", 0.0)], 2, [1000, 200, 0]);
    let out = train_dedicated("fv", &d, &netspec(&d), &TrainConfig { epochs: 50, ..cfg(50) }).unwrap();
    let m = mean_ap(&out.net, &d.val, FeatureMask::single(0)).unwrap();
    assert!(m > 0.95, "val mAP {m}");
}

#[test]
fn single_kind_allfeat_and_moddrop_match_dedicated() {
    let d = dataset(&[("fv", 0.1)], 3, [200, 50, 0]);
    let s = netspec(&d);
    let ded = train_dedicated("fv", &d, &s, &cfg(3)).unwrap();
    let all = train_allfeatnet(&d, &s, &cfg(3)).unwrap();
    let md = train_moddrop(&d, &s, &cfg(3)).unwrap();
    assert_eq!(ded.net, all.net);
    assert_eq!(ded.net, md.net);
    let vals = |o: &TrainOutcome<f64>| o.log.iter().map(|r| (r.train_loss, r.val_map)).collect::<Vec<_>>();
    assert_eq!(vals(&ded), vals(&md));
}

#[test]
fn allfeat_loss_decreases_early() {
    let d = three();
    let out = train_allfeatnet(&d, &netspec(&d), &cfg(5)).unwrap();
    let losses: Vec<f64> = out.log.iter().filter_map(|r| r.train_loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    assert!(out.masks.iter().all(|m| *m == FeatureMask::all(3)));
}

#[test]
fn full_mask_gradient_reaches_every_branch() {
    let d = three();
    let net = HybridNet::<f64>::new("desk", netspec(&d).arch, &d.kinds, d.attributes.clone(), 1).unwrap();
    let map = d.column_map(&net.encoder).unwrap();
    let feats: Vec<Vec<Option<&[f64]>>> = (0..16)
        .map(|i| {
            let mut f = Vec::new();
            d.train.features(&map, i, &mut f);
            f
        })
        .collect();
    let batch: Vec<_> = (0..16)
        .map(|i| crate::model::ExampleRef {
            features: feats[i].as_slice(),
            labels: d.train.labels(i),
        })
        .collect();
    let (_, g) = net_backward(&batch, FeatureMask::all(3), &net).unwrap();
    for k in 0..3 {
        assert!(g.branches[k].norm_sq() > 0.0, "branch {k}");
    }
}

#[test]
fn frozen_everything_errors() {
    let d = three();
    let mut net = HybridNet::<f64>::new("desk", netspec(&d).arch, &d.kinds, d.attributes.clone(), 1).unwrap();
    net.train_only(&[]).unwrap();
    let mut opt = Optimizer::new(&net);
    assert!(matches!(train_step(&mut net, &[], FeatureMask::single(0), &cfg(1), &mut opt), Err(crate::Error::NoTrainableGroup)));
    // A trainable branch outside the mask does not count either.
    net.train_only(&[Group::Branch(2)]).unwrap();
    assert!(matches!(train_step(&mut net, &[], FeatureMask::single(0), &cfg(1), &mut opt), Err(crate::Error::NoTrainableGroup)));
    let stage = Stage::branch_only("x".into(), 0, 1);
    let bad = Stage { groups: vec![Group::Branch(1)], ..stage };
    assert!(matches!(run_stage(&mut net, &d, &cfg(1), &bad), Err(crate::Error::NoTrainableGroup)));
}

#[test]
fn missing_features_rejected() {
    let (t, mut banks) = synth_generate(&spec_with(&[("fv", 0.1), ("lbp", 0.1)], 2, [20, 5, 0])).unwrap();
    let mut partial = crate::data::FeatureBank::new("lbp", 8);
    for (id, v) in banks[1].iter().skip(1) {
        partial.insert(id, v).unwrap();
    }
    banks[1] = partial;
    let d: Dataset<f64> = Dataset::assemble(&t, &banks).unwrap();
    let s = netspec(&d);
    assert!(train_dedicated("fv", &d, &s, &cfg(1)).is_ok());
    assert!(matches!(train_allfeatnet(&d, &s, &cfg(1)), Err(crate::Error::MissingFeatures { id, .. }) if id == "000001"));
    assert!(matches!(train_dedicated("lbp", &d, &s, &cfg(1)), Err(crate::Error::MissingFeatures { .. })));
    assert!(matches!(train_dedicated("cnn", &d, &s, &cfg(1)), Err(crate::Error::MissingBank(_))));
}

#[test]
fn moddrop_changes_one_branch_per_batch() {
    let d = three();
    let mut net = HybridNet::<f64>::new("desk", netspec(&d).arch, &d.kinds, d.attributes.clone(), 1).unwrap();
    let map = d.column_map(&net.encoder).unwrap();
    let mut opt = Optimizer::new(&net);
    let policy = MaskPolicy::RandomSingle(FeatureMask::all(3));
    let mut rng = SeededRng::new(2);
    let c = TrainConfig { momentum: 0.9, weight_decay: 1e-3, ..cfg(1) };
    let mut f = Vec::new();
    for step in 0..60 {
        let mask = policy.draw(&mut rng);
        let feats: Vec<Vec<Option<&[f64]>>> = (0..8)
            .map(|j| {
                d.train.features(&map, (step * 8 + j) % d.train.len(), &mut f);
                f.clone()
            })
            .collect();
        let batch: Vec<_> = (0..8)
            .map(|j| crate::model::ExampleRef {
                features: feats[j].as_slice(),
                labels: d.train.labels((step * 8 + j) % d.train.len()),
            })
            .collect();
        let before = net.clone();
        train_step(&mut net, &batch, mask, &c, &mut opt).unwrap();
        let k = mask.iter().next().unwrap();
        for j in 0..3 {
            let same = before.encoder.branches[j] == net.encoder.branches[j];
            assert_eq!(same, j != k, "step {step}, branch {j}");
        }
        assert_ne!(before.trunk, net.trunk);
    }
}

#[test]
fn multistage_freezes_seed_branch_and_trunk() {
    let d = three();
    let out = train_multistage_seedinit("fv", &d, &netspec(&d), &cfg(3)).unwrap();
    let first = out.first_stage.as_ref().unwrap();
    assert_eq!(first.trunk, out.net.trunk);
    assert_eq!(first.encoder.branches[0], out.net.encoder.branches[0]);
    assert_ne!(first.encoder.branches[1], out.net.encoder.branches[1]);
    let stages: Vec<&str> = out.log.iter().map(|r| r.stage.as_str()).collect();
    assert!(stages.contains(&"branch:cnn") && stages.contains(&"branch:lbp"));
    assert!(train_multistage_seedinit("hog", &d, &netspec(&d), &cfg(1)).is_err());
}

#[test]
fn branch_stage_order_and_threads_do_not_matter() {
    let d = three();
    let s = netspec(&d);
    let c = cfg(2);
    let base = train_dedicated("fv", &d, &s, &c).unwrap().net;
    let mut start = HybridNet::<f64>::new("desk", s.arch, &d.kinds, d.attributes.clone(), c.seed).unwrap();
    start.copy_group_from(&base, Group::Trunk).unwrap();
    let order = |ks: &[usize]| StageSchedule {
        stages: ks.iter().map(|&k| Stage::branch_only(format!("b{k}"), k, 2)).collect(),
    };
    let mut a = start.clone();
    run_schedule(&mut a, &d, &c, &order(&[1, 2])).unwrap();
    let mut b = start.clone();
    run_schedule(&mut b, &d, &c, &order(&[2, 1])).unwrap();
    let mut p = start.clone();
    run_schedule(&mut p, &d, &TrainConfig { parallel: true, ..c.clone() }, &order(&[1, 2])).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, p);
    // Running both regimes end to end in parallel gives the same bytes too.
    let seq = train_multistage_seedinit("fv", &d, &s, &c).unwrap();
    let par = train_multistage_seedinit("fv", &d, &s, &TrainConfig { parallel: true, ..c }).unwrap();
    assert_eq!(seq.net, par.net);
    assert_eq!(seq.log, par.log);
}

#[test]
fn new_kind_trains_only_its_branch() {
    let full = dataset(&[("fv", 0.1), ("cnn", 0.2), ("lbp", 0.4), ("hog", 0.3)], 3, [300, 100, 0]);
    let mut three = full.clone();
    for split in [&mut three.train, &mut three.val, &mut three.test] {
        split.columns.truncate(3);
    }
    three.kinds.truncate(3);
    let c = cfg(2);
    let base = train_multistage_seedinit("fv", &three, &netspec(&three), &c).unwrap().net;
    let ext = extend_with_kind(base.clone(), "hog", &full, &c).unwrap().net;
    assert_eq!(ext.kind_count(), 4);
    assert_eq!(ext.trunk, base.trunk);
    assert_eq!(&ext.encoder.branches[..3], &base.encoder.branches[..]);
}

#[test]
fn allfeatinit_keeps_trunk_and_improves_singles() {
    let d = three();
    let out = train_allfeatnetinit(&d, &netspec(&d), &cfg(4)).unwrap();
    let phase1 = out.first_stage.as_ref().unwrap();
    assert_eq!(phase1.trunk, out.net.trunk);
    for k in 0..3 {
        let m = FeatureMask::single(k);
        let before = mean_ap(phase1, &d.val, m).unwrap();
        let after = mean_ap(&out.net, &d.val, m).unwrap();
        assert!(after >= before, "kind {k}: {after} < {before}");
    }
    let again = train_allfeatnetinit(&d, &netspec(&d), &cfg(4)).unwrap();
    assert_eq!(again.net, out.net);
}

#[test]
fn log_csv_shape() {
    let d = three();
    let out = train_dedicated("lbp", &d, &netspec(&d), &cfg(2)).unwrap();
    let csv = render_log_csv(&out.log);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,stage,train_loss,val_map");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,dedicated:lbp,,"));
}
