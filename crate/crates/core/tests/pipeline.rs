use sigfuse::data::{
    parse_attr_file, parse_partition_file, read_bank, render_attr_file, render_partition_file, synth_generate,
    write_bank, Dataset, SyntheticSpec,
};
use sigfuse::eval::combination_sweep;
use sigfuse::model::{read_encoder, read_net, write_encoder, write_net, FeatureMask, HybridNet, Profile};
use sigfuse::proto::{client_query, Server, ServerConfig};
use sigfuse::train::{train_multistage_seedinit, NetSpec, TrainConfig};

fn small() -> SyntheticSpec {
    SyntheticSpec {
        counts: [400, 100, 100],
        ..Default::default()
    }
}

#[test]
fn files_roundtrip_to_the_same_dataset() {
    let (table, banks) = synth_generate(&small()).unwrap();
    let mut parsed = parse_attr_file(&render_attr_file(&table)).unwrap();
    parsed.splits = parse_partition_file(&render_partition_file(&table), &parsed).unwrap();
    let reread: Vec<_> = banks
        .iter()
        .map(|b| {
            let mut buf = Vec::new();
            write_bank(b, &mut buf).unwrap();
            read_bank(buf.as_slice()).unwrap()
        })
        .collect();
    assert_eq!(reread, banks);
    let a = Dataset::<f64>::assemble(&table, &banks).unwrap();
    let b = Dataset::<f64>::assemble(&parsed, &reread).unwrap();
    assert_eq!(a.train.ids, b.train.ids);
    assert_eq!(a.test.ids, b.test.ids);
    assert_eq!(a.attributes, b.attributes);
}

#[test]
fn trained_model_served_over_loopback() {
    let (table, banks) = synth_generate(&small()).unwrap();
    let data = Dataset::<f64>::assemble(&table, &banks).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        ..Default::default()
    };
    let out = train_multistage_seedinit("cnn", &data, &NetSpec::from_profile(Profile::Desk, 8), &cfg).unwrap();

    // Stored models are f32; a second pass through the file is lossless.
    let bytes = write_net(&out.net).unwrap();
    let net: HybridNet<f64> = read_net(&bytes).unwrap();
    assert_eq!(write_net(&net).unwrap(), bytes);

    let encoder = read_encoder::<f64>(&write_encoder(&net, Some(&["lbp", "fv"])).unwrap()).unwrap();
    assert_eq!(encoder.kind_count(), 2);

    let server = Server::bind("127.0.0.1:0", net.clone(), ServerConfig::default()).unwrap();
    let handle = server.spawn().unwrap();
    let map = data.column_map(&encoder).unwrap();
    let local = data.column_map(&net.encoder).unwrap();
    let (mut fe, mut fl) = (Vec::new(), Vec::new());
    for i in 0..data.test.len() {
        data.test.features(&map, i, &mut fe);
        data.test.features(&local, i, &mut fl);
        let remote = client_query(&fe, FeatureMask::all(2), &encoder, handle.local_addr()).unwrap();
        let full = FeatureMask::single(net.kind_id("fv").unwrap()).with(net.kind_id("lbp").unwrap());
        let (_, expect) = net.forward(&fl, full).unwrap();
        for (r, e) in remote.iter().zip(&expect) {
            assert!((*r as f64 - e).abs() < 1e-5);
            assert!(*r > 0.0 && *r < 1.0);
        }
    }
    handle.shutdown();

    let report = combination_sweep(&net, &data.test).unwrap();
    assert_eq!(report.rows.len(), 7);
}

#[test]
fn training_is_reproducible() {
    let (table, banks) = synth_generate(&small()).unwrap();
    let data = Dataset::<f64>::assemble(&table, &banks).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        seed: 9,
        ..Default::default()
    };
    let spec = NetSpec::from_profile(Profile::Desk, 8);
    let a = train_multistage_seedinit("fv", &data, &spec, &cfg).unwrap();
    let b = train_multistage_seedinit("fv", &data, &spec, &cfg).unwrap();
    assert_eq!(write_net(&a.net).unwrap(), write_net(&b.net).unwrap());
    assert_eq!(a.log, b.log);
}
