use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use sigfuse::data::{
    lbp_extract, parse_attr_file, parse_partition_file, parse_pnm, read_bank, render_attr_file,
    render_partition_file, split_dataset, synth_generate, write_bank, Dataset, FeatureBank, SplitSpec, SplitTag,
    SyntheticSpec, ViewSpec,
};
use sigfuse::eval::{evaluate_masks, report_emit, ReportFormat};
use sigfuse::model::{read_encoder, read_net, write_encoder, write_net, FeatureMask, Profile};
use sigfuse::proto::{client_query, Server, ServerConfig};
use sigfuse::train::{render_log_csv, train_regime, NetSpec, Regime, TrainConfig};
use sigfuse::{Net, Real};

use crate::args::*;
use crate::config::FileConfig;
use crate::error::{io_out, read_input, CliError, CliResult};
use crate::manifest::*;

/// Settings shared by every subcommand after merging flags, env and file.
struct Globals {
    profile: Profile,
    seed: u64,
    file: FileConfig,
}

pub fn run(cli: Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let profile_name = cli.profile.clone().or_else(|| file.profile.clone()).unwrap_or_else(|| "desk".into());
    let g = Globals {
        profile: Profile::parse(&profile_name)?,
        seed: cli.seed.or(file.seed).unwrap_or(0),
        file,
    };
    match cli.command {
        Command::Train(a) => cmd_train(&g, a),
        Command::Eval(a) => cmd_eval(&g, a),
        Command::ExtractLbp(a) => cmd_extract_lbp(&g, a),
        Command::Synth(a) => cmd_synth(&g, a),
        Command::Serve(a) => cmd_serve(a),
        Command::Query(a) => cmd_query(a),
        Command::ExportEncoder(a) => cmd_export(a),
    }
}

fn absolute(path: &Path) -> CliResult<PathBuf> {
    fs::canonicalize(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_out(dir, e))
}

fn load_replay(path: &Path) -> CliResult<RunManifest> {
    let m = RunManifest::load(path)?;
    info!("replaying {}", path.display());
    Ok(m)
}

fn wrong_manifest(path: &Path, want: &str) -> CliError {
    CliError::usage(format!("{} is not a `{want}` manifest", path.display()))
}

fn resolve_data(a: &DataArgs, g: &Globals) -> CliResult<DataSpec> {
    let attrs = a.attrs.as_deref().ok_or_else(|| CliError::usage("--attrs is required"))?;
    if a.banks.is_empty() {
        return Err(CliError::usage("at least one --bank is required"));
    }
    let ratios = match a.split_ratios.as_deref().or(g.file.split_ratios.as_ref().map(|r| &r[..])) {
        Some([t, v, s]) => [*t, *v, *s],
        Some(_) => return Err(CliError::usage("--split-ratios takes three values")),
        None => [0.8, 0.1, 0.1],
    };
    Ok(DataSpec {
        attrs: absolute(attrs)?,
        banks: a.banks.iter().map(|b| absolute(b)).collect::<CliResult<_>>()?,
        partition: a.partition.as_deref().map(absolute).transpose()?,
        split_ratios: ratios,
        split_seed: a.split_seed.or(g.file.split_seed).unwrap_or(g.seed),
    })
}

fn utf8(bytes: Vec<u8>, path: &Path) -> CliResult<String> {
    String::from_utf8(bytes).map_err(|_| CliError::data(format!("{} is not UTF-8", path.display())))
}

fn load_dataset(spec: &DataSpec, inputs: &mut Inputs) -> CliResult<Dataset<Real>> {
    let ctx = |p: &Path| format!("{}", p.display());
    let mut table = parse_attr_file(&utf8(inputs.read(&spec.attrs)?, &spec.attrs)?)
        .map_err(|e| CliError::from(e).context(ctx(&spec.attrs)))?;
    let split = match &spec.partition {
        Some(p) => SplitSpec::Explicit(
            parse_partition_file(&utf8(inputs.read(p)?, p)?, &table).map_err(|e| CliError::from(e).context(ctx(p)))?,
        ),
        None => {
            let [train, val, test] = spec.split_ratios;
            SplitSpec::Ratios { train, val, test, seed: spec.split_seed }
        }
    };
    split_dataset(&mut table, &split)?;
    let mut banks = Vec::new();
    for p in &spec.banks {
        let bytes = inputs.read(p)?;
        banks.push(read_bank(&bytes[..]).map_err(|e| CliError::from(e).context(ctx(p)))?);
    }
    Ok(Dataset::assemble(&table, &banks)?)
}

fn cmd_train(g: &Globals, a: TrainArgs) -> CliResult<()> {
    let started = now();
    let mut inputs = Inputs::default();
    let (run, replay) = match &a.manifest {
        Some(p) => {
            let m = load_replay(p)?;
            match m.config.clone() {
                RunConfig::Train(run) => (run, Some(m)),
                _ => return Err(wrong_manifest(p, "train")),
            }
        }
        None => {
            let f = &g.file;
            let regime = a
                .regime
                .clone()
                .or_else(|| f.regime.clone())
                .ok_or_else(|| CliError::usage("--regime is required"))?;
            regime.parse::<Regime>()?;
            let train = TrainConfig {
                lr: a.lr.or(f.lr).unwrap_or(TrainConfig::default().lr),
                batch_size: a.batch_size.or(f.batch_size).unwrap_or(TrainConfig::default().batch_size),
                epochs: a.epochs.or(f.epochs).unwrap_or(TrainConfig::default().epochs),
                seed: g.seed,
                momentum: a.momentum.or(f.momentum).unwrap_or(0.0),
                weight_decay: a.weight_decay.or(f.weight_decay).unwrap_or(0.0),
                parallel: a.parallel || f.parallel.unwrap_or(false),
            };
            let mut arch = g.profile.architecture(0);
            arch.branch_hidden = a.branch_hidden.or(f.branch_hidden).unwrap_or(arch.branch_hidden);
            arch.signature_dim = a.signature_dim.or(f.signature_dim).unwrap_or(arch.signature_dim);
            let flag_trunk = match a.trunk_hidden.as_deref() {
                Some(&[a, b]) => Some([a, b]),
                Some(_) => return Err(CliError::usage("--trunk-hidden takes two values")),
                None => None,
            };
            if let Some(t) = flag_trunk.or(f.trunk_hidden) {
                arch.trunk_hidden = t;
            }
            let run = TrainRun {
                regime,
                profile: g.profile.name().to_string(),
                arch,
                train,
                data: resolve_data(&a.data, g)?,
            };
            (run, None)
        }
    };
    let regime: Regime = run.regime.parse()?;
    run.train.validate()?;
    let data = load_dataset(&run.data, &mut inputs)?;
    if let Some(m) = &replay {
        m.check_inputs(&inputs)?;
    }
    let mut run = run;
    run.arch.outputs = data.attribute_count();
    let spec = NetSpec {
        profile: run.profile.clone(),
        arch: run.arch,
    };
    info!("training {regime} on {} examples", data.train.len());
    let outcome = train_regime(&regime, &data, &spec, &run.train)?;
    let model = write_net(&outcome.net)?;
    let log = render_log_csv(&outcome.log);

    ensure_dir(&a.out_dir)?;
    let mut manifest = RunManifest::new(RunConfig::Train(run), started, inputs);
    for (name, bytes) in [("model.hnet", &model[..]), ("train_log.csv", log.as_bytes())] {
        write_atomic(&a.out_dir.join(name), bytes)?;
        manifest.output(name, bytes);
    }
    manifest.write(&a.out_dir.join("manifest.json"))?;
    info!("wrote {}", a.out_dir.join("model.hnet").display());
    Ok(())
}

fn read_model(path: &Path, inputs: &mut Inputs) -> CliResult<Net> {
    let bytes = inputs.read(path)?;
    read_net(&bytes).map_err(|e| CliError::from(e).context(path.display()))
}

fn cmd_eval(g: &Globals, a: EvalArgs) -> CliResult<()> {
    let started = now();
    let (run, replay) = match &a.manifest {
        Some(p) => {
            let m = load_replay(p)?;
            match m.config.clone() {
                RunConfig::Eval(run) => (run, Some(m)),
                _ => return Err(wrong_manifest(p, "eval")),
            }
        }
        None => {
            let model = a.model.as_deref().ok_or_else(|| CliError::usage("--model is required"))?;
            let run = EvalRun {
                model: absolute(model)?,
                split: a.split.clone(),
                kinds: a.kinds.clone(),
                data: resolve_data(&a.data, g)?,
            };
            (run, None)
        }
    };
    let mut inputs = Inputs::default();
    let net = read_model(&run.model, &mut inputs)?;
    let data = load_dataset(&run.data, &mut inputs)?;
    if let Some(m) = &replay {
        m.check_inputs(&inputs)?;
    }
    let allowed = match &run.kinds {
        Some(names) => {
            let mut m = FeatureMask::EMPTY;
            for n in names {
                m = m.with(net.kind_id(n).map_err(|_| CliError::data(format!("model has no kind `{n}`")))?);
            }
            m
        }
        None => net.full_mask(),
    };
    let masks: Vec<FeatureMask> = FeatureMask::nonempty_subsets(net.kind_count())
        .filter(|m| m.iter().all(|k| allowed.contains(k)))
        .collect();
    if masks.is_empty() {
        return Err(CliError::usage("no feature combination to evaluate"));
    }
    let split = data.split(SplitTag::parse(&run.split)?);
    let report = evaluate_masks(&net, split, &masks)?;
    let csv = report_emit(&report, ReportFormat::Csv)?;
    let md = report_emit(&report, ReportFormat::Markdown)?;
    ensure_dir(&a.out_dir)?;
    let mut manifest = RunManifest::new(RunConfig::Eval(run), started, inputs);
    for (name, text) in [("report.csv", &csv), ("report.md", &md)] {
        write_atomic(&a.out_dir.join(name), text.as_bytes())?;
        manifest.output(name, text.as_bytes());
    }
    manifest.write(&a.out_dir.join("manifest.json"))?;
    for row in &report.rows {
        info!("{} mAP {:.4}", row.label, row.mean_ap);
    }
    info!("mean over {} combinations: {:.4} ± {:.4}", report.rows.len(), report.mean, report.std);
    Ok(())
}

fn image_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("cannot read {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for e in entries {
        let p = e.map_err(|e| CliError::data(e.to_string()))?.path();
        let ext = p.extension().and_then(|x| x.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("pgm" | "ppm" | "pnm")) && p.is_file() {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn manifest_path_for(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn cmd_extract_lbp(g: &Globals, a: LbpArgs) -> CliResult<()> {
    let started = now();
    let (run, replay) = match &a.manifest {
        Some(p) => {
            let m = load_replay(p)?;
            match m.config.clone() {
                RunConfig::ExtractLbp(run) => (run, Some(m)),
                _ => return Err(wrong_manifest(p, "extract-lbp")),
            }
        }
        None => {
            let images = a.images.as_deref().ok_or_else(|| CliError::usage("--images is required"))?;
            let run = LbpRun {
                images: absolute(images)?,
                cell: a.cell.or(g.file.cell).unwrap_or(20),
                kind: a.kind.clone(),
                id_suffix: a.id_suffix.clone(),
            };
            (run, None)
        }
    };
    let mut inputs = Inputs::default();
    let files = image_files(&run.images)?;
    let mut bank: Option<FeatureBank> = None;
    let mut size = None;
    for p in &files {
        let img = parse_pnm(&inputs.read(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
        let dims = (img.width(), img.height());
        match size {
            None => size = Some(dims),
            Some(s) if s != dims => {
                return Err(CliError::data(format!(
                    "{} is {}x{}, expected {}x{} like the other images",
                    p.display(),
                    dims.0,
                    dims.1,
                    s.0,
                    s.1
                )))
            }
            _ => {}
        }
        let v = lbp_extract(&img, run.cell).map_err(|e| CliError::from(e).context(p.display()))?;
        let b = bank.get_or_insert_with(|| FeatureBank::new(&run.kind, v.values.len()));
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        b.insert(&format!("{stem}{}", run.id_suffix), &v.values)?;
    }
    if let Some(m) = &replay {
        m.check_inputs(&inputs)?;
    }
    let bank = bank.unwrap_or_else(|| FeatureBank::new(&run.kind, 0));
    info!("{} images, dim {}", bank.len(), bank.dim());
    let mut bytes = Vec::new();
    write_bank(&bank, &mut bytes)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_atomic(&a.out, &bytes)?;
    let mut manifest = RunManifest::new(RunConfig::ExtractLbp(run), started, inputs);
    manifest.output(&a.out.file_name().unwrap_or_default().to_string_lossy(), &bytes);
    manifest.write(&manifest_path_for(&a.out))
}

fn broadcast<T: Clone>(vals: Option<&Vec<T>>, n: usize, what: &str) -> CliResult<Option<Vec<T>>> {
    match vals {
        None => Ok(None),
        Some(v) if v.len() == 1 => Ok(Some(vec![v[0].clone(); n])),
        Some(v) if v.len() == n => Ok(Some(v.clone())),
        Some(v) => Err(CliError::usage(format!("--{what} has {} values for {n} views", v.len()))),
    }
}

fn synth_spec(g: &Globals, a: &SynthArgs) -> CliResult<SyntheticSpec> {
    let mut spec = SyntheticSpec::default();
    if let Some(names) = &a.kinds {
        let base = spec.views[0].clone();
        spec.views = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                spec.views.get(i).cloned().map_or_else(
                    || ViewSpec {
                        name: n.clone(),
                        mixing_seed: base.mixing_seed + i as u64,
                        ..base.clone()
                    },
                    |v| ViewSpec { name: n.clone(), ..v },
                )
            })
            .collect();
    }
    let n = spec.views.len();
    if let Some(d) = broadcast(a.view_dim.as_ref(), n, "view-dim")? {
        spec.views.iter_mut().zip(d).for_each(|(v, d)| v.dim = d);
    }
    if let Some(s) = broadcast(a.noise.as_ref(), n, "noise")? {
        spec.views.iter_mut().zip(s).for_each(|(v, s)| v.noise = s);
    }
    if let Some(w) = a.world_seed {
        spec.projection_seed = w;
        for (i, v) in spec.views.iter_mut().enumerate() {
            v.mixing_seed = w.wrapping_add(1 + i as u64);
        }
    }
    spec.latent_dim = a.latent_dim.unwrap_or(spec.latent_dim);
    spec.attributes = a.attributes.unwrap_or(spec.attributes);
    match a.counts.as_deref() {
        Some(&[t, v, s]) => spec.counts = [t, v, s],
        Some(_) => return Err(CliError::usage("--counts takes three values")),
        None => {}
    }
    spec.sample_seed = g.seed;
    spec.validate()?;
    Ok(spec)
}

fn cmd_synth(g: &Globals, a: SynthArgs) -> CliResult<()> {
    let started = now();
    let spec = match &a.manifest {
        Some(p) => match load_replay(p)?.config {
            RunConfig::Synth(run) => run.spec,
            _ => return Err(wrong_manifest(p, "synth")),
        },
        None => synth_spec(g, &a)?,
    };
    let (table, banks) = synth_generate(&spec)?;
    ensure_dir(&a.out_dir)?;
    let mut manifest = RunManifest::new(RunConfig::Synth(SynthRun { spec }), started, Inputs::default());
    let mut files = vec![
        ("attrs.txt".to_string(), render_attr_file(&table).into_bytes()),
        ("partition.txt".to_string(), render_partition_file(&table).into_bytes()),
    ];
    for b in &banks {
        let mut bytes = Vec::new();
        write_bank(b, &mut bytes)?;
        files.push((format!("{}.fbnk", b.kind()), bytes));
    }
    for (name, bytes) in &files {
        write_atomic(&a.out_dir.join(name), bytes)?;
        manifest.output(name, bytes);
    }
    manifest.write(&a.out_dir.join("manifest.json"))?;
    info!("wrote {} examples and {} banks to {}", table.len(), banks.len(), a.out_dir.display());
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CliResult<()> {
    let bytes = read_input(&a.model)?;
    let net: Net = read_net(&bytes).map_err(|e| CliError::from(e).context(a.model.display()))?;
    let server = Server::bind((a.host.as_str(), a.port), net, ServerConfig::default())?;
    // Printed (not logged) so scripts can wait for it.
    println!("listening on {}", server.local_addr()?);
    server.run();
    Ok(())
}

fn cmd_query(a: QueryArgs) -> CliResult<()> {
    let bytes = read_input(&a.encoder)?;
    let encoder = read_encoder::<Real>(&bytes).map_err(|e| CliError::from(e).context(a.encoder.display()))?;
    let mut supplied: Vec<Option<Vec<Real>>> = vec![None; encoder.kind_count()];
    let mut put = |kind: &str, values: Vec<Real>| match encoder.kind_id(kind) {
        Ok(k) => supplied[k] = Some(values),
        Err(_) => warn!("encoder has no branch for `{kind}`; ignoring its features"),
    };
    if !a.banks.is_empty() {
        let id = a.id.as_deref().ok_or_else(|| CliError::usage("--id is required with --bank"))?;
        for p in &a.banks {
            let bank = read_bank(&read_input(p)?[..]).map_err(|e| CliError::from(e).context(p.display()))?;
            let v = bank
                .get(id)
                .ok_or_else(|| CliError::data(format!("{} has no entry `{id}`", p.display())))?;
            put(bank.kind(), v.iter().map(|&x| Real::from(x)).collect());
        }
    }
    if let Some(p) = &a.image {
        let img = parse_pnm(&read_input(p)?).map_err(|e| CliError::from(e).context(p.display()))?;
        let v = lbp_extract(&img, a.cell)?;
        put(&a.image_kind, v.values.iter().map(|&x| Real::from(x)).collect());
    }
    let mask = match &a.mask {
        Some(list) => encoder.parse_mask(list)?,
        None => {
            let mut m = FeatureMask::EMPTY;
            for (k, s) in supplied.iter().enumerate() {
                if s.is_some() {
                    m = m.with(k);
                }
            }
            if m.is_empty() {
                return Err(CliError::usage("no features supplied (use --bank/--id or --image)"));
            }
            m
        }
    };
    let features: Vec<Option<&[Real]>> = supplied.iter().map(|s| s.as_deref()).collect();
    let endpoint = a.endpoint.clone().unwrap_or_else(|| format!("127.0.0.1:{}", a.port));
    let scores = client_query(&features, mask, &encoder, endpoint.as_str())?;
    if a.json {
        println!("{}", serde_json::to_string(&scores).map_err(|e| CliError::runtime(e.to_string()))?);
    } else {
        for (i, s) in scores.iter().enumerate() {
            println!("{i}\t{s}");
        }
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> CliResult<()> {
    let bytes = read_input(&a.model)?;
    let net: Net = read_net(&bytes).map_err(|e| CliError::from(e).context(a.model.display()))?;
    let kinds: Option<Vec<&str>> = a.kinds.as_ref().map(|k| k.iter().map(String::as_str).collect());
    let out = write_encoder(&net, kinds.as_deref())?;
    write_atomic(&a.out, &out)
}
