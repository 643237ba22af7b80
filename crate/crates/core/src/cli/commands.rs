use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    AugmentArgs, Cli, Command, Console, EnergyArgs, EvalArgs, GlobalArgs, ProtocolArgs,
    RegressArgs, SweepArgs, SynthArgs, TrainArgs, VoxelizeArgs,
};
use crate::augment::{apply_pipeline, AugmentSpec, AugmentStep, Eda};
use crate::bench::{
    ols_regress, run_cv, run_fold, run_specific_eda, sweep_common_eda, Dataset, FoldReport,
    RunLedger, Selection, Specific, SweepResult,
};
use crate::energy::EnergyConstants;
use crate::events::{
    load_events, save_events, voxelize, DatasetManifest, EventStream, SpikeTensor, SynthParams,
    Template,
};
use crate::experiment::{measure_energy, DatasetSource, ExperimentFile};
use crate::snn::{evaluate, load_checkpoint, save_checkpoint, Checkpoint, NetworkParams, Plan};
use crate::{Error, Result};

pub(super) fn dispatch(cli: Cli, console: &Console) -> Result<()> {
    let g = &cli.global;
    if g.jobs == Some(0) {
        return Err(Error::InvalidArgument("--jobs must be positive".into()));
    }
    match &cli.command {
        Command::Synth(a) => synth(g, a, console),
        Command::Voxelize(a) => voxelize_cmd(g, a, console),
        Command::Augment(a) => augment(g, a, console),
        Command::Train(a) => train(g, a, console),
        Command::Eval(a) => eval(g, a, console),
        Command::Sweep(a) => sweep(g, a, console),
        Command::Regress(a) => regress(g, a, console),
        Command::Energy(a) => energy(g, a, console),
    }
}

fn load_experiment(g: &GlobalArgs, console: &Console) -> Result<Option<ExperimentFile>> {
    let Some(path) = &g.config else {
        return Ok(None);
    };
    let mut e = ExperimentFile::load(path)?;
    if let Some(seed) = g.seed {
        console.info(&format!("override: seed = {seed} (file: {})", e.seed));
        e.seed = seed;
    }
    if let Some(jobs) = g.jobs {
        console.info(&format!("override: jobs = {jobs} (file: {:?})", e.jobs));
        e.jobs = Some(jobs);
    }
    if let Some(out) = &g.out {
        console.info(&format!(
            "override: output = {} (file: {})",
            out.display(),
            e.output.display()
        ));
        e.output = out.clone();
    }
    Ok(Some(e))
}

fn require_experiment(g: &GlobalArgs, console: &Console, command: &str) -> Result<ExperimentFile> {
    load_experiment(g, console)?.ok_or_else(|| {
        Error::InvalidArgument(format!("`{command}` needs an experiment file (--config)"))
    })
}

fn apply_protocol(e: &mut ExperimentFile, p: &ProtocolArgs, console: &Console) -> Result<()> {
    if let Some(m) = p.model {
        console.info(&format!(
            "override: model = {} (file: {})",
            m.name(),
            e.model.name()
        ));
        e.model = m;
    }
    if let Some(k) = p.folds {
        console.info(&format!("override: cv.folds = {k} (file: {})", e.cv.folds));
        e.cv.folds = k;
    }
    if let Some(n) = p.epochs {
        console.info(&format!(
            "override: train.epochs = {n} (file: {})",
            e.train.epochs
        ));
        e.train.epochs = n;
    }
    e.check()
}

fn log_defaults(e: &ExperimentFile, console: &Console) {
    let data_seed = match &e.dataset {
        DatasetSource::Synthetic { seed, .. } => format!(", dataset seed {seed}"),
        DatasetSource::Manifest { .. } => String::new(),
    };
    console.info(&format!(
        "seed {}, augment seed {}{data_seed}, {} job(s)",
        e.seed,
        e.augment.seed,
        e.jobs()
    ));
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

/// Writes `<stem>.json` and `<stem>.txt` under `dir`.
fn write_report<T: Serialize>(dir: &Path, stem: &str, value: &T, text: &str) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join(format!("{stem}.json")), value)?;
    write_file(&dir.join(format!("{stem}.txt")), text.as_bytes())
}

fn finish_ledger(dir: &Path, mut ledger: RunLedger, console: &Console) -> Result<()> {
    ledger.finish();
    let path = dir.join(format!("{}.ledger.json", ledger.command));
    write_json(&path, &ledger)?;
    console.info(&format!(
        "wrote {} ({:.1}s)",
        path.display(),
        ledger.total_seconds
    ));
    Ok(())
}

fn seeded_ledger(command: &str, e: &ExperimentFile) -> RunLedger {
    let mut l = RunLedger::start(command, e, e.jobs());
    l.seed("master", e.seed);
    l.seed("augment", e.augment.seed);
    if let DatasetSource::Synthetic { seed, .. } = &e.dataset {
        l.seed("dataset", *seed);
    }
    l
}

/// Templates in the order `synth --classes` takes them.
fn template_pool() -> Vec<Template> {
    vec![
        Template::ExpandingRing,
        Template::ContractingRing,
        Template::SequentialPair { top_first: true },
        Template::SequentialPair { top_first: false },
        Template::TranslatingBar { angle_deg: 0.0 },
        Template::TranslatingBar { angle_deg: 90.0 },
        Template::TranslatingBar { angle_deg: 180.0 },
        Template::TranslatingBar { angle_deg: 270.0 },
        Template::Static,
    ]
}

fn synth(g: &GlobalArgs, a: &SynthArgs, console: &Console) -> Result<()> {
    let e = load_experiment(g, console)?;
    let (mut params, mut spc, mut seed) = match e.as_ref().map(|e| &e.dataset) {
        Some(DatasetSource::Synthetic {
            params,
            samples_per_class,
            seed,
        }) => (params.clone(), *samples_per_class, *seed),
        _ => (SynthParams::default(), 100, 0),
    };
    if let Some(c) = a.classes {
        let pool = template_pool();
        if c == 0 || c > pool.len() {
            return Err(Error::InvalidArgument(format!(
                "--classes must lie in 1..={}",
                pool.len()
            )));
        }
        params.templates = pool[..c].to_vec();
    }
    if let Some(n) = a.samples_per_class {
        spc = n;
    }
    if spc == 0 {
        return Err(Error::InvalidArgument(
            "--samples-per-class must be positive".into(),
        ));
    }
    params.width = a.width.unwrap_or(params.width);
    params.height = a.height.unwrap_or(params.height);
    params.duration_us = a.duration_us.unwrap_or(params.duration_us);
    params.events_per_sample = a.events.unwrap_or(params.events_per_sample);
    params.check()?;
    if let Some(s) = g.seed {
        seed = s;
    }
    console.info(&format!("dataset seed {seed}"));
    let dir = g
        .out
        .clone()
        .or_else(|| e.as_ref().map(|e| e.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    create_dir(&dir)?;
    let m = DatasetManifest::write_synthetic(&dir, &params, spc, seed)?;
    console.out(&format!(
        "{} samples, {} classes ({}), {}x{}, written to {}\n",
        m.samples.len(),
        m.classes,
        m.class_names.join(", "),
        m.width,
        m.height,
        dir.display()
    ));
    Ok(())
}

#[derive(Serialize)]
struct BinSummary {
    bin: usize,
    on: usize,
    off: usize,
}

#[derive(Serialize)]
struct VoxelPreview {
    bins: usize,
    height: usize,
    width: usize,
    events: usize,
    active_cells: usize,
    density: f64,
    per_bin: Vec<BinSummary>,
}

/// One character per block of pixels: `+` positive only, `-` negative only,
/// `*` both, `.` none.
fn ascii_frame(t: &SpikeTensor, bin: usize, max_cols: usize) -> String {
    let step = t.width().div_ceil(max_cols).max(1);
    let mut s = String::new();
    for by in (0..t.height()).step_by(step) {
        for bx in (0..t.width()).step_by(step) {
            let mut ch = [false; 2];
            for y in by..(by + step).min(t.height()) {
                for x in bx..(bx + step).min(t.width()) {
                    for (c, seen) in ch.iter_mut().enumerate() {
                        *seen |= t.get(bin, c, y, x) != 0;
                    }
                }
            }
            // channel 0 holds positive events, channel 1 negative ones
            s.push(match ch {
                [false, false] => '.',
                [true, false] => '+',
                [false, true] => '-',
                [true, true] => '*',
            });
        }
        s.push('\n');
    }
    s
}

fn read_stream(input: &Path, sample: usize) -> Result<EventStream> {
    if input.is_dir() || input.extension().is_some_and(|x| x == "json") {
        let m = DatasetManifest::load(input)?;
        let entry = m.samples.get(sample).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "sample {sample} out of range ({} samples)",
                m.samples.len()
            ))
        })?;
        load_events(m.root.join(&entry.file))
    } else {
        load_events(input)
    }
}

fn voxelize_cmd(g: &GlobalArgs, a: &VoxelizeArgs, console: &Console) -> Result<()> {
    let e = load_experiment(g, console)?;
    let bins = a
        .bins
        .or(e.as_ref().map(|e| e.network.time_bins))
        .unwrap_or(6);
    let stream = read_stream(&a.input, a.sample)?;
    let t = voxelize(&stream, bins)?;
    let frame = t.height() * t.width();
    let per_bin: Vec<BinSummary> = (0..bins)
        .map(|b| {
            let d = t.bin(b);
            BinSummary {
                bin: b,
                on: d[..frame].iter().filter(|&&v| v != 0).count(),
                off: d[frame..].iter().filter(|&&v| v != 0).count(),
            }
        })
        .collect();
    let preview = VoxelPreview {
        bins,
        height: t.height(),
        width: t.width(),
        events: stream.len(),
        active_cells: t.count_ones(),
        density: t.density(),
        per_bin,
    };
    let mut text = format!(
        "{} events -> {} bins x 2 x {} x {}, {} active cells (density {:.5})\n\n{:>4} {:>8} {:>8}\n",
        preview.events, bins, preview.height, preview.width, preview.active_cells, preview.density, "bin", "on", "off"
    );
    for b in &preview.per_bin {
        text.push_str(&format!("{:>4} {:>8} {:>8}\n", b.bin, b.on, b.off));
    }
    for b in 0..bins {
        text.push_str(&format!("\nbin {b}\n{}", ascii_frame(&t, b, 64)));
    }
    console.out(&text);
    if let Some(dir) = &g.out {
        write_report(dir, "voxels", &preview, &text)?;
    }
    Ok(())
}

fn augment(g: &GlobalArgs, a: &AugmentArgs, console: &Console) -> Result<()> {
    let e = load_experiment(g, console)?;
    let spec = if a.eda.is_empty() {
        let e = e.as_ref().ok_or_else(|| {
            Error::InvalidArgument(
                "give --eda or an experiment file with an `augment` section".into(),
            )
        })?;
        e.augment.clone()
    } else {
        let steps = a
            .eda
            .iter()
            .map(|name| {
                serde_json::from_value::<Eda>(serde_json::json!({ "kind": name.to_lowercase() }))
                    .map(AugmentStep::always)
                    .map_err(|_| {
                        Error::InvalidArgument(format!(
                            "unknown transform `{name}` (crop, hflip, noise, polflip, reverse, eventdrop, mirror)"
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        AugmentSpec::new(steps, g.seed.unwrap_or(0))
    };
    console.info(&format!("augment seed {}", spec.seed));
    let stream = load_events(&a.input)?;
    let out = apply_pipeline(&stream, &spec, a.sample_index)?;
    let dir = g
        .out
        .clone()
        .or_else(|| e.as_ref().map(|e| e.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    create_dir(&dir)?;
    let path = dir.join("augmented.evt");
    save_events(&out, &path)?;
    console.out(&format!(
        "pipeline: {}\n{} -> {} events, written to {}\n",
        spec.names().join(" -> "),
        stream.len(),
        out.len(),
        path.display()
    ));
    Ok(())
}

fn train(g: &GlobalArgs, a: &TrainArgs, console: &Console) -> Result<()> {
    let mut e = require_experiment(g, console, "train")?;
    apply_protocol(&mut e, &a.protocol, console)?;
    log_defaults(&e, console);
    let dataset = e.load_dataset()?;
    let spec = e.cv_spec(&dataset)?;
    let folds = spec.fold_plan(dataset.len())?;
    if a.fold >= folds.k {
        return Err(Error::InvalidArgument(format!(
            "--fold {} out of range (k = {})",
            a.fold, folds.k
        )));
    }
    let dir = e.output.clone();
    create_dir(&dir)?;
    let mut ledger = seeded_ledger("train", &e);
    let metrics_path = dir.join("metrics.jsonl");
    let file = File::create(&metrics_path).map_err(|err| Error::io(&metrics_path, err))?;
    let mut metrics = BufWriter::new(file);
    let mut write_err = None;
    let out = run_fold(&dataset, &spec, &folds, a.fold, |r| {
        console.info(&format!(
            "epoch {:>3}  lr {:.5}  loss {:.4}  train {:.4}  val {:.4}",
            r.epoch, r.lr, r.loss, r.train_accuracy, r.val_accuracy
        ));
        let line = serde_json::to_string(r).expect("epoch records serialize");
        if let Err(err) = writeln!(metrics, "{line}") {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = write_err {
        return Err(Error::io(&metrics_path, err));
    }
    metrics
        .flush()
        .map_err(|err| Error::io(&metrics_path, err))?;
    ledger.time(format!("fold {}", a.fold), out.seconds);
    save_checkpoint(
        &dir.join("checkpoint.ckpt"),
        &Checkpoint {
            kind: spec.model,
            config: spec.network.clone(),
            params: out.params,
        },
    )?;
    let r = &out.result;
    let text = format!(
        "model: {}\nfold {} of {}: accuracy {:.4} (best epoch {}), {} epochs, {} train / {} test samples\n",
        spec.model.name(),
        r.fold,
        folds.k,
        r.accuracy,
        r.best_epoch.map_or("-".into(), |b| b.to_string()),
        r.epochs_run,
        r.train_size,
        r.test_size
    );
    write_report(&dir, "fold", r, &text)?;
    console.out(&text);
    finish_ledger(&dir, ledger, console)
}

fn fold_samples(
    dataset: &Dataset,
    e: &ExperimentFile,
    fold: usize,
    bins: usize,
) -> Result<Vec<(SpikeTensor, usize)>> {
    let folds = crate::bench::kfold_split(dataset.len(), e.cv.folds, e.seed)?;
    if fold >= folds.k {
        return Err(Error::InvalidArgument(format!(
            "--fold {fold} out of range (k = {})",
            folds.k
        )));
    }
    let test = match e.cv.selection {
        Selection::HeldOut => folds.train_test(fold).1,
        Selection::Nested => folds.train_val_test(fold).2,
    };
    dataset.voxelized(&test, bins)
}

fn load_matching_checkpoint(path: &Path, dataset: &Dataset) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    let plan = Plan::new(&ck.config, ck.kind)?;
    if plan.classes != dataset.classes()
        || (plan.height, plan.width) != (dataset.height as usize, dataset.width as usize)
    {
        return Err(Error::Config(format!(
            "{}: checkpoint expects {} classes at {}x{}, dataset has {} at {}x{}",
            path.display(),
            plan.classes,
            plan.width,
            plan.height,
            dataset.classes(),
            dataset.width,
            dataset.height
        )));
    }
    Ok(ck)
}

#[derive(Serialize)]
struct CheckpointEval {
    model: crate::snn::ModelKind,
    fold: usize,
    samples: usize,
    accuracy: f64,
    loss: f64,
    predictions: Vec<usize>,
}

fn eval(g: &GlobalArgs, a: &EvalArgs, console: &Console) -> Result<()> {
    let mut e = require_experiment(g, console, "eval")?;
    apply_protocol(&mut e, &a.protocol, console)?;
    log_defaults(&e, console);
    let dataset = e.load_dataset()?;
    let dir = e.output.clone();
    if let Some(path) = &a.checkpoint {
        let ck = load_matching_checkpoint(path, &dataset)?;
        let plan = Plan::new(&ck.config, ck.kind)?;
        let samples = fold_samples(&dataset, &e, a.fold, plan.time_bins)?;
        let r = evaluate(&plan, &ck.params, &samples, e.train.batch_size)?;
        let report = CheckpointEval {
            model: ck.kind,
            fold: a.fold,
            samples: samples.len(),
            accuracy: r.accuracy,
            loss: r.loss,
            predictions: r.predictions,
        };
        let text = format!(
            "model: {}\nfold {}: accuracy {:.4}, loss {:.4} over {} samples\n",
            ck.kind.name(),
            a.fold,
            report.accuracy,
            report.loss,
            report.samples
        );
        write_report(&dir, "eval", &report, &text)?;
        console.out(&text);
        return Ok(());
    }
    let spec = e.cv_spec(&dataset)?;
    create_dir(&dir)?;
    let mut ledger = seeded_ledger("eval", &e);
    let (report, outcomes) = run_cv(&dataset, &spec, e.jobs(), &|l| console.info(&l))?;
    for o in &outcomes {
        ledger.time(format!("fold {}", o.result.fold), o.seconds);
    }
    let text = report.to_text();
    write_report(&dir, "report", &report, &text)?;
    console.out(&text);
    finish_ledger(&dir, ledger, console)
}

fn sweep(g: &GlobalArgs, a: &SweepArgs, console: &Console) -> Result<()> {
    let mut e = require_experiment(g, console, "sweep")?;
    apply_protocol(&mut e, &a.protocol, console)?;
    log_defaults(&e, console);
    let dataset = e.load_dataset()?;
    let base = e.cv_spec(&dataset)?;
    let dir = e.output.clone();
    create_dir(&dir)?;
    let mut ledger = seeded_ledger("sweep", &e);
    let started = std::time::Instant::now();
    let models = &e.sweep.models;
    let result = sweep_common_eda(
        &dataset,
        &base,
        models,
        e.sweep.probability,
        e.jobs(),
        &|l| console.info(&l),
    )?;
    ledger.time("common sweep", started.elapsed().as_secs_f64());
    let text = result.to_text();
    write_report(&dir, "sweep", &result, &text)?;
    console.out(&text);
    console.info(&format!("{} records", result.records.len()));
    if a.specific || e.sweep.specific {
        for &m in models {
            let best = result
                .best_combination(m)
                .expect("complete sweep has a best combination");
            let spec = crate::bench::CvSpec {
                model: m,
                ..base.clone()
            };
            let mut reports: Vec<FoldReport> = Vec::new();
            for which in Specific::ALL {
                let started = std::time::Instant::now();
                reports.push(run_specific_eda(
                    &dataset,
                    &spec,
                    best,
                    which,
                    e.sweep.probability,
                    e.jobs(),
                    &|l| console.info(&l),
                )?);
                ledger.time(
                    format!("{} {}", m.name(), which.name()),
                    started.elapsed().as_secs_f64(),
                );
            }
            let mut text = String::new();
            for (which, r) in Specific::ALL.iter().zip(&reports) {
                text.push_str(&format!("== {} ==\n{}\n", which.name(), r.to_text()));
            }
            write_report(&dir, &format!("specific_{}", m.name()), &reports, &text)?;
            console.out(&text);
        }
    }
    finish_ledger(&dir, ledger, console)
}

fn regress(g: &GlobalArgs, a: &RegressArgs, console: &Console) -> Result<()> {
    let text = std::fs::read_to_string(&a.sweep).map_err(|e| Error::io(&a.sweep, e))?;
    let sweep: SweepResult = serde_json::from_str(&text)
        .map_err(|e| Error::Config(e.to_string()).context(a.sweep.display().to_string()))?;
    sweep.check()?;
    let models = match a.model {
        Some(m) => vec![m],
        None => sweep.models(),
    };
    let reports = models
        .iter()
        .map(|&m| ols_regress(&sweep, m))
        .collect::<Result<Vec<_>>>()?;
    let text: String = reports.iter().map(|r| r.to_text() + "\n").collect();
    let dir = match (&g.out, &g.config) {
        (Some(d), _) => d.clone(),
        (None, Some(_)) => require_experiment(g, console, "regress")?.output,
        (None, None) => a.sweep.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    write_report(&dir, "regression", &reports, &text)?;
    console.out(&text);
    Ok(())
}

fn energy(g: &GlobalArgs, a: &EnergyArgs, console: &Console) -> Result<()> {
    let constants = EnergyConstants::CMOS_45NM;
    constants.check()?;
    let Some(e) = load_experiment(g, console)? else {
        if a.checkpoint.is_some() || a.fold.is_some() {
            return Err(Error::InvalidArgument(
                "energy estimation needs an experiment file (--config)".into(),
            ));
        }
        console.out(&constants.table());
        return Ok(());
    };
    let dataset = e.load_dataset()?;
    let (cfg, params, trained) = match &a.checkpoint {
        Some(path) => {
            let ck = load_matching_checkpoint(path, &dataset)?;
            (ck.config, ck.params, true)
        }
        None => {
            let cfg = e.network_config(&dataset)?;
            let plan = Plan::new(&cfg, crate::snn::ModelKind::Spiking)?;
            let seed = crate::rng::derive_seed(e.seed, &[1, 0]);
            (cfg, NetworkParams::init(&plan, seed), false)
        }
    };
    let bins = cfg.input.time_bins;
    let samples: Vec<SpikeTensor> = match a.fold {
        Some(f) => fold_samples(&dataset, &e, f, bins)?,
        None => dataset.voxelized(&(0..dataset.len()).collect::<Vec<_>>(), bins)?,
    }
    .into_iter()
    .map(|s| s.0)
    .collect();
    let charging = a.charging.unwrap_or(e.energy.charging);
    let mut report = measure_energy(&cfg, &params, &samples, e.train.batch_size, charging)?;
    if !trained {
        report
            .notes
            .push("weights are freshly initialized, not trained".into());
    }
    let text = report.to_text();
    write_report(&e.output, "energy", &report, &text)?;
    console.out(&text);
    Ok(())
}
