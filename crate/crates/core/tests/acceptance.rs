//! Acceptance gate: runs every criterion and prints one PASS/FAIL line each.
//! Exits non-zero if any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use evsnn::augment::{
    apply_drop, crop, crop_to, draw_crop_window, draw_drop_strategy, hflip, mirror_side, polflip,
    reverse, DropParams, DropStrategy, Side,
};
use evsnn::bench::{
    combination_spec, ols_regress, run_cv, sweep_common_eda, t_two_sided_p, CvConfig, CvSpec,
    Dataset, FoldOutcome, FoldReport, SweepResult,
};
use evsnn::energy::{
    assemble, flops_ann, Charging, EnergyConstants, EnergyReport, RateSource, RatedLayer,
    REFERENCE_RATIO_BAND,
};
use evsnn::events::{voxelize, EventStream, SpikeTensor, SynthParams};
use evsnn::experiment::measure_energy;
use evsnn::rng;
use evsnn::snn::neuron::{if_forward, IfParams};
use evsnn::snn::{
    check_gradients, if_step, surrogate, surrogate_grad, InputTiming, ModelKind, NetworkConfig,
    NetworkParams, Plan, ResetMode, SewFunction, SpikeFn, SynapseRole, SynapseShape, SynapticLayer,
    Tensor, TrainConfig,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

mod common;

type Check = Result<String, String>;
type Criterion = (u8, &'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

// ---------------------------------------------------------------- 1

fn criterion_1() -> Check {
    ensure!(surrogate(0.0) == 0.5, "σ(0) = {}", surrogate(0.0));
    ensure!(
        surrogate_grad(0.0) == 1.0,
        "σ'(0) = {}",
        surrogate_grad(0.0)
    );
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, f) in [SewFunction::Add, SewFunction::And, SewFunction::Iand]
        .into_iter()
        .enumerate()
    {
        let cfg = common::small_net(f);
        let plan = Plan::new(&cfg, ModelKind::Spiking).map_err(|e| e.to_string())?;
        let params = NetworkParams::<f64>::init(&plan, 11 + i as u64);
        let mut r = common::rng(100 + i as u64);
        let a = common::random_input(&mut r, 4, 8, 8, 0.3);
        let b = common::random_input(&mut r, 4, 8, 8, 0.3);
        let g = check_gradients(&plan, &params, &[&a, &b], &[1, 2], 1e-5, 1e-6)
            .map_err(|e| e.to_string())?;
        ensure!(
            g.max_rel_error < 1e-4,
            "{f:?}: relative error {:.3e} at {}",
            g.max_rel_error,
            g.worst
        );
        worst = worst.max(g.max_rel_error);
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "gradient checks took {secs:.1}s");
    Ok(format!(
        "σ(0)=0.5, σ'(0)=1; max relative FD error {worst:.2e} (ADD/AND/IAND) in {secs:.2}s"
    ))
}

// ---------------------------------------------------------------- 2

/// Reference IF neuron in integer units of 1/64 (θ = 64 units).
fn brute_if(inputs: &[i64], theta: i64) -> (Vec<bool>, Vec<i64>) {
    let mut u = 0;
    let mut spikes = Vec::new();
    let mut pots = Vec::new();
    for &x in inputs {
        u += x;
        let s = u >= theta;
        if s {
            u -= theta;
        }
        spikes.push(s);
        pots.push(u);
    }
    (spikes, pots)
}

fn criterion_2() -> Check {
    // hand traces
    ensure!(
        if_step(0.0, 1.5, 1.0, ResetMode::Soft) == (true, 0.5),
        "U=0, I=1.5"
    );
    let (s1, u1) = if_step(0.0, 0.4, 1.0, ResetMode::Soft);
    let (s2, u2) = if_step(u1, 0.4, 1.0, ResetMode::Soft);
    let (s3, u3) = if_step(u2, 0.4, 1.0, ResetMode::Soft);
    ensure!(!s1 && !s2 && s3, "0.4 x3 spikes {s1} {s2} {s3}");
    ensure!(
        u2 == 0.8 && (u3 - 0.2).abs() <= 4.0 * f64::EPSILON,
        "0.4 x3 potentials {u2} {u3}"
    );
    let mut u = 0.0;
    for _ in 0..1000 {
        let (s, next) = if_step(u, 0.0, 1.0, ResetMode::Soft);
        ensure!(!s, "spike on zero input");
        u = next;
    }
    ensure!(u == 0.0, "potential drifted to {u}");

    // charge conservation on 10 000 random traces, scalar and layer paths
    const TRACES: usize = 10_000;
    const STEPS: usize = 32;
    const UNIT: f64 = 64.0;
    let mut r = common::rng(2);
    let traces: Vec<Vec<i64>> = (0..TRACES)
        .map(|_| {
            let len = r.random_range(1..=STEPS);
            (0..len)
                .map(|_| r.random_range(0..=2 * UNIT as i64))
                .collect()
        })
        .collect();
    for (i, tr) in traces.iter().enumerate() {
        let (spikes, pots) = brute_if(tr, UNIT as i64);
        let mut u = 0.0;
        for (t, &x) in tr.iter().enumerate() {
            let (s, next) = if_step(u, x as f64 / UNIT, 1.0, ResetMode::Soft);
            ensure!(
                s == spikes[t] && next * UNIT == pots[t] as f64,
                "trace {i} step {t} differs from the reference"
            );
            u = next;
        }
        let total: i64 = tr.iter().sum();
        let n = spikes.iter().filter(|&&s| s).count() as i64;
        ensure!(
            n <= total / UNIT as i64,
            "trace {i}: {n} spikes from charge {}",
            total as f64 / UNIT
        );
        ensure!(
            u * UNIT == (total - n * UNIT as i64) as f64,
            "trace {i}: charge not conserved"
        );
    }
    // the layer scan over all traces at once, zero-padded to STEPS
    let mut data = vec![0.0f64; STEPS * TRACES];
    for (b, tr) in traces.iter().enumerate() {
        for (t, &x) in tr.iter().enumerate() {
            data[t * TRACES + b] = x as f64 / UNIT;
        }
    }
    let p = IfParams {
        threshold: 1.0,
        reset: ResetMode::Soft,
        timing: InputTiming::SameStep,
        spike_fn: SpikeFn::Heaviside,
    };
    let (_, s) = if_forward(&Tensor::from_vec(1, STEPS * TRACES, 1, 1, data), STEPS, &p);
    for (b, tr) in traces.iter().enumerate() {
        let mut padded = tr.clone();
        padded.resize(STEPS, 0);
        let (spikes, _) = brute_if(&padded, UNIT as i64);
        for (t, &want) in spikes.iter().enumerate() {
            let got = s.data[t * TRACES + b];
            ensure!(
                got == if want { 1.0 } else { 0.0 },
                "layer trace {b} step {t}"
            );
        }
    }
    Ok(format!("3 hand traces exact; {TRACES} random traces match the reference simulator and conserve charge"))
}

// ---------------------------------------------------------------- 3

fn hreflect(t: &SpikeTensor) -> SpikeTensor {
    let mut o = SpikeTensor::zeros(t.bins(), t.height(), t.width());
    for b in 0..t.bins() {
        for c in 0..2 {
            for y in 0..t.height() {
                for x in 0..t.width() {
                    if t.get(b, c, y, x) != 0 {
                        o.set(b, c, y, t.width() - 1 - x);
                    }
                }
            }
        }
    }
    o
}

fn swap_channels(t: &SpikeTensor) -> SpikeTensor {
    let mut o = SpikeTensor::zeros(t.bins(), t.height(), t.width());
    for b in 0..t.bins() {
        for c in 0..2 {
            for y in 0..t.height() {
                for x in 0..t.width() {
                    if t.get(b, c, y, x) != 0 {
                        o.set(b, 1 - c, y, x);
                    }
                }
            }
        }
    }
    o
}

fn valid(s: &EventStream) -> bool {
    s.validate().is_empty()
}

/// `sub` is `sup` with some events removed, order preserved.
fn is_subsequence(sub: &EventStream, sup: &EventStream) -> bool {
    let mut it = sup.events.iter();
    sub.events.iter().all(|e| it.any(|f| f == e))
}

fn criterion_3() -> Check {
    const N: usize = 1000;
    let started = Instant::now();
    let mut r = common::rng(3);
    for i in 0..N {
        let s = common::random_stream(&mut r);
        let bins = r.random_range(1..=8usize);
        let v = voxelize(&s, bins).map_err(|e| e.to_string())?;
        let h = hflip(&s);
        ensure!(valid(&h) && hflip(&h) == s, "hflip involution, stream {i}");
        ensure!(
            voxelize(&h, bins).unwrap() == hreflect(&v),
            "hflip frame oracle, stream {i}"
        );
        let p = polflip(&s);
        ensure!(
            valid(&p) && polflip(&p) == s,
            "polflip involution, stream {i}"
        );
        ensure!(
            voxelize(&p, bins).unwrap() == swap_channels(&v),
            "polflip frame oracle, stream {i}"
        );
        let rv = reverse(&s);
        ensure!(
            valid(&rv) && reverse(&rv) == s,
            "reverse involution, stream {i}"
        );
    }
    // reverse frame oracle: durations divisible by T keep every event off bin boundaries
    for i in 0..N {
        let bins = r.random_range(1..=8usize);
        let dur = bins as u64 * r.random_range(1..=500u64);
        let (w, h) = (r.random_range(1..=16u16), r.random_range(1..=16u16));
        let t0 = r.random_range(0..1000u64);
        let s = common::stream_with(&mut r, w, h, t0, dur);
        let order: Vec<usize> = (0..bins).rev().collect();
        let want = voxelize(&s, bins).unwrap().permute_bins(&order).unwrap();
        ensure!(
            voxelize(&reverse(&s), bins).unwrap() == want,
            "reverse frame oracle, stream {i}"
        );
    }
    let mut counts = [0usize; 4];
    for i in 0..N {
        let s = common::random_stream(&mut r);
        // crop: the drawn window, bounds, never creates events
        let mut g = rng::stream(i as u64, &[0]);
        let window = draw_crop_window(&s, &mut g.clone(), 0.3);
        let c = crop(&s, &mut g, 0.3);
        ensure!(
            c == crop_to(&s, window),
            "crop differs from its own window, draw {i}"
        );
        ensure!(
            valid(&c) && c.len() <= s.len(),
            "crop output invalid, draw {i}"
        );
        let inside = s
            .events
            .iter()
            .filter(|e| window.contains(e.x, e.y))
            .count();
        ensure!(
            c.len() == inside,
            "crop kept {} of {inside} in-window events, draw {i}",
            c.len()
        );
        ensure!(
            c.events.iter().all(|e| e.x < s.width && e.y < s.height),
            "crop coordinates out of bounds, draw {i}"
        );
        // eventdrop: per-strategy post-conditions
        let mut g = rng::stream(i as u64, &[1]);
        let strategy = draw_drop_strategy(&s, &mut g, &DropParams::default());
        let d = apply_drop(&s, strategy, &mut g);
        ensure!(
            valid(&d) && is_subsequence(&d, &s),
            "eventdrop created events, draw {i}"
        );
        match strategy {
            DropStrategy::Identity => {
                counts[0] += 1;
                ensure!(d == s, "identity strategy changed the stream, draw {i}");
            }
            DropStrategy::Time { start, len } => {
                counts[1] += 1;
                let outside = |t: u64| t < start || t >= start + len;
                ensure!(
                    d.events.iter().all(|e| outside(e.t)),
                    "event survived inside the dropped interval, draw {i}"
                );
                let kept = s.events.iter().filter(|e| outside(e.t)).count();
                ensure!(
                    kept == d.len(),
                    "events outside the interval were dropped, draw {i}"
                );
            }
            DropStrategy::Area(w) => {
                counts[2] += 1;
                ensure!(
                    d.events.iter().all(|e| !w.contains(e.x, e.y)),
                    "event survived inside the area, draw {i}"
                );
                let kept = s.events.iter().filter(|e| !w.contains(e.x, e.y)).count();
                ensure!(
                    kept == d.len(),
                    "events outside the area were dropped, draw {i}"
                );
            }
            DropStrategy::Random { prob } => {
                counts[3] += 1;
                ensure!(
                    (0.05..=0.5).contains(&prob),
                    "drop probability {prob}, draw {i}"
                );
            }
        }
        // mirror: symmetric output, source side kept
        let side = if i % 2 == 0 { Side::Left } else { Side::Right };
        let m = mirror_side(&s, side);
        ensure!(valid(&m), "mirror output invalid, draw {i}");
        let src: Vec<_> = s
            .events
            .iter()
            .filter(|e| side.contains(e.x, s.width))
            .collect();
        ensure!(
            is_subsequence(&s.replace_events(src.iter().map(|e| **e).collect()), &m),
            "mirror lost source events, draw {i}"
        );
        let center = if s.width % 2 == 1 {
            src.iter().filter(|e| e.x == s.width / 2).count()
        } else {
            0
        };
        ensure!(
            m.len() == 2 * src.len() - center,
            "mirror emitted {} events for {} source events, draw {i}",
            m.len(),
            src.len()
        );
        let mv = voxelize(&m, 4).unwrap();
        ensure!(
            mv == hreflect(&mv),
            "mirrored frames are not symmetric, draw {i}"
        );
    }
    ensure!(
        counts.iter().all(|&c| c > 150),
        "eventdrop strategies drawn unevenly: {counts:?}"
    );
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!(
        "involutions and frame oracles on {N} streams each; crop/eventdrop {counts:?}/mirror post-conditions on {N} draws; {secs:.2}s"
    ))
}

// ---------------------------------------------------------------- 4

fn conv(kernel: usize, o: usize, c_in: usize, c_out: usize) -> SynapseShape {
    SynapseShape::Conv {
        kernel,
        out_h: o,
        out_w: o,
        c_in,
        c_out,
    }
}

fn rated(shapes: &[SynapseShape], rates: &[f64]) -> Vec<RatedLayer> {
    shapes
        .iter()
        .zip(rates)
        .enumerate()
        .map(|(i, (s, &rate))| RatedLayer {
            layer: SynapticLayer {
                name: format!("l{i}"),
                role: SynapseRole::Encoder,
                shape: *s,
            },
            rate,
            source: RateSource::Input,
        })
        .collect()
}

fn criterion_4() -> Check {
    ensure!(flops_ann(&conv(3, 4, 2, 8)) == 2304, "conv k3 O4 2→8");
    ensure!(
        flops_ann(&SynapseShape::Linear {
            c_in: 512,
            c_out: 7
        }) == 3584,
        "linear 512→7"
    );
    ensure!(flops_ann(&conv(1, 1, 1, 1)) == 1, "1x1 conv");
    let c = EnergyConstants::CMOS_45NM;
    ensure!(
        (c.e_mult, c.e_add, c.e_mac, c.e_ac) == (3.7, 0.9, 4.6, 0.9),
        "constants {c:?}"
    );
    ensure!(
        (c.e_mac - (c.e_mult + c.e_add)).abs() < 1e-12 && c.check().is_ok(),
        "E_MAC identity"
    );
    let table = c.table();
    for line in [
        "MULT       3.7",
        "ADD        0.9",
        "MAC        4.6",
        "AC         0.9",
    ] {
        ensure!(table.contains(line), "constants table lacks `{line}`");
    }
    let shapes = [
        conv(3, 16, 12, 16),
        conv(3, 8, 16, 32),
        SynapseShape::Linear { c_in: 32, c_out: 4 },
    ];
    let unit = rated(&shapes, &[1.0; 3]);
    let dense: Vec<_> = unit.iter().map(|l| l.layer.clone()).collect();
    let rep = assemble(&unit, &dense, c, Charging::Input, 1).map_err(|e| e.to_string())?;
    let ratio = rep.ratio.ok_or("unit-rate ratio missing")?;
    ensure!((ratio - 4.6 / 0.9).abs() < 1e-12, "unit-rate ratio {ratio}");
    // conv 2304 at Rs 0.5 → 1152 AC, linear 3584 at 0.25 → 896 AC
    let two = [
        conv(3, 4, 2, 8),
        SynapseShape::Linear {
            c_in: 512,
            c_out: 7,
        },
    ];
    let r2 = rated(&two, &[0.5, 0.25]);
    let d2: Vec<_> = r2.iter().map(|l| l.layer.clone()).collect();
    let rep = assemble(&r2, &d2, c, Charging::Input, 1).map_err(|e| e.to_string())?;
    ensure!(
        rep.layers[0].flops_snn == 1152.0 && rep.layers[1].flops_snn == 896.0,
        "per-layer SNN FLOPs"
    );
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b;
    ensure!(
        close(rep.e_snn_pj, 2048.0 * 0.9) && close(rep.e_ann_pj, 5888.0 * 4.6),
        "ledger totals {} {}",
        rep.e_snn_pj,
        rep.e_ann_pj
    );
    let info = match heavy() {
        Ok(h) => match &h.energy {
            Ok(e) => format!(
                "; informational: trained sew-tiny ratio {} ({} the {:.2}–{:.2} reference band)",
                e.ratio.map_or("infinite".into(), |r| format!("{r:.2}")),
                e.band_position(),
                REFERENCE_RATIO_BAND.0,
                REFERENCE_RATIO_BAND.1
            ),
            Err(e) => format!("; informational ratio unavailable: {e}"),
        },
        Err(e) => format!("; informational ratio unavailable: {e}"),
    };
    Ok(format!(
        "FLOPs 2304/3584/1, unit-rate ratio 4.6/0.9, hand ledger 1843.2 pJ{info}"
    ))
}

// ---------------------------------------------------------------- 5 and 8

const SAMPLES_PER_CLASS: usize = 100;
const DATA_SEED: u64 = 0;
const TIME_BINS: usize = 6;
/// Selection sweep: two folds, one epoch per cell.
const SELECT_FOLDS: usize = 2;
const SELECT_EPOCHS: usize = 1;

struct Heavy {
    selection: SweepResult,
    best: u8,
    spiking: FoldReport,
    dense: FoldReport,
    seconds: f64,
    timings: [f64; 3],
    energy: Result<EnergyReport, String>,
}

fn base_spec(dataset: &Dataset) -> CvSpec {
    CvSpec {
        network: NetworkConfig::sew_tiny(
            dataset.classes(),
            TIME_BINS,
            dataset.height as usize,
            dataset.width as usize,
        ),
        model: ModelKind::Spiking,
        train: TrainConfig::default(),
        augment: Default::default(),
        cv: CvConfig {
            shuffled_eval: true,
            ..CvConfig::default()
        },
        seed: 0,
    }
}

fn run_heavy() -> Result<Heavy, String> {
    let quiet = |_: String| {};
    let started = Instant::now();
    let dataset = Dataset::synthetic(&SynthParams::default(), SAMPLES_PER_CLASS, DATA_SEED)
        .map_err(|e| e.to_string())?;
    let base = base_spec(&dataset);
    let select = CvSpec {
        train: TrainConfig {
            epochs: SELECT_EPOCHS,
            ..base.train.clone()
        },
        cv: CvConfig {
            folds: SELECT_FOLDS,
            shuffled_eval: false,
            ..base.cv.clone()
        },
        ..base.clone()
    };
    let selection = sweep_common_eda(
        &dataset,
        &select,
        &[ModelKind::Spiking],
        0.5,
        jobs(),
        &quiet,
    )
    .map_err(|e| e.to_string())?;
    let best = selection
        .best_combination(ModelKind::Spiking)
        .ok_or("empty selection sweep")?;
    let t_select = started.elapsed().as_secs_f64();
    let spec = CvSpec {
        augment: combination_spec(best, 0.5, base.augment.seed),
        ..base
    };
    let t = Instant::now();
    let (spiking, outcomes): (FoldReport, Vec<FoldOutcome>) =
        run_cv(&dataset, &spec, jobs(), &quiet).map_err(|e| e.to_string())?;
    let t_spiking = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let dense_spec = CvSpec {
        model: ModelKind::Dense,
        ..spec.clone()
    };
    let (dense, _) = run_cv(&dataset, &dense_spec, jobs(), &quiet).map_err(|e| e.to_string())?;
    let t_dense = t.elapsed().as_secs_f64();
    let seconds = started.elapsed().as_secs_f64();
    // energy of the fold-0 model on its held-out samples
    let folds = spec.fold_plan(dataset.len()).map_err(|e| e.to_string())?;
    let (_, test) = folds.train_test(0);
    let energy = dataset
        .voxelized(&test, TIME_BINS)
        .and_then(|s| {
            let x: Vec<SpikeTensor> = s.into_iter().map(|p| p.0).collect();
            measure_energy(&spec.network, &outcomes[0].params, &x, 16, Charging::Input)
        })
        .map_err(|e| e.to_string());
    Ok(Heavy {
        selection,
        best,
        spiking,
        dense,
        seconds,
        timings: [t_select, t_spiking, t_dense],
        energy,
    })
}

fn heavy() -> Result<&'static Heavy, String> {
    static CELL: OnceLock<Result<Heavy, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        catch_unwind(run_heavy).unwrap_or_else(|_| Err("end-to-end run panicked".into()))
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn criterion_5() -> Check {
    let h = heavy()?;
    let label = evsnn::augment::CommonEda::mask_label(h.best);
    let accs: Vec<String> = h
        .spiking
        .folds
        .iter()
        .map(|f| format!("{:.3}", f.accuracy))
        .collect();
    let max_epochs = h
        .spiking
        .folds
        .iter()
        .map(|f| f.epochs_run)
        .max()
        .unwrap_or(0);
    let summary = format!(
        "best combination [{label}] (selection mean {:.3}); spiking 10-fold mean {:.4} [{}], ≤ {max_epochs} epochs; dense baseline mean {:.4}; {:.0}s total (select {:.0}s, spiking {:.0}s, dense {:.0}s) on {} core(s)",
        h.selection.mean_accuracy(ModelKind::Spiking, h.best),
        h.spiking.mean_accuracy,
        accs.join(" "),
        h.dense.mean_accuracy,
        h.seconds,
        h.timings[0],
        h.timings[1],
        h.timings[2],
        jobs()
    );
    ensure!(
        h.spiking.folds.len() == 10,
        "{} folds; {summary}",
        h.spiking.folds.len()
    );
    ensure!(
        h.spiking.mean_accuracy >= 0.90,
        "mean below 0.90; {summary}"
    );
    ensure!(max_epochs <= 50, "more than 50 epochs; {summary}");
    ensure!(h.seconds <= 900.0, "runtime above 15 minutes; {summary}");
    Ok(summary)
}

fn criterion_8() -> Check {
    let h = heavy()?;
    let ordered = h.spiking.mean_accuracy;
    let shuffled = h
        .spiking
        .mean_shuffled_accuracy
        .ok_or("no shuffled evaluation recorded")?;
    ensure!(
        ordered > shuffled,
        "ordered {ordered:.4} vs shuffled {shuffled:.4}"
    );
    Ok(format!(
        "10-fold mean on ordered bins {ordered:.4} > time-shuffled bins {shuffled:.4}"
    ))
}

// ---------------------------------------------------------------- 6

/// Two-sided p from a Simpson integration of the Student-t density.
fn t_oracle(t: f64, df: f64) -> f64 {
    let f = |x: f64| (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
    let simpson = |a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let upper = 60.0;
    simpson(t, upper, 200_000) / simpson(0.0, upper, 200_000)
}

fn cheap_sweep(k: usize) -> Result<SweepResult, String> {
    let params = SynthParams {
        width: 16,
        height: 16,
        events_per_sample: 200,
        ..SynthParams::default()
    };
    let dataset = Dataset::synthetic(&params, 5, 6).map_err(|e| e.to_string())?;
    let spec = CvSpec {
        network: NetworkConfig::passthrough(dataset.classes(), 3, 16, 16),
        model: ModelKind::Spiking,
        train: TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        },
        augment: Default::default(),
        cv: CvConfig {
            folds: k,
            ..CvConfig::default()
        },
        seed: 6,
    };
    sweep_common_eda(&dataset, &spec, &[ModelKind::Spiking], 0.5, jobs(), &|_| {})
        .map_err(|e| e.to_string())
}

fn criterion_6() -> Check {
    let smoke = cheap_sweep(2)?;
    ensure!(
        smoke.records.len() == 64 && smoke.check().is_ok(),
        "k=2 sweep has {} records",
        smoke.records.len()
    );
    let full = cheap_sweep(10)?;
    ensure!(
        full.records.len() == 320 && full.check().is_ok(),
        "k=10 sweep has {} records",
        full.records.len()
    );

    // noiseless injection on the sweep's own design
    let mut injected = full.clone();
    for r in &mut injected.records {
        r.accuracy = 0.5 + if r.mask & 1 != 0 { 0.1 } else { 0.0 };
    }
    let rep = ols_regress(&injected, ModelKind::Spiking).map_err(|e| e.to_string())?;
    let crop = &rep.fit.coefficients[0];
    ensure!(
        crop.name == "Crop" && (crop.estimate - 0.1).abs() < 1e-12,
        "Crop estimate {}",
        crop.estimate
    );
    ensure!(crop.p < 1e-12, "p(Crop) = {}", crop.p);
    ensure!(
        (rep.fit.intercept.estimate - 0.5).abs() < 1e-12,
        "intercept {}",
        rep.fit.intercept.estimate
    );
    for c in &rep.fit.coefficients[1..] {
        ensure!(
            c.estimate.abs() < 1e-12,
            "{} estimate {}",
            c.name,
            c.estimate
        );
    }

    let p = t_two_sided_p(2.0, 314.0);
    let oracle = t_oracle(2.0, 314.0);
    ensure!((0.046..=0.047).contains(&p), "p(t=2, df=314) = {p}");
    ensure!(
        (p - oracle).abs() < 1e-7,
        "p = {p}, integration oracle {oracle}"
    );

    // Monte-Carlo recovery
    let beta = [0.05, -0.03, 0.0, 0.0, 0.02];
    let intercept = 0.6;
    let noise = Normal::new(0.0, 0.02).unwrap();
    let mut r = common::rng(66);
    let mut hits = [0usize; 6];
    let mut joint = 0;
    const TRIALS: usize = 500;
    for _ in 0..TRIALS {
        let mut s = full.clone();
        for rec in &mut s.records {
            let signal: f64 = beta
                .iter()
                .enumerate()
                .filter(|(j, _)| rec.mask >> j & 1 == 1)
                .map(|(_, b)| b)
                .sum();
            rec.accuracy = intercept + signal + noise.sample(&mut r);
        }
        let f = ols_regress(&s, ModelKind::Spiking)
            .map_err(|e| e.to_string())?
            .fit;
        let truth = std::iter::once(intercept).chain(beta);
        let mut all = true;
        for (j, (c, b)) in std::iter::once(&f.intercept)
            .chain(&f.coefficients)
            .zip(truth)
            .enumerate()
        {
            let ok = (c.estimate - b).abs() <= 3.0 * c.std_error;
            hits[j] += usize::from(ok);
            all &= ok;
        }
        joint += usize::from(all);
    }
    let rates: Vec<f64> = hits.iter().map(|&h| h as f64 / TRIALS as f64).collect();
    let min = rates.iter().cloned().fold(1.0, f64::min);
    ensure!(min >= 0.99, "per-coefficient recovery rates {rates:?}");
    Ok(format!(
        "64 and 320 records; noiseless Crop = 0.1 exact; p(2, 314) = {p:.6} (oracle {oracle:.6}); recovery within 3 SE ≥ {min:.3} per coefficient over {TRIALS} trials (joint {:.3})",
        joint as f64 / TRIALS as f64
    ))
}

// ---------------------------------------------------------------- 7

fn evsnn(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_evsnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`evsnn {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

/// Every file under `dir` except run ledgers (which hold timings).
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if !p.to_string_lossy().ends_with(".ledger.json") {
                out.insert(
                    p.strip_prefix(root).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut m = BTreeMap::new();
    walk(dir, dir, &mut m);
    m
}

const EXPERIMENT: &str = r#"{
  "dataset": {"source": "manifest", "path": "data"},
  "network": {"preset": "sew-tiny", "time_bins": 4},
  "augment": {"steps": [{"eda": {"kind": "crop"}}, {"eda": {"kind": "eventdrop"}}], "seed": 3},
  "train": {"epochs": 2, "batch_size": 4},
  "cv": {"folds": 2, "shuffled_eval": true},
  "seed": 5,
  "output": "out"
}"#;

const SWEEP: &str = r#"{
  "dataset": {"source": "manifest", "path": "data"},
  "network": {"preset": "passthrough", "time_bins": 3},
  "train": {"epochs": 1, "batch_size": 4},
  "cv": {"folds": 2},
  "sweep": {"models": ["spiking", "dense"]},
  "output": "sweep"
}"#;

fn run_all_commands(dir: &Path, jobs: &str) -> Result<(), String> {
    let w =
        |name: &str, text: &str| std::fs::write(dir.join(name), text).map_err(|e| e.to_string());
    w("exp.json", EXPERIMENT)?;
    w("sweep.json", SWEEP)?;
    evsnn(
        dir,
        &[
            "synth",
            "--classes",
            "2",
            "--samples-per-class",
            "6",
            "--width",
            "32",
            "--height",
            "32",
            "--seed",
            "4",
            "--out",
            "data",
        ],
    )?;
    evsnn(
        dir,
        &[
            "--config", "exp.json", "--jobs", jobs, "train", "--fold", "1",
        ],
    )?;
    evsnn(dir, &["--config", "exp.json", "--jobs", jobs, "eval"])?;
    evsnn(
        dir,
        &[
            "--config",
            "exp.json",
            "--out",
            "ck",
            "eval",
            "--checkpoint",
            "out/checkpoint.ckpt",
            "--fold",
            "1",
        ],
    )?;
    evsnn(
        dir,
        &[
            "--config",
            "exp.json",
            "--out",
            "en",
            "energy",
            "--checkpoint",
            "out/checkpoint.ckpt",
        ],
    )?;
    evsnn(dir, &["--config", "sweep.json", "--jobs", jobs, "sweep"])?;
    evsnn(dir, &["regress", "sweep/sweep.json", "--out", "reg"])?;
    evsnn(
        dir,
        &[
            "--config",
            "exp.json",
            "--seed",
            "9",
            "--out",
            "aug",
            "augment",
            "data/samples/00003.evt",
            "--sample-index",
            "3",
        ],
    )?;
    evsnn(
        dir,
        &[
            "voxelize", "data", "--sample", "2", "--bins", "4", "--out", "vox",
        ],
    )?;
    Ok(())
}

fn criterion_7() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_all_commands(a.path(), "1")?;
    run_all_commands(b.path(), "2")?;
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    ensure!(
        sa.keys().eq(sb.keys()),
        "different output files: {:?} vs {:?}",
        sa.keys(),
        sb.keys()
    );
    for (name, bytes) in &sa {
        ensure!(sb[name] == *bytes, "{name} differs between reruns");
    }
    for must in [
        "out/checkpoint.ckpt",
        "out/metrics.jsonl",
        "out/report.json",
        "sweep/sweep.json",
        "reg/regression.json",
    ] {
        ensure!(sa.contains_key(must), "{must} was not written");
    }
    Ok(format!(
        "{} report/checkpoint files byte-identical across two runs (1 vs 2 jobs)",
        sa.len()
    ))
}

// ---------------------------------------------------------------- main

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "surrogate and BPTT gradients", criterion_1),
        (2, "IF dynamics", criterion_2),
        (3, "augmentation suite", criterion_3),
        (4, "energy model", criterion_4),
        (5, "end-to-end learning", criterion_5),
        (6, "sweep and regression", criterion_6),
        (7, "determinism", criterion_7),
        (8, "temporal signal", criterion_8),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {id} ({name}): PASS — {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL — {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
