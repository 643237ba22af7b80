use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::kfold::FoldPlan;
use crate::augment::{apply_pipeline, AugmentSpec};
use crate::events::{voxelize, DatasetManifest, EventStream, SpikeTensor, SynthParams};
use crate::rng;
use crate::snn::{
    cosine_lr, evaluate, train_epoch, ModelKind, NetworkConfig, NetworkParams, Plan, Sgd,
    TrainConfig,
};
use crate::{Error, Result};

// keys separating the random streams derived from the master seed
const KEY_INIT: u64 = 1;
const KEY_ORDER: u64 = 2;
const KEY_SHUFFLE: u64 = 3;

/// Labeled event streams held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub streams: Vec<EventStream>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub width: u16,
    pub height: u16,
}

impl Dataset {
    pub fn from_manifest(m: &DatasetManifest) -> Result<Self> {
        let streams = m.load_streams()?;
        let labels = m.samples.iter().map(|e| e.label as usize).collect();
        Ok(Dataset {
            streams,
            labels,
            class_names: m.class_names.clone(),
            width: m.width,
            height: m.height,
        })
    }

    /// Class-major synthetic dataset.
    pub fn synthetic(params: &SynthParams, samples_per_class: usize, seed: u64) -> Result<Self> {
        let streams = crate::events::synth_dataset(params, samples_per_class, seed)?;
        let labels = streams
            .iter()
            .map(|s| s.label.expect("synthetic streams are labeled") as usize)
            .collect();
        Ok(Dataset {
            streams,
            labels,
            class_names: params.class_names(),
            width: params.width,
            height: params.height,
        })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn voxelized(&self, indices: &[usize], bins: usize) -> Result<Vec<(SpikeTensor, usize)>> {
        indices
            .iter()
            .map(|&i| Ok((voxelize(&self.streams[i], bins)?, self.labels[i])))
            .collect()
    }
}

/// How the reported epoch is chosen inside each fold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Best epoch on the held-out fold, which is also the reported score.
    /// Optimistic: selection and reporting share data.
    #[default]
    HeldOut,
    /// Best epoch on the next fold; the held-out fold is only scored once.
    Nested,
}

fn d_folds() -> usize {
    10
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "d_folds")]
    pub folds: usize,
    #[serde(default)]
    pub selection: Selection,
    /// End a fold once the selection accuracy reaches 1, since no later
    /// epoch can be selected over it.
    #[serde(default = "yes")]
    pub stop_at_perfect: bool,
    /// Also score the selected model on test samples whose time bins are
    /// shuffled.
    #[serde(default)]
    pub shuffled_eval: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: d_folds(),
            selection: Selection::HeldOut,
            stop_at_perfect: true,
            shuffled_eval: false,
        }
    }
}

/// Everything that determines a cross-validation run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSpec {
    pub network: NetworkConfig,
    pub model: ModelKind,
    pub train: TrainConfig,
    pub augment: AugmentSpec,
    pub cv: CvConfig,
    /// Master seed for the fold split, initialization and batch order.
    pub seed: u64,
}

impl CvSpec {
    pub fn check(&self, dataset: &Dataset) -> Result<Plan> {
        self.train.check()?;
        self.augment.check()?;
        let plan = Plan::new(&self.network, self.model)?;
        if plan.classes != dataset.classes() {
            return Err(Error::Config(format!(
                "network has {} classes, dataset has {}",
                plan.classes,
                dataset.classes()
            )));
        }
        if (plan.height, plan.width) != (dataset.height as usize, dataset.width as usize) {
            return Err(Error::Config(format!(
                "network expects {}x{} input, dataset is {}x{}",
                plan.width, plan.height, dataset.width, dataset.height
            )));
        }
        if self.cv.selection == Selection::Nested && self.cv.folds < 3 {
            return Err(Error::Config(
                "nested selection needs at least 3 folds".into(),
            ));
        }
        Ok(plan)
    }

    pub fn fold_plan(&self, n: usize) -> Result<FoldPlan> {
        super::kfold::kfold_split(n, self.cv.folds, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_accuracy: f64,
    /// Accuracy on the selection set (the held-out fold unless nested).
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    /// `None` when no epoch was trained.
    pub best_epoch: Option<usize>,
    pub epochs_run: usize,
    pub train_size: usize,
    pub test_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffled_accuracy: Option<f64>,
    pub history: Vec<EpochRecord>,
}

/// One trained fold: its scores, the selected parameters and wall time.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub result: FoldResult,
    pub params: NetworkParams<f32>,
    pub seconds: f64,
}

/// A random permutation of `0..bins` that is not the identity (for
/// `bins >= 2`).
pub fn shuffled_order(bins: usize, rng: &mut rng::Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..bins).collect();
    if bins < 2 {
        return order;
    }
    loop {
        order.shuffle(rng);
        if order.iter().enumerate().any(|(i, &b)| i != b) {
            return order;
        }
    }
}

fn training_set(
    dataset: &Dataset,
    indices: &[usize],
    spec: &CvSpec,
    bins: usize,
    fold: usize,
    epoch: usize,
) -> Result<Vec<(SpikeTensor, usize)>> {
    if spec.augment.steps.is_empty() {
        return dataset.voxelized(indices, bins);
    }
    let aug = spec.augment.reseeded(rng::derive_seed(
        spec.augment.seed,
        &[fold as u64, epoch as u64],
    ));
    indices
        .iter()
        .map(|&i| {
            let s = apply_pipeline(&dataset.streams[i], &aug, i as u64)?;
            Ok((voxelize(&s, bins)?, dataset.labels[i]))
        })
        .collect()
}

/// Trains and scores one fold. Deterministic in `(dataset, spec, plan, fold)`.
pub fn run_fold(
    dataset: &Dataset,
    spec: &CvSpec,
    folds: &FoldPlan,
    fold: usize,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FoldOutcome> {
    let started = Instant::now();
    let plan = spec.check(dataset)?;
    let bins = plan.time_bins;
    let (train_idx, val_idx, test_idx) = match spec.cv.selection {
        Selection::HeldOut => {
            let (tr, te) = folds.train_test(fold);
            (tr, te.clone(), te)
        }
        Selection::Nested => folds.train_val_test(fold),
    };
    let val = dataset.voxelized(&val_idx, bins)?;
    let test = match spec.cv.selection {
        Selection::HeldOut => None,
        Selection::Nested => Some(dataset.voxelized(&test_idx, bins)?),
    };
    let tc = &spec.train;
    let mut params =
        NetworkParams::<f32>::init(&plan, rng::derive_seed(spec.seed, &[KEY_INIT, fold as u64]));
    let mut opt = Sgd::new(&params, tc.momentum, tc.weight_decay);
    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(tc.epochs);
    let mut cached = None;

    if tc.epochs == 0 {
        best_acc = evaluate(&plan, &params, &val, tc.batch_size)?.accuracy;
    }
    for epoch in 0..tc.epochs {
        let lr = cosine_lr(epoch, tc.epochs, tc.lr);
        // without augmentation every epoch sees the same frames
        if cached.is_none() || !spec.augment.steps.is_empty() {
            cached = Some(training_set(dataset, &train_idx, spec, bins, fold, epoch)?);
        }
        let train = cached.as_ref().expect("training set built");
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng::stream(
            spec.seed,
            &[KEY_ORDER, fold as u64, epoch as u64],
        ));
        let stats = train_epoch(
            &plan,
            &mut params,
            &mut opt,
            train,
            &order,
            tc.batch_size,
            lr,
            (fold, epoch),
        )?;
        let acc = evaluate(&plan, &params, &val, tc.batch_size)?.accuracy;
        let rec = EpochRecord {
            epoch,
            lr,
            loss: stats.loss,
            train_accuracy: stats.accuracy,
            val_accuracy: acc,
        };
        on_epoch(&rec);
        history.push(rec);
        if acc > best_acc {
            best_acc = acc;
            best_epoch = Some(epoch);
            best.clone_from(&params);
        }
        if spec.cv.stop_at_perfect && acc >= 1.0 {
            break;
        }
    }
    if tc.epochs == 0 {
        best.clone_from(&params);
    }
    let accuracy = match &test {
        None => best_acc,
        Some(t) => evaluate(&plan, &best, t, tc.batch_size)?.accuracy,
    };
    let shuffled_accuracy = if spec.cv.shuffled_eval {
        let shuffled: Vec<(SpikeTensor, usize)> = test_idx
            .iter()
            .map(|&i| {
                let mut r = rng::stream(spec.seed, &[KEY_SHUFFLE, i as u64]);
                let order = shuffled_order(bins, &mut r);
                Ok((
                    voxelize(&dataset.streams[i], bins)?.permute_bins(&order)?,
                    dataset.labels[i],
                ))
            })
            .collect::<Result<_>>()?;
        Some(evaluate(&plan, &best, &shuffled, tc.batch_size)?.accuracy)
    } else {
        None
    };
    Ok(FoldOutcome {
        result: FoldResult {
            fold,
            accuracy,
            best_epoch,
            epochs_run: history.len(),
            train_size: train_idx.len(),
            test_size: test_idx.len(),
            shuffled_accuracy,
            history,
        },
        params: best,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub model: ModelKind,
    pub selection: Selection,
    /// Set when the reported score is also the selection score.
    pub optimistic: bool,
    /// Augmentations in application order.
    pub pipeline: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_shuffled_accuracy: Option<f64>,
    pub config: CvSpec,
}

pub fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl FoldReport {
    pub fn new(spec: &CvSpec, mut folds: Vec<FoldResult>) -> Self {
        folds.sort_by_key(|f| f.fold);
        let mean_accuracy = mean(folds.iter().map(|f| f.accuracy));
        let mean_shuffled_accuracy = folds
            .iter()
            .map(|f| f.shuffled_accuracy)
            .collect::<Option<Vec<f64>>>()
            .filter(|v| !v.is_empty())
            .map(mean);
        FoldReport {
            model: spec.model,
            selection: spec.cv.selection,
            optimistic: spec.cv.selection == Selection::HeldOut,
            pipeline: spec.augment.names().into_iter().map(String::from).collect(),
            folds,
            mean_accuracy,
            mean_shuffled_accuracy,
            config: spec.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "model: {}\npipeline: {}\nselection: {:?}{}\n\n{:>4} {:>9} {:>10} {:>7}{}\n",
            self.model.name(),
            if self.pipeline.is_empty() {
                "none".to_string()
            } else {
                self.pipeline.join(" -> ")
            },
            self.selection,
            if self.optimistic {
                " (optimistic: held-out fold selects the epoch)"
            } else {
                ""
            },
            "fold",
            "accuracy",
            "best_epoch",
            "epochs",
            if self.mean_shuffled_accuracy.is_some() {
                "  shuffled"
            } else {
                ""
            },
        );
        for f in &self.folds {
            let be = f.best_epoch.map_or("-".to_string(), |e| e.to_string());
            s.push_str(&format!(
                "{:>4} {:>9.4} {:>10} {:>7}",
                f.fold, f.accuracy, be, f.epochs_run
            ));
            if let Some(sh) = f.shuffled_accuracy {
                s.push_str(&format!("  {sh:>8.4}"));
            }
            s.push('\n');
        }
        s.push_str(&format!("mean {:>9.4}\n", self.mean_accuracy));
        if let Some(m) = self.mean_shuffled_accuracy {
            s.push_str(&format!("mean accuracy on time-shuffled bins {m:.4}\n"));
        }
        s
    }
}

/// Runs `n` independent jobs on a pool of `jobs` threads and returns their
/// results in index order.
pub fn run_jobs<T: Send>(
    jobs: usize,
    n: usize,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// k-fold cross-validation: every fold trains on the others and keeps its
/// best epoch. Folds run as parallel jobs.
pub fn run_cv(
    dataset: &Dataset,
    spec: &CvSpec,
    jobs: usize,
    progress: &(dyn Fn(String) + Sync),
) -> Result<(FoldReport, Vec<FoldOutcome>)> {
    spec.check(dataset)?;
    let folds = spec.fold_plan(dataset.len())?;
    let outcomes = run_jobs(jobs, folds.k, |i| {
        let out = run_fold(dataset, spec, &folds, i, |_| {})?;
        progress(format!(
            "{} fold {i}: accuracy {:.4} after {} epochs ({:.1}s)",
            spec.model.name(),
            out.result.accuracy,
            out.result.epochs_run,
            out.seconds
        ));
        Ok(out)
    })?;
    let report = FoldReport::new(spec, outcomes.iter().map(|o| o.result.clone()).collect());
    Ok((report, outcomes))
}
