use serde::{Deserialize, Serialize};

use super::cv::{mean, run_fold, run_jobs, CvSpec, Dataset, FoldReport};
use crate::augment::{AugmentSpec, AugmentStep, CommonEda, DropParams, Eda};
use crate::snn::ModelKind;
use crate::{Error, Result};

/// Number of common-EDA combinations: every subset of five transforms.
pub const COMBINATIONS: u8 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub model: ModelKind,
    /// Bit `i` set when `CommonEda::ALL[i]` is in the pipeline.
    pub mask: u8,
    pub combination: String,
    pub fold: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub k: usize,
    pub probability: f64,
    /// Sorted by model, mask, fold.
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    pub fn models(&self) -> Vec<ModelKind> {
        let mut m: Vec<ModelKind> = self.records.iter().map(|r| r.model).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn records_for(&self, model: ModelKind) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(move |r| r.model == model)
    }

    /// Exactly one record per (model, combination, fold), all in `[0, 1]`.
    pub fn check(&self) -> Result<()> {
        for m in self.models() {
            let mut keys: Vec<(u8, usize)> =
                self.records_for(m).map(|r| (r.mask, r.fold)).collect();
            let n = keys.len();
            keys.sort_unstable();
            keys.dedup();
            let complete = keys.len() == n
                && n == COMBINATIONS as usize * self.k
                && keys
                    .iter()
                    .all(|&(mask, fold)| mask < COMBINATIONS && fold < self.k);
            if !complete {
                return Err(Error::Config(format!(
                    "sweep for {} has {n} records, expected one per combination and fold ({})",
                    m.name(),
                    COMBINATIONS as usize * self.k
                )));
            }
        }
        if let Some(r) = self
            .records
            .iter()
            .find(|r| !(0.0..=1.0).contains(&r.accuracy))
        {
            return Err(Error::Config(format!(
                "accuracy {} outside [0, 1]",
                r.accuracy
            )));
        }
        Ok(())
    }

    pub fn mean_accuracy(&self, model: ModelKind, mask: u8) -> f64 {
        mean(
            self.records_for(model)
                .filter(|r| r.mask == mask)
                .map(|r| r.accuracy),
        )
    }

    /// Highest mean accuracy; ties go to fewer transforms, then to the
    /// lower mask.
    pub fn best_combination(&self, model: ModelKind) -> Option<u8> {
        (0..COMBINATIONS)
            .filter(|&m| self.records_for(model).any(|r| r.mask == m))
            .map(|m| (m, self.mean_accuracy(model, m)))
            .fold(None, |best: Option<(u8, f64)>, (m, acc)| match best {
                Some((bm, bacc))
                    if bacc > acc || (bacc == acc && bm.count_ones() <= m.count_ones()) =>
                {
                    Some((bm, bacc))
                }
                _ => Some((m, acc)),
            })
            .map(|(m, _)| m)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for m in self.models() {
            s.push_str(&format!(
                "model: {} (k = {})\n{:>4}  {:<36} {:>9}\n",
                m.name(),
                self.k,
                "mask",
                "combination",
                "mean"
            ));
            for mask in 0..COMBINATIONS {
                s.push_str(&format!(
                    "{mask:>4}  {:<36} {:>9.4}\n",
                    CommonEda::mask_label(mask),
                    self.mean_accuracy(m, mask)
                ));
            }
            if let Some(b) = self.best_combination(m) {
                s.push_str(&format!(
                    "best: {} ({:.4})\n\n",
                    CommonEda::mask_label(b),
                    self.mean_accuracy(m, b)
                ));
            }
        }
        s
    }
}

/// Pipeline of the common transforms in `mask`, each firing with
/// `probability`.
pub fn combination_spec(mask: u8, probability: f64, seed: u64) -> AugmentSpec {
    AugmentSpec::new(CommonEda::steps(mask, probability), seed)
}

/// Runs the cross-validation of every combination for every model kind.
/// Cells (model, combination, fold) are independent jobs sharing seeds, so
/// the empty combination reproduces a plain `run_cv`.
pub fn sweep_common_eda(
    dataset: &Dataset,
    base: &CvSpec,
    models: &[ModelKind],
    probability: f64,
    jobs: usize,
    progress: &(dyn Fn(String) + Sync),
) -> Result<SweepResult> {
    let folds = base.fold_plan(dataset.len())?;
    let k = folds.k;
    let cells: Vec<(ModelKind, u8, usize)> = models
        .iter()
        .flat_map(|&m| (0..COMBINATIONS).flat_map(move |mask| (0..k).map(move |f| (m, mask, f))))
        .collect();
    let specs: Vec<CvSpec> = cells
        .iter()
        .map(|&(model, mask, _)| CvSpec {
            model,
            augment: combination_spec(mask, probability, base.augment.seed),
            ..base.clone()
        })
        .collect();
    for s in &specs {
        s.check(dataset)?;
    }
    let records = run_jobs(jobs, cells.len(), |i| {
        let (model, mask, fold) = cells[i];
        let label = CommonEda::mask_label(mask);
        let out = run_fold(dataset, &specs[i], &folds, fold, |_| {})
            .map_err(|e| e.context(format!("{} combination {label} fold {fold}", model.name())))?;
        progress(format!(
            "{} [{label}] fold {fold}: {:.4}",
            model.name(),
            out.result.accuracy
        ));
        Ok(SweepRecord {
            model,
            mask,
            combination: label,
            fold,
            accuracy: out.result.accuracy,
        })
    })?;
    let mut result = SweepResult {
        k,
        probability,
        records,
    };
    result.records.sort_by_key(|a| (a.model, a.mask, a.fold));
    result.check()?;
    Ok(result)
}

/// Transforms appended after the best common combination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specific {
    #[default]
    None,
    EventDrop,
    EventDropMirror,
}

impl Specific {
    pub const ALL: [Specific; 3] = [
        Specific::None,
        Specific::EventDrop,
        Specific::EventDropMirror,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Specific::None => "baseline",
            Specific::EventDrop => "eventdrop",
            Specific::EventDropMirror => "eventdrop+mirror",
        }
    }
}

pub fn specific_spec(mask: u8, which: Specific, probability: f64, seed: u64) -> AugmentSpec {
    let mut steps = CommonEda::steps(mask, probability);
    if which != Specific::None {
        steps.push(AugmentStep {
            eda: Eda::eventdrop(DropParams::default()),
            probability,
        });
    }
    if which == Specific::EventDropMirror {
        steps.push(AugmentStep {
            eda: Eda::Mirror,
            probability,
        });
    }
    AugmentSpec::new(steps, seed)
}

/// Cross-validates the best common combination with the specific transforms
/// appended.
pub fn run_specific_eda(
    dataset: &Dataset,
    base: &CvSpec,
    mask: u8,
    which: Specific,
    probability: f64,
    jobs: usize,
    progress: &(dyn Fn(String) + Sync),
) -> Result<FoldReport> {
    let spec = CvSpec {
        augment: specific_spec(mask, which, probability, base.augment.seed),
        ..base.clone()
    };
    super::cv::run_cv(dataset, &spec, jobs, progress).map(|(r, _)| r)
}
