//! The experiment file: one JSON document describing the data, the network,
//! augmentation, optimization, the fold protocol and where outputs go.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::AugmentSpec;
use crate::bench::{CvConfig, CvSpec, Dataset};
use crate::energy::{self, Charging, EnergyConstants, EnergyReport};
use crate::events::{DatasetManifest, SpikeTensor, SynthParams};
use crate::snn::{forward, ModelKind, NetworkConfig, NetworkParams, Plan, SpikeFn, TrainConfig};
use crate::{Error, Result};

fn d_spc() -> usize {
    100
}
fn d_preset() -> Option<String> {
    Some("sew-tiny".into())
}
fn d_bins() -> usize {
    6
}
fn d_probability() -> f64 {
    crate::augment::DEFAULT_PROBABILITY
}
fn d_models() -> Vec<ModelKind> {
    vec![ModelKind::Spiking]
}
fn d_output() -> PathBuf {
    PathBuf::from("out")
}

/// Where samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Generated in memory.
    Synthetic {
        #[serde(default)]
        params: SynthParams,
        #[serde(default = "d_spc")]
        samples_per_class: usize,
        #[serde(default)]
        seed: u64,
    },
    /// A manifest file or a directory holding `manifest.json`. Relative
    /// paths are resolved against the experiment file's directory.
    Manifest { path: PathBuf },
}

/// A named preset sized to the dataset, or a full layer list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default = "d_preset")]
    pub preset: Option<String>,
    #[serde(default = "d_bins")]
    pub time_bins: usize,
    #[serde(default)]
    pub config: Option<NetworkConfig>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            preset: d_preset(),
            time_bins: d_bins(),
            config: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Firing probability of every swept transform.
    #[serde(default = "d_probability")]
    pub probability: f64,
    #[serde(default = "d_models")]
    pub models: Vec<ModelKind>,
    /// Follow the sweep with the EventDrop and EventDrop+Mirror runs on the
    /// best combination.
    #[serde(default)]
    pub specific: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            probability: d_probability(),
            models: d_models(),
            specific: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    #[serde(default)]
    pub charging: Charging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub augment: AugmentSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub energy: EnergySection,
    /// Master seed: fold split, initialization, batch order, bin shuffles.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_output")]
    pub output: PathBuf,
    /// Parallel jobs; `None` uses every available core.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Directory of the file, for resolving relative dataset paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentFile {
    /// Parses and validates a document. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let e: ExperimentFile =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        e.check()?;
        Ok(e)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut e = Self::parse(&text).map_err(|e| e.context(path.display().to_string()))?;
        e.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(e)
    }

    /// Schema checks that need no data.
    pub fn check(&self) -> Result<()> {
        match (&self.network.preset, &self.network.config) {
            (Some(_), Some(_)) if self.network.preset != d_preset() => {
                return Err(Error::Config(
                    "network: give either `preset` or `config`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "network: `preset` or `config` is required".into(),
                ))
            }
            _ => {}
        }
        if self.network.time_bins == 0 {
            return Err(Error::Config("network.time_bins must be positive".into()));
        }
        if let DatasetSource::Synthetic {
            params,
            samples_per_class,
            ..
        } = &self.dataset
        {
            params.check().map_err(|e| e.context("dataset.params"))?;
            if *samples_per_class == 0 {
                return Err(Error::Config(
                    "dataset.samples_per_class must be positive".into(),
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.sweep.probability) {
            return Err(Error::Config("sweep.probability must lie in [0, 1]".into()));
        }
        if self.sweep.models.is_empty() {
            return Err(Error::Config("sweep.models must not be empty".into()));
        }
        if self.cv.folds < 2 {
            return Err(Error::Config("cv.folds must be at least 2".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        self.train.check()?;
        self.augment.check()?;
        Ok(())
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn dataset_path(&self) -> Option<PathBuf> {
        match &self.dataset {
            DatasetSource::Manifest { path } if path.is_relative() => {
                Some(self.base_dir.join(path))
            }
            DatasetSource::Manifest { path } => Some(path.clone()),
            DatasetSource::Synthetic { .. } => None,
        }
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.dataset {
            DatasetSource::Synthetic {
                params,
                samples_per_class,
                seed,
            } => Dataset::synthetic(params, *samples_per_class, *seed),
            DatasetSource::Manifest { .. } => {
                let path = self.dataset_path().expect("manifest source has a path");
                if !path.exists() {
                    return Err(Error::io(
                        &path,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "dataset not found"),
                    ));
                }
                Dataset::from_manifest(&DatasetManifest::load(&path)?)
            }
        }
    }

    /// The network description, with presets sized to `dataset`.
    pub fn network_config(&self, dataset: &Dataset) -> Result<NetworkConfig> {
        match (&self.network.config, &self.network.preset) {
            (Some(cfg), _) => Ok(cfg.clone()),
            (None, Some(name)) => NetworkConfig::preset(
                name,
                dataset.classes(),
                self.network.time_bins,
                dataset.height as usize,
                dataset.width as usize,
            ),
            (None, None) => Err(Error::Config(
                "network: `preset` or `config` is required".into(),
            )),
        }
    }

    pub fn cv_spec(&self, dataset: &Dataset) -> Result<CvSpec> {
        let spec = CvSpec {
            network: self.network_config(dataset)?,
            model: self.model,
            train: self.train.clone(),
            augment: self.augment.clone(),
            cv: self.cv.clone(),
            seed: self.seed,
        };
        spec.check(dataset)?;
        Ok(spec)
    }
}

/// Energy of the spiking network `cfg` with weights `params`, measured over
/// `samples` in inference mode.
pub fn measure_energy(
    cfg: &NetworkConfig,
    params: &NetworkParams<f32>,
    samples: &[SpikeTensor],
    batch_size: usize,
    charging: Charging,
) -> Result<EnergyReport> {
    let plan = Plan::new(cfg, ModelKind::Spiking)?;
    let dense = Plan::new(cfg, ModelKind::Dense)?;
    let traces = samples
        .chunks(batch_size.max(1))
        .map(|c| {
            let inputs: Vec<&SpikeTensor> = c.iter().collect();
            forward(&plan, params, &inputs, SpikeFn::Heaviside)
        })
        .collect::<Result<Vec<_>>>()?;
    energy::estimate(&plan, &dense, &traces, charging, EnergyConstants::CMOS_45NM)
}
