use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{load_events, save_events, synth_dataset, EventStream, SynthParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Path relative to the manifest root.
    pub file: String,
    pub label: u32,
    pub width: u16,
    pub height: u16,
    /// Interval length in microseconds.
    pub duration: u64,
}

/// JSON index of a labeled event dataset stored as binary event files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub classes: u32,
    pub class_names: Vec<String>,
    pub width: u16,
    pub height: u16,
    pub samples: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl DatasetManifest {
    pub fn check(&self) -> Result<()> {
        if self.class_names.len() != self.classes as usize {
            return Err(Error::Config(format!(
                "manifest declares {} classes but names {}",
                self.classes,
                self.class_names.len()
            )));
        }
        for (i, e) in self.samples.iter().enumerate() {
            if e.label >= self.classes {
                return Err(Error::Config(format!(
                    "sample {i} ({}) has label {} >= {} classes",
                    e.file, e.label, self.classes
                )));
            }
            if e.width != self.width || e.height != self.height {
                return Err(Error::Config(format!(
                    "sample {i} ({}) is {}x{}, dataset is {}x{}",
                    e.file, e.width, e.height, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    /// Reads `path`, which is either a manifest file or a directory holding
    /// `manifest.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::from(e).context(file.display().to_string()))?;
        m.root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        m.check()?;
        Ok(m)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let file = dir.as_ref().join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&file, text).map_err(|e| Error::io(&file, e))?;
        Ok(file)
    }

    /// Loads every sample and cross-checks it against its entry.
    pub fn load_streams(&self) -> Result<Vec<EventStream>> {
        self.samples
            .iter()
            .map(|e| {
                let s = load_events(self.root.join(&e.file))?;
                if s.width != e.width || s.height != e.height {
                    return Err(Error::Config(format!(
                        "{}: geometry {}x{} does not match manifest",
                        e.file, s.width, s.height
                    )));
                }
                if s.label != Some(e.label) {
                    return Err(Error::Config(format!(
                        "{}: label {:?} does not match manifest label {}",
                        e.file, s.label, e.label
                    )));
                }
                Ok(s)
            })
            .collect()
    }

    /// Generates a synthetic dataset and writes it under `dir`.
    pub fn write_synthetic(
        dir: impl AsRef<Path>,
        params: &SynthParams,
        samples_per_class: usize,
        seed: u64,
    ) -> Result<Self> {
        let dir = dir.as_ref();
        let streams = synth_dataset(params, samples_per_class, seed)?;
        let sample_dir = dir.join("samples");
        std::fs::create_dir_all(&sample_dir).map_err(|e| Error::io(&sample_dir, e))?;
        let mut samples = Vec::with_capacity(streams.len());
        for (i, s) in streams.iter().enumerate() {
            let file = format!("samples/{i:05}.evt");
            save_events(s, dir.join(&file))?;
            samples.push(ManifestEntry {
                file,
                label: s.label.unwrap_or(0),
                width: s.width,
                height: s.height,
                duration: s.duration(),
            });
        }
        let m = DatasetManifest {
            root: dir.to_path_buf(),
            classes: params.classes() as u32,
            class_names: params.class_names(),
            width: params.width,
            height: params.height,
            samples,
        };
        m.save(dir)?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_and_reload_synthetic() {
        let dir = tempfile::tempdir().unwrap();
        let p = SynthParams {
            width: 16,
            height: 16,
            events_per_sample: 40,
            ..SynthParams::default()
        };
        let m = DatasetManifest::write_synthetic(dir.path(), &p, 2, 5).unwrap();
        assert_eq!(m.samples.len(), 8);
        let back = DatasetManifest::load(dir.path()).unwrap();
        assert_eq!(back.samples, m.samples);
        let streams = back.load_streams().unwrap();
        assert_eq!(streams, synth_dataset(&p, 2, 5).unwrap());
    }

    #[test]
    fn label_out_of_range_rejected() {
        let m = DatasetManifest {
            root: PathBuf::new(),
            classes: 1,
            class_names: vec!["a".into()],
            width: 4,
            height: 4,
            samples: vec![ManifestEntry {
                file: "x".into(),
                label: 1,
                width: 4,
                height: 4,
                duration: 10,
            }],
        };
        assert!(m.check().is_err());
    }
}
