use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Machine-readable record accompanying every report: what ran, with which
/// configuration and seeds, and how long it took. Timings make it the one
/// output that is not reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<(String, u64)>,
    pub jobs: usize,
    pub timings: Vec<(String, f64)>,
    pub total_seconds: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

/// SHA-256 of the compact JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configuration serializes");
    hex::encode(Sha256::digest(bytes))
}

impl RunLedger {
    pub fn start<T: Serialize>(command: &str, config: &T, jobs: usize) -> Self {
        RunLedger {
            command: command.to_string(),
            config_sha256: config_hash(config),
            seeds: Vec::new(),
            jobs,
            timings: Vec::new(),
            total_seconds: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.push((name.to_string(), value));
    }

    pub fn time(&mut self, name: impl Into<String>, seconds: f64) {
        self.timings.push((name.into(), seconds));
    }

    pub fn finish(&mut self) {
        if let Some(s) = self.started {
            self.total_seconds = s.elapsed().as_secs_f64();
        }
    }
}
