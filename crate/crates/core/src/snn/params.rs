//! Named parameter tensors, initialization and the binary checkpoint format.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{ModelKind, NetworkConfig, Plan};
use super::real::Real;
use crate::error::ParseErrorKind;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

/// All trainable tensors of a network, in the order of
/// [`Plan::param_specs`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<F = f32> {
    pub tensors: Vec<Param<F>>,
}

impl<F: Real> NetworkParams<F> {
    pub fn zeros(plan: &Plan) -> Self {
        NetworkParams {
            tensors: plan
                .param_specs()
                .into_iter()
                .map(|s| Param {
                    data: vec![F::zero(); s.shape.iter().product()],
                    name: s.name,
                    shape: s.shape,
                })
                .collect(),
        }
    }

    /// Uniform weights in `±gain·sqrt(3 / fan_in)` (see [`ParamSpec`](super::config::ParamSpec)), zero
    /// biases. Each tensor draws from its own stream keyed by position.
    pub fn init(plan: &Plan, seed: u64) -> Self {
        let mut p = Self::zeros(plan);
        for (i, (t, spec)) in p.tensors.iter_mut().zip(plan.param_specs()).enumerate() {
            if spec.fan_in == 0 {
                continue;
            }
            let bound = spec.gain * (3.0 / spec.fan_in as f64).sqrt();
            let mut r = rng::stream(seed, &[i as u64]);
            for v in &mut t.data {
                *v = F::from_f64_lossy(r.random_range(-bound..bound));
            }
        }
        p
    }

    pub fn get(&self, name: &str) -> Option<&Param<F>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<F>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<G: Real>(&self) -> NetworkParams<G> {
        NetworkParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| Param {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t
                        .data
                        .iter()
                        .map(|v| G::from_f64_lossy(v.as_f64()))
                        .collect(),
                })
                .collect(),
        }
    }

    /// Fails unless names and shapes match the plan exactly.
    pub fn check(&self, plan: &Plan) -> Result<()> {
        let specs = plan.param_specs();
        if specs.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for (s, t) in specs.iter().zip(&self.tensors) {
            if s.name != t.name
                || s.shape != t.shape
                || t.data.len() != s.shape.iter().product::<usize>()
            {
                return Err(Error::Shape(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    t.name, t.shape, s.name, s.shape
                )));
            }
        }
        Ok(())
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EVSNNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    kind: ModelKind,
    config: NetworkConfig,
}

/// A trained network: architecture, model kind and `f32` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: NetworkConfig,
    pub params: NetworkParams<f32>,
}

/// Layout (little-endian): magic, u32 version, u32 length + JSON metadata,
/// u32 tensor count, then per tensor u32 name length, name, u32 rank,
/// u64 dims, f32 values.
pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let meta = serde_json::to_vec(&CheckpointMeta {
        kind: ck.kind,
        config: ck.config.clone(),
    })
    .expect("checkpoint metadata serializes");
    let mut out = Vec::with_capacity(64 + meta.len() + ck.params.len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(ck.params.tensors.len() as u32).to_le_bytes());
    for t in &ck.params.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(ParseErrorKind::Truncated));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn err(&self, kind: ParseErrorKind) -> Error {
        Error::Parse {
            offset: self.pos as u64,
            kind,
        }
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        r.pos = 0;
        return Err(r.err(ParseErrorKind::BadMagic));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        r.pos -= 4;
        return Err(r.err(ParseErrorKind::Version(version)));
    }
    let meta_len = r.u32()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len)?)?;
    let plan = Plan::new(&meta.config, meta.kind)?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let at = r.pos;
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Parse {
                offset: at as u64,
                kind: ParseErrorKind::Tensor("name is not UTF-8".into()),
            })?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > 8 {
            return Err(r.err(ParseErrorKind::Tensor(format!("rank {rank} of `{name}`"))));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|n| n.checked_mul(4).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| {
                r.err(ParseErrorKind::Tensor(format!(
                    "shape {shape:?} of `{name}`"
                )))
            })?;
        let raw = r.take(numel * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Param { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(r.err(ParseErrorKind::TrailingBytes));
    }
    let params = NetworkParams { tensors };
    params.check(&plan)?;
    Ok(Checkpoint {
        kind: meta.kind,
        config: meta.config,
        params,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| e.context(format!("checkpoint {}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = NetworkConfig::sew_tiny(4, 6, 16, 16);
        let plan = Plan::new(&config, ModelKind::Spiking).unwrap();
        Checkpoint {
            kind: ModelKind::Spiking,
            params: NetworkParams::init(&plan, 7),
            config,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let ck = sample();
        let plan = Plan::new(&ck.config, ck.kind).unwrap();
        assert_eq!(NetworkParams::<f32>::init(&plan, 7), ck.params);
        assert_ne!(NetworkParams::<f32>::init(&plan, 8), ck.params);
        for (t, s) in ck.params.tensors.iter().zip(plan.param_specs()) {
            if s.fan_in == 0 {
                assert!(t.data.iter().all(|&v| v == 0.0), "{} is a bias", t.name);
            } else {
                let b = (s.gain * (3.0 / s.fan_in as f64).sqrt()) as f32;
                assert!(t.data.iter().all(|v| v.abs() <= b));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let ck = sample();
        let bytes = encode_checkpoint(&ck);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), ck);
        assert_eq!(
            encode_checkpoint(&decode_checkpoint(&bytes).unwrap()),
            bytes
        );
    }

    #[test]
    fn checkpoint_corruption_is_reported() {
        let bytes = encode_checkpoint(&sample());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_checkpoint(&bad),
            Err(Error::Parse {
                offset: 0,
                kind: ParseErrorKind::BadMagic
            })
        ));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 1]),
            Err(Error::Parse {
                kind: ParseErrorKind::Truncated,
                ..
            })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_checkpoint(&long),
            Err(Error::Parse {
                kind: ParseErrorKind::TrailingBytes,
                ..
            })
        ));
        let mut ver = bytes;
        ver[8] = 9;
        assert!(matches!(
            decode_checkpoint(&ver),
            Err(Error::Parse {
                offset: 8,
                kind: ParseErrorKind::Version(9)
            })
        ));
    }
}
