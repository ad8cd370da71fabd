//! Input/target pairs and the `NOLABDS1` file format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::target::{apply_target, TargetOperator};
use crate::binio::{self, FrameError};
use crate::grid::{Field, GridSpec, GrfSampler};
use crate::par;
use crate::rng::derive_seed;

pub const DATASET_MAGIC: &[u8; 8] = b"NOLABDS1";
pub const DATASET_VERSION: u32 = 1;
const SAMPLE_STREAM: u64 = 0xDA7A;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("invalid dataset header: {0}")]
    Header(String),
    #[error("payload holds {found} values but the header implies {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("dataset must hold at least one sample")]
    Empty,
    #[error("sample {0} does not match the dataset grid or channels")]
    Inconsistent(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    pub inputs: Vec<Field>,
    pub targets: Vec<Field>,
    pub sampler: GrfSampler,
    pub target: TargetOperator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetHeader {
    version: u32,
    dim: usize,
    n: usize,
    length: f64,
    channels_in: usize,
    channels_out: usize,
    n_samples: usize,
    target: TargetOperator,
    sampler: GrfSampler,
}

/// Draws `n_samples` GRF inputs (seed of sample `i` derived from the
/// sampler's seed) and evaluates the target on each.
pub fn gen_dataset(
    target: &TargetOperator,
    sampler: &GrfSampler,
    grid: &GridSpec,
    n_samples: usize,
) -> Result<Dataset, DatasetError> {
    if n_samples == 0 {
        return Err(DatasetError::Empty);
    }
    let pairs = par::map(n_samples, |i| {
        let s = sampler.with_seed(derive_seed(sampler.seed, SAMPLE_STREAM, i as u64));
        let u = s.sample(grid, 1);
        let t = apply_target(target, &u);
        (u, t)
    });
    let (inputs, targets) = pairs.into_iter().unzip();
    Ok(Dataset {
        grid: *grid,
        inputs,
        targets,
        sampler: sampler.clone(),
        target: target.clone(),
    })
}

impl Dataset {
    pub fn new(
        inputs: Vec<Field>,
        targets: Vec<Field>,
        sampler: GrfSampler,
        target: TargetOperator,
    ) -> Result<Self, DatasetError> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(DatasetError::Empty);
        }
        let grid = *inputs[0].grid();
        let (ci, co) = (inputs[0].channels(), targets[0].channels());
        for (i, (u, t)) in inputs.iter().zip(&targets).enumerate() {
            if *u.grid() != grid || *t.grid() != grid || u.channels() != ci || t.channels() != co {
                return Err(DatasetError::Inconsistent(i));
            }
        }
        Ok(Dataset {
            grid,
            inputs,
            targets,
            sampler,
            target,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn channels_in(&self) -> usize {
        self.inputs[0].channels()
    }

    pub fn channels_out(&self) -> usize {
        self.targets[0].channels()
    }

    pub fn pair(&self, i: usize) -> (&Field, &Field) {
        (&self.inputs[i], &self.targets[i])
    }

    /// Sub-dataset of the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            grid: self.grid,
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
            sampler: self.sampler.clone(),
            target: self.target.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = DatasetHeader {
            version: DATASET_VERSION,
            dim: self.grid.dim(),
            n: self.grid.n(),
            length: self.grid.length(),
            channels_in: self.channels_in(),
            channels_out: self.channels_out(),
            n_samples: self.len(),
            target: self.target.clone(),
            sampler: self.sampler.clone(),
        };
        let mut payload = Vec::new();
        for u in &self.inputs {
            payload.extend_from_slice(u.values());
        }
        for t in &self.targets {
            payload.extend_from_slice(t.values());
        }
        binio::encode(DATASET_MAGIC, &serde_json::to_vec(&header).expect("header serializes"), &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let (raw, payload) = binio::decode(DATASET_MAGIC, bytes)?;
        let value: serde_json::Value =
            serde_json::from_slice(raw).map_err(|e| DatasetError::Header(e.to_string()))?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != DATASET_VERSION {
            return Err(DatasetError::Version(version));
        }
        let h: DatasetHeader = serde_json::from_value(value).map_err(|e| DatasetError::Header(e.to_string()))?;
        let grid = GridSpec::new(h.dim, h.n, h.length).map_err(|e| DatasetError::Header(e.to_string()))?;
        if h.n_samples == 0 || h.channels_in == 0 || h.channels_out == 0 {
            return Err(DatasetError::Empty);
        }
        let (si, so) = (h.channels_in * grid.len(), h.channels_out * grid.len());
        let expected = h.n_samples * (si + so);
        if payload.len() != expected {
            return Err(DatasetError::PayloadLength {
                expected,
                found: payload.len(),
            });
        }
        let (ins, outs) = payload.split_at(h.n_samples * si);
        let inputs = ins
            .chunks_exact(si)
            .map(|c| Field::from_raw(grid, h.channels_in, c.to_vec()))
            .collect();
        let targets = outs
            .chunks_exact(so)
            .map(|c| Field::from_raw(grid, h.channels_out, c.to_vec()))
            .collect();
        Ok(Dataset {
            grid,
            inputs,
            targets,
            sampler: h.sampler,
            target: h.target,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_bytes()).map_err(FrameError::from)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::from_bytes(&std::fs::read(path).map_err(FrameError::from)?)
    }
}
