//! `NOLABCK1` checkpoint files.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    half_modes, Activation, Affine, DenseKernel, KernelKind, KernelSpec, LayerParams, NeuralOperator,
    OperatorError, SpectralKernel,
};
use crate::binio::{self, FrameError};
use crate::grid::num_complex::Complex64;
use crate::grid::GridSpec;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NOLABCK1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("payload holds {found} values but the manifest implies {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("operator cannot be saved: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub version: u32,
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub in_channels: usize,
    pub out_channels: usize,
    pub d_v: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub activation: Activation,
    pub kernel: KernelKind,
    pub param_order: Vec<String>,
}

impl CheckpointManifest {
    fn for_operator(op: &NeuralOperator) -> Result<Self, CheckpointError> {
        let kernel = op
            .kernel_kind()
            .ok_or_else(|| CheckpointError::Unsupported("layers mix kernel families".into()))?;
        let activation = op.layers()[0].activation;
        if op.layers().iter().any(|l| l.activation != activation) {
            return Err(CheckpointError::Unsupported("layers mix activations".into()));
        }
        let g = op.grid();
        Ok(CheckpointManifest {
            version: CHECKPOINT_VERSION,
            dim: g.dim(),
            n: g.n(),
            length: g.length(),
            in_channels: op.in_channels(),
            out_channels: op.out_channels(),
            d_v: op.width(),
            layers: op.depth(),
            activation,
            kernel,
            param_order: op.param_layout().into_iter().map(|(name, _)| name).collect(),
        })
    }

    /// Zero-valued operator with the manifest's architecture.
    fn skeleton(&self) -> Result<NeuralOperator, CheckpointError> {
        let grid = GridSpec::new(self.dim, self.n, self.length).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let w = self.d_v;
        if w == 0 || self.layers == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(CheckpointError::Manifest("zero-sized architecture".into()));
        }
        let layers = (0..self.layers)
            .map(|_| {
                let kernel = match self.kernel {
                    KernelKind::Spectral { k_max } => {
                        let modes = half_modes(self.dim, k_max).len();
                        KernelSpec::Spectral(SpectralKernel::new(
                            self.dim,
                            k_max,
                            w,
                            vec![Complex64::new(0.0, 0.0); modes * w * w],
                        )?)
                    }
                    KernelKind::Dense => {
                        KernelSpec::Dense(DenseKernel::new(grid, w, vec![0.0; (w * grid.len()).pow(2)])?)
                    }
                };
                Ok(LayerParams {
                    weight: vec![0.0; w * w],
                    kernel,
                    activation: self.activation,
                    bias: vec![0.0; w],
                })
            })
            .collect::<Result<Vec<_>, OperatorError>>()?;
        Ok(NeuralOperator::from_parts(
            grid,
            Affine::new(w, self.in_channels, vec![0.0; w * self.in_channels], vec![0.0; w])?,
            layers,
            Affine::new(
                self.out_channels,
                w,
                vec![0.0; self.out_channels * w],
                vec![0.0; self.out_channels],
            )?,
        )?)
    }
}

pub fn checkpoint_bytes(op: &NeuralOperator) -> Result<Vec<u8>, CheckpointError> {
    let manifest = CheckpointManifest::for_operator(op)?;
    let header = serde_json::to_vec(&manifest).expect("manifest serializes");
    Ok(binio::encode(CHECKPOINT_MAGIC, &header, &op.params_flat()))
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<NeuralOperator, CheckpointError> {
    let (header, payload) = binio::decode(CHECKPOINT_MAGIC, bytes)?;
    let value: serde_json::Value =
        serde_json::from_slice(header).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let manifest: CheckpointManifest =
        serde_json::from_value(value).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
    let skeleton = manifest.skeleton()?;
    let expected_order: Vec<String> = skeleton.param_layout().into_iter().map(|(n, _)| n).collect();
    if manifest.param_order != expected_order {
        return Err(CheckpointError::Manifest("param_order does not match the architecture".into()));
    }
    if payload.len() != skeleton.param_count() {
        return Err(CheckpointError::PayloadLength {
            expected: skeleton.param_count(),
            found: payload.len(),
        });
    }
    Ok(skeleton.with_params(&payload)?)
}

pub fn save_checkpoint(op: &NeuralOperator, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let bytes = checkpoint_bytes(op)?;
    std::fs::write(path, bytes).map_err(FrameError::from)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NeuralOperator, CheckpointError> {
    let bytes = std::fs::read(path).map_err(FrameError::from)?;
    checkpoint_from_bytes(&bytes)
}
