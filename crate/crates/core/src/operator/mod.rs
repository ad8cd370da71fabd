//! The lift / kernel-layer / projection neural operator.
//!
//! `𝒢(u) = Q(v_L)` with `v_0 = P u` and
//! `v_{i+1} = W_i v_i + σ(𝒦_i v_i + b_i)`, where `P`, `Q` are pointwise
//! affine maps, `W_i` is a pointwise linear map and `𝒦_i` an integral kernel.
//! The nonlinearity acts on the kernel branch only; the residual `W_i v_i`
//! stays linear. Bias `b_i` sits inside `σ` and is ignored by certificates.

mod checkpoint;
mod fixed_point;
mod kernel;
mod lipschitz;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CheckpointError, CheckpointManifest};
pub use fixed_point::{iterate_to_fixed_point, iterate_map, FixedPointResult};
pub use kernel::{apply_kernel, half_modes, DenseKernel, KernelKind, KernelSpec, SpectralKernel};
pub(crate) use kernel::apply_kernel_transpose;
pub use lipschitz::{
    lipschitz_cert, matrix_norm, normalize_to_unit_lipschitz, rescale_to_contraction, LipschitzCert,
    OperatorChain,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::num_complex::Complex64;
use crate::grid::{Field, GridSpec};
use crate::rng::rng_from_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("non-finite parameter in {0}")]
    NonFiniteParameter(String),
    #[error("non-finite intermediate state after {0}")]
    NonFiniteState(Stage),
}

/// Position in the forward pass, used for error reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Lift,
    Layer(usize),
    Projection,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Lift => write!(f, "lift"),
            Stage::Layer(i) => write!(f, "layer {i}"),
            Stage::Projection => write!(f, "projection"),
        }
    }
}

/// Pointwise nonlinearity. All three are 1-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative; relu uses the subgradient 0 at the kink.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn lipschitz(self) -> f64 {
        1.0
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Pointwise affine map `x ↦ W x + b` with `W` of shape `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn new(rows: usize, cols: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self, OperatorError> {
        if weight.len() != rows * cols || bias.len() != rows {
            return Err(OperatorError::Shape(format!(
                "affine {rows}×{cols} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Affine {
            rows,
            cols,
            weight,
            bias,
        })
    }

    /// `[I; 0]`-style embedding (`rows ≥ cols`) or extraction (`rows ≤ cols`).
    pub fn identity(rows: usize, cols: usize) -> Self {
        let mut weight = vec![0.0; rows * cols];
        for i in 0..rows.min(cols) {
            weight[i * cols + i] = 1.0;
        }
        Affine {
            rows,
            cols,
            weight,
            bias: vec![0.0; rows],
        }
    }

    pub fn apply(&self, field: &Field) -> Field {
        let grid = *field.grid();
        let n = grid.len();
        let mut out = vec![0.0; self.rows * n];
        pointwise_matmul(&self.weight, self.rows, self.cols, field.values(), n, &mut out);
        for r in 0..self.rows {
            for o in &mut out[r * n..(r + 1) * n] {
                *o += self.bias[r];
            }
        }
        Field::from_raw(grid, self.rows, out)
    }

    pub fn op_norm(&self) -> f64 {
        matrix_norm(self.rows, self.cols, &self.weight)
    }
}

/// `out[r, j] = Σ_c w[r, c] x[c, j]` over `n` grid points.
pub(crate) fn pointwise_matmul(w: &[f64], rows: usize, cols: usize, x: &[f64], n: usize, out: &mut [f64]) {
    for r in 0..rows {
        let o = &mut out[r * n..(r + 1) * n];
        o.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..cols {
            let wrc = w[r * cols + c];
            if wrc == 0.0 {
                continue;
            }
            for (ov, xv) in o.iter_mut().zip(&x[c * n..(c + 1) * n]) {
                *ov += wrc * xv;
            }
        }
    }
}

/// Transposed pointwise product `out[c, j] = Σ_r w[r, c] g[r, j]`.
pub(crate) fn pointwise_matmul_t(w: &[f64], rows: usize, cols: usize, g: &[f64], n: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..rows {
        for c in 0..cols {
            let wrc = w[r * cols + c];
            if wrc == 0.0 {
                continue;
            }
            let o = &mut out[c * n..(c + 1) * n];
            for (ov, gv) in o.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                *ov += wrc * gv;
            }
        }
    }
}

/// One kernel-integral layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Pointwise `W_i`, `d_v × d_v` row-major.
    pub weight: Vec<f64>,
    pub kernel: KernelSpec,
    pub activation: Activation,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn width(&self) -> usize {
        self.bias.len()
    }

    /// `(v_next, z)` where `z = 𝒦 v + b` is the pre-activation.
    pub(crate) fn forward_with_pre(&self, v: &Field) -> Result<(Field, Field), OperatorError> {
        let grid = *v.grid();
        let n = grid.len();
        let w = self.width();
        let mut z = apply_kernel(&self.kernel, v)?.into_values();
        for a in 0..w {
            for zv in &mut z[a * n..(a + 1) * n] {
                *zv += self.bias[a];
            }
        }
        let mut out = vec![0.0; w * n];
        pointwise_matmul(&self.weight, w, w, v.values(), n, &mut out);
        for (o, zv) in out.iter_mut().zip(&z) {
            *o += self.activation.apply(*zv);
        }
        Ok((Field::from_raw(grid, w, out), Field::from_raw(grid, w, z)))
    }

    pub fn forward(&self, v: &Field) -> Result<Field, OperatorError> {
        Ok(self.forward_with_pre(v)?.0)
    }
}

/// Architecture and initialisation settings for [`build_operator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub grid: GridSpec,
    #[serde(default = "one")]
    pub in_channels: usize,
    #[serde(default = "one")]
    pub out_channels: usize,
    /// Hidden channel count `d_v`.
    pub width: usize,
    /// Number of kernel layers `L`.
    pub layers: usize,
    pub kernel: KernelKind,
    pub activation: Activation,
    /// Multiplies the default init half-width `1/sqrt(fan_in)`; 0 gives an
    /// all-zero operator.
    #[serde(default = "unit")]
    pub init_scale: f64,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

impl OperatorConfig {
    pub fn validate(&self) -> Result<(), OperatorError> {
        if self.width < 1 {
            return Err(OperatorError::Config("width (d_v) must be >= 1".into()));
        }
        if self.layers < 1 {
            return Err(OperatorError::Config("layer count must be >= 1".into()));
        }
        if self.in_channels < 1 || self.out_channels < 1 {
            return Err(OperatorError::Config("channel counts must be >= 1".into()));
        }
        if let KernelKind::Spectral { k_max } = self.kernel {
            if 2 * k_max >= self.grid.n() {
                return Err(OperatorError::Config(format!(
                    "k_max = {k_max} must be below n/2 = {}",
                    self.grid.n() / 2
                )));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(OperatorError::Config("init_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Full operator: lift, layers, projection, and the grid it was built for.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralOperator {
    grid: GridSpec,
    lift: Affine,
    layers: Vec<LayerParams>,
    project: Affine,
}

fn uniform(rng: &mut impl Rng, a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        rng.random_range(-a..=a)
    }
}

/// Initialises an operator: zero biases, entries uniform in `[-a, a]` with
/// `a = init_scale / sqrt(fan_in)`. For dense kernels the bound applies to the
/// quadrature-weighted matrix `h^d M` with `fan_in = d_v · N`.
pub fn build_operator(config: &OperatorConfig, seed: u64) -> Result<NeuralOperator, OperatorError> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let grid = config.grid;
    let w = config.width;
    let scale = config.init_scale;
    let a_lift = scale / (config.in_channels as f64).sqrt();
    let lift = Affine::new(
        w,
        config.in_channels,
        (0..w * config.in_channels).map(|_| uniform(&mut rng, a_lift)).collect(),
        vec![0.0; w],
    )?;
    let a_w = scale / (w as f64).sqrt();
    let mut layers = Vec::with_capacity(config.layers);
    for _ in 0..config.layers {
        let weight = (0..w * w).map(|_| uniform(&mut rng, a_w)).collect();
        let kernel = match config.kernel {
            KernelKind::Spectral { k_max } => {
                let modes = half_modes(grid.dim(), k_max);
                let mut mult = Vec::with_capacity(modes.len() * w * w);
                for k in &modes {
                    for _ in 0..w * w {
                        let re = uniform(&mut rng, a_w);
                        let im = if *k == [0, 0] { 0.0 } else { uniform(&mut rng, a_w) };
                        mult.push(Complex64::new(re, im));
                    }
                }
                KernelSpec::Spectral(SpectralKernel::new(grid.dim(), k_max, w, mult)?)
            }
            KernelKind::Dense => {
                let side = w * grid.len();
                let a = scale / ((side as f64).sqrt() * grid.cell_volume());
                let m = (0..side * side).map(|_| uniform(&mut rng, a)).collect();
                KernelSpec::Dense(DenseKernel::new(grid, w, m)?)
            }
        };
        layers.push(LayerParams {
            weight,
            kernel,
            activation: config.activation,
            bias: vec![0.0; w],
        });
    }
    let project = Affine::new(
        config.out_channels,
        w,
        (0..config.out_channels * w).map(|_| uniform(&mut rng, a_w)).collect(),
        vec![0.0; config.out_channels],
    )?;
    NeuralOperator::from_parts(grid, lift, layers, project)
}

/// Intermediate states kept for reverse-mode differentiation.
pub(crate) struct Trace {
    /// `v_0 .. v_L`.
    pub states: Vec<Field>,
    /// Pre-activations `z_0 .. z_{L-1}`.
    pub pre: Vec<Field>,
}

impl NeuralOperator {
    pub fn from_parts(
        grid: GridSpec,
        lift: Affine,
        layers: Vec<LayerParams>,
        project: Affine,
    ) -> Result<Self, OperatorError> {
        if layers.is_empty() {
            return Err(OperatorError::Config("at least one layer required".into()));
        }
        let w = lift.rows;
        if w == 0 || lift.cols == 0 || project.rows == 0 {
            return Err(OperatorError::Config("channel counts must be >= 1".into()));
        }
        if project.cols != w {
            return Err(OperatorError::Shape(format!(
                "projection expects {} channels, lift produces {w}",
                project.cols
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.len() != w * w || l.bias.len() != w || l.kernel.channels() != w {
                return Err(OperatorError::Shape(format!("layer {i} does not match width {w}")));
            }
            l.kernel.check_grid(&grid)?;
        }
        let op = NeuralOperator {
            grid,
            lift,
            layers,
            project,
        };
        if op.params_flat().iter().any(|v| !v.is_finite()) {
            return Err(OperatorError::NonFiniteParameter("operator".into()));
        }
        Ok(op)
    }

    /// Operator that returns its input: identity lift into `width` channels,
    /// `W = scale·I`, zero kernels (of `kind`), identity activation, and
    /// extraction of the first `channels` channels.
    pub fn linear_scaling(
        grid: GridSpec,
        channels: usize,
        width: usize,
        scales: &[f64],
        kind: KernelKind,
    ) -> Result<Self, OperatorError> {
        let layers = scales
            .iter()
            .map(|&s| {
                let mut weight = vec![0.0; width * width];
                for i in 0..width {
                    weight[i * width + i] = s;
                }
                let kernel = match kind {
                    KernelKind::Spectral { k_max } => {
                        KernelSpec::Spectral(SpectralKernel::zeros(grid.dim(), k_max, width))
                    }
                    KernelKind::Dense => KernelSpec::Dense(DenseKernel::new(
                        grid,
                        width,
                        vec![0.0; (width * grid.len()).pow(2)],
                    )?),
                };
                Ok(LayerParams {
                    weight,
                    kernel,
                    activation: Activation::Identity,
                    bias: vec![0.0; width],
                })
            })
            .collect::<Result<Vec<_>, OperatorError>>()?;
        NeuralOperator::from_parts(
            grid,
            Affine::identity(width, channels),
            layers,
            Affine::identity(channels, width),
        )
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn in_channels(&self) -> usize {
        self.lift.cols
    }

    pub fn out_channels(&self) -> usize {
        self.project.rows
    }

    /// Hidden width `d_v`.
    pub fn width(&self) -> usize {
        self.lift.rows
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn lift(&self) -> &Affine {
        &self.lift
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn project(&self) -> &Affine {
        &self.project
    }

    pub(crate) fn project_mut(&mut self) -> &mut Affine {
        &mut self.project
    }

    pub(crate) fn lift_mut(&mut self) -> &mut Affine {
        &mut self.lift
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    /// Kernel kind shared by every layer, if uniform.
    pub fn kernel_kind(&self) -> Option<KernelKind> {
        let k = self.layers[0].kernel.kind();
        self.layers.iter().all(|l| l.kernel.kind() == k).then_some(k)
    }

    /// Operator whose layers are `self`'s layers repeated `copies` times.
    pub fn stacked(&self, copies: usize) -> Result<Self, OperatorError> {
        let layers = (0..copies).flat_map(|_| self.layers.iter().cloned()).collect();
        NeuralOperator::from_parts(self.grid, self.lift.clone(), layers, self.project.clone())
    }

    fn check_input(&self, field: &Field) -> Result<(), OperatorError> {
        if field.channels() != self.in_channels() {
            return Err(OperatorError::GridMismatch(format!(
                "operator expects {} input channel(s), got {}",
                self.in_channels(),
                field.channels()
            )));
        }
        for l in &self.layers {
            l.kernel.check_grid(field.grid())?;
        }
        Ok(())
    }

    pub fn forward(&self, field: &Field) -> Result<Field, OperatorError> {
        self.check_input(field)?;
        let mut v = self.lift.apply(field);
        guard(&v, Stage::Lift)?;
        for (i, layer) in self.layers.iter().enumerate() {
            v = layer.forward(&v)?;
            guard(&v, Stage::Layer(i))?;
        }
        let out = self.project.apply(&v);
        guard(&out, Stage::Projection)?;
        Ok(out)
    }

    pub(crate) fn forward_trace(&self, field: &Field) -> Result<Trace, OperatorError> {
        self.check_input(field)?;
        let mut states = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        let v0 = self.lift.apply(field);
        guard(&v0, Stage::Lift)?;
        states.push(v0);
        for (i, layer) in self.layers.iter().enumerate() {
            let (next, z) = layer.forward_with_pre(states.last().unwrap())?;
            guard(&next, Stage::Layer(i))?;
            states.push(next);
            pre.push(z);
        }
        guard(&self.project.apply(states.last().unwrap()), Stage::Projection)?;
        Ok(Trace { states, pre })
    }

    /// Names and lengths of the parameter blocks, in flat/payload order.
    pub fn param_layout(&self) -> Vec<(String, usize)> {
        let mut out = vec![
            ("lift.weight".to_string(), self.lift.weight.len()),
            ("lift.bias".to_string(), self.lift.bias.len()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layers.{i}.weight"), l.weight.len()));
            let kname = match l.kernel {
                KernelSpec::Dense(_) => "dense",
                KernelSpec::Spectral(_) => "multipliers",
            };
            out.push((format!("layers.{i}.kernel.{kname}"), l.kernel.param_len()));
            out.push((format!("layers.{i}.bias"), l.bias.len()));
        }
        out.push(("project.weight".to_string(), self.project.weight.len()));
        out.push(("project.bias".to_string(), self.project.bias.len()));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_layout().iter().map(|(_, n)| n).sum()
    }

    /// All parameters flattened in [`NeuralOperator::param_layout`] order.
    /// Complex multipliers are stored as `(re, im)` pairs.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.lift.weight);
        out.extend_from_slice(&self.lift.bias);
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            l.kernel.write_params(&mut out);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.project.weight);
        out.extend_from_slice(&self.project.bias);
        out
    }

    /// Same architecture with parameters replaced from a flat vector.
    pub fn with_params(&self, flat: &[f64]) -> Result<Self, OperatorError> {
        if flat.len() != self.param_count() {
            return Err(OperatorError::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        if let Some(i) = flat.iter().position(|v| !v.is_finite()) {
            return Err(OperatorError::NonFiniteParameter(format!("flat index {i}")));
        }
        let mut op = self.clone();
        let mut pos = 0;
        let mut take = |len: usize| {
            let s = &flat[pos..pos + len];
            pos += len;
            s
        };
        op.lift.weight.copy_from_slice(take(self.lift.weight.len()));
        op.lift.bias.copy_from_slice(take(self.lift.bias.len()));
        for l in &mut op.layers {
            let wl = l.weight.len();
            l.weight.copy_from_slice(take(wl));
            let kl = l.kernel.param_len();
            l.kernel.read_params(take(kl));
            let bl = l.bias.len();
            l.bias.copy_from_slice(take(bl));
        }
        let (pw, pb) = (op.project.weight.len(), op.project.bias.len());
        op.project.weight.copy_from_slice(take(pw));
        op.project.bias.copy_from_slice(take(pb));
        Ok(op)
    }
}

fn guard(field: &Field, stage: Stage) -> Result<(), OperatorError> {
    if field.is_finite() {
        Ok(())
    } else {
        Err(OperatorError::NonFiniteState(stage))
    }
}

/// Free-function form of [`NeuralOperator::forward`].
pub fn forward(op: &NeuralOperator, field: &Field) -> Result<Field, OperatorError> {
    op.forward(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, resample, GrfSampler};

    pub(crate) fn spectral_config(n: usize, width: usize, layers: usize, k_max: usize) -> OperatorConfig {
        OperatorConfig {
            grid: make_grid(1, n, 1.0).unwrap(),
            in_channels: 1,
            out_channels: 1,
            width,
            layers,
            kernel: KernelKind::Spectral { k_max },
            activation: Activation::Tanh,
            init_scale: 1.0,
        }
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = spectral_config(32, 4, 2, 8);
        assert_eq!(build_operator(&cfg, 7).unwrap(), build_operator(&cfg, 7).unwrap());
        assert_ne!(
            build_operator(&cfg, 7).unwrap().params_flat(),
            build_operator(&cfg, 8).unwrap().params_flat()
        );
    }

    #[test]
    fn build_rejects_bad_configs() {
        assert!(build_operator(&spectral_config(32, 4, 2, 16), 0).is_err());
        assert!(build_operator(&spectral_config(32, 0, 2, 4), 0).is_err());
        assert!(build_operator(&spectral_config(32, 4, 0, 4), 0).is_err());
    }

    #[test]
    fn zero_operator_outputs_projection_bias() {
        let mut cfg = spectral_config(32, 4, 2, 8);
        cfg.init_scale = 0.0;
        let mut op = build_operator(&cfg, 1).unwrap();
        op.project_mut().bias[0] = 0.75;
        let u = GrfSampler::default().sample(&cfg.grid, 1);
        let out = op.forward(&u).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn identity_pipeline_reproduces_input() {
        let g = make_grid(2, 16, 1.0).unwrap();
        let op = NeuralOperator::linear_scaling(g, 2, 3, &[1.0, 1.0], KernelKind::Spectral { k_max: 4 })
            .unwrap();
        let u = GrfSampler::default().sample(&g, 2);
        assert!(op.forward(&u).unwrap().max_abs_diff(&u).unwrap() < 1e-12);
    }

    #[test]
    fn resolution_transfer_for_band_limited_input() {
        // Linear layers keep band-limited inputs band-limited, so both grids
        // must agree to rounding. The oracle is the fine-grid computation.
        let mut cfg = spectral_config(64, 4, 2, 6);
        cfg.activation = Activation::Identity;
        let op = build_operator(&cfg, 3).unwrap();
        let u = GrfSampler::new(1.0, 1.0, 5).unwrap().band_limited(6).sample(&cfg.grid, 1);
        let fine = resample(&u, 128).unwrap();
        let a = op.forward(&u).unwrap();
        let b = resample(&op.forward(&fine).unwrap(), 64).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }

    #[test]
    fn flat_params_round_trip() {
        let op = build_operator(&spectral_config(32, 3, 2, 4), 2).unwrap();
        let flat = op.params_flat();
        assert_eq!(flat.len(), op.param_count());
        assert_eq!(op.with_params(&flat).unwrap(), op);
        assert!(op.with_params(&flat[1..]).is_err());
    }

    #[test]
    fn non_finite_state_reports_stage() {
        let g = make_grid(1, 16, 1.0).unwrap();
        let op = NeuralOperator::linear_scaling(g, 1, 1, &[1e300, 1e300], KernelKind::Spectral { k_max: 2 })
            .unwrap();
        let u = Field::constant(g, 1, 1e10);
        assert_eq!(
            op.forward(&u).unwrap_err(),
            OperatorError::NonFiniteState(Stage::Layer(0))
        );
    }
}
