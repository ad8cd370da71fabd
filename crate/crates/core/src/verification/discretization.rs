//! Accumulation of per-layer discretization error through deep stacks.

use serde::{Deserialize, Serialize};

use super::common::OperatorSetup;
use super::report::{ReportBuilder, VerifyReport};
use super::VerifyError;
use crate::grid::{make_grid, resample, Field, GrfSampler};
use crate::operator::{lipschitz_cert, normalize_to_unit_lipschitz, Activation, KernelKind, NeuralOperator, OperatorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    /// Single-layer operator on the coarse grid; stacked `L` times.
    pub operator: OperatorSetup,
    pub fine_factor: usize,
    pub l_list: Vec<usize>,
    /// Inputs are band-limited so that they are exact on the coarse grid.
    pub sampler: GrfSampler,
    pub inputs: usize,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig {
            operator: OperatorSetup {
                config: OperatorConfig {
                    grid: make_grid(1, 32, 1.0).unwrap(),
                    in_channels: 1,
                    out_channels: 1,
                    width: 4,
                    layers: 1,
                    kernel: KernelKind::Spectral { k_max: 8 },
                    activation: Activation::Tanh,
                    init_scale: 1.0,
                },
                seed: 13,
                bias_scale: 0.5,
            },
            fine_factor: 4,
            l_list: vec![1, 2, 4, 8],
            sampler: GrfSampler::new(1.0, 2.0, 50).unwrap().band_limited(8),
            inputs: 8,
        }
    }
}

impl DiscretizationConfig {
    pub fn quick(self) -> Self {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationTrace {
    /// Local error `‖layer_i(R f_i) − R layer_i(f_i)‖` of each layer.
    pub per_layer: Vec<f64>,
    /// `‖𝒢(u_c) − R 𝒢(u_f)‖` on the coarse grid.
    pub total: f64,
}

/// Runs `op` once per grid. `R` is spectral restriction to the coarse grid
/// and `f_i` the fine-grid hidden state entering layer `i`.
pub fn trace_discretization(op: &NeuralOperator, coarse: &Field, fine_n: usize) -> Result<DiscretizationTrace, VerifyError> {
    let n_c = coarse.grid().n();
    let fine = resample(coarse, fine_n)?;
    let mut f = op.lift().apply(&fine);
    let mut per_layer = Vec::with_capacity(op.depth());
    for layer in op.layers() {
        let next = layer.forward(&f)?;
        let local = layer.forward(&resample(&f, n_c)?)?.sub(&resample(&next, n_c)?)?;
        per_layer.push(local.l2_norm());
        f = next;
    }
    let fine_out = resample(&op.project().apply(&f), n_c)?;
    let total = op.forward(coarse)?.sub(&fine_out)?.l2_norm();
    Ok(DiscretizationTrace { per_layer, total })
}

pub fn verify_discretization(
    config: &DiscretizationConfig,
    model: Option<&NeuralOperator>,
) -> Result<VerifyReport, VerifyError> {
    if config.fine_factor < 2 || !config.fine_factor.is_power_of_two() {
        return Err(VerifyError::Config("fine_factor must be a power of two ≥ 2".into()));
    }
    if config.l_list.is_empty() || config.l_list.contains(&0) || config.inputs == 0 {
        return Err(VerifyError::Config("l_list and inputs must be positive".into()));
    }
    let base = match model {
        Some(m) => m.clone(),
        None => config.operator.build()?,
    };
    if !matches!(base.kernel_kind(), Some(KernelKind::Spectral { .. })) {
        return Err(VerifyError::Config("discretization needs spectral kernels".into()));
    }
    let op = normalize_to_unit_lipschitz(&base);
    let cert = lipschitz_cert(&op);
    let worst_factor = cert
        .layer_l
        .iter()
        .chain([cert.lift_l, cert.project_l].iter())
        .cloned()
        .fold(0.0, f64::max);
    let mut rep = ReportBuilder::new("discretization", config);
    rep.seed("operator", config.operator.seed);
    rep.seed("inputs", config.sampler.seed);
    rep.check_le("per-layer certificate after normalization", worst_factor, 1.0 + 1e-12);
    let grid = *op.grid();
    let fine_n = grid.n() * config.fine_factor;
    let inputs: Vec<Field> = (0..config.inputs)
        .map(|i| config.sampler.with_seed(config.sampler.seed + i as u64).sample(&grid, 1))
        .collect();
    let mut totals = Vec::new();
    let mut bounds = Vec::new();
    for &l in &config.l_list {
        let deep = op.stacked(l)?;
        let mut violations = 0usize;
        let mut worst_total = 0.0f64;
        let mut worst_bound = 0.0f64;
        for u in &inputs {
            let t = trace_discretization(&deep, u, fine_n)?;
            let eps_h = t.per_layer.iter().cloned().fold(0.0, f64::max);
            let bound = l as f64 * eps_h * (1.0 + 1e-6);
            if t.total > bound {
                violations += 1;
            }
            worst_total = worst_total.max(t.total);
            worst_bound = worst_bound.max(bound);
        }
        rep.check_le(format!("L={l}: inputs with total > L·ε_h"), violations as f64, 0.0);
        rep.measure(format!("L{l}.total_max"), worst_total);
        rep.measure(format!("L{l}.bound_max"), worst_bound);
        totals.push(worst_total);
        bounds.push(worst_bound);
    }
    rep.series("depth", config.l_list.iter().map(|l| *l as f64).collect());
    rep.series("total", totals);
    rep.series("bound", bounds);
    Ok(rep.finish())
}
