//! Squared `L²` loss and its reverse-mode gradient through the layer
//! recursion.

use thiserror::Error;

use crate::grid::Field;
use crate::operator::{
    apply_kernel_transpose, pointwise_matmul_t, NeuralOperator, OperatorError,
};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GradError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("prediction/target shape mismatch at sample {0}")]
    Shape(usize),
    #[error("non-finite gradient in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// `min(‖pred − target‖²_{L²}, clip)`; `clip = ∞` disables clipping.
pub fn mse_loss(pred: &Field, target: &Field, clip: f64) -> f64 {
    let h = pred.grid().cell_volume();
    let s: f64 = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    (h * s).min(clip)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    /// Kernel parameters in checkpoint order (`(re, im)` pairs for spectral).
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient with the same block structure as the operator's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub lift_weight: Vec<f64>,
    pub lift_bias: Vec<f64>,
    pub layers: Vec<LayerGrad>,
    pub project_weight: Vec<f64>,
    pub project_bias: Vec<f64>,
}

impl ParamGrad {
    fn zeros_like(op: &NeuralOperator) -> Self {
        ParamGrad {
            lift_weight: vec![0.0; op.lift().weight.len()],
            lift_bias: vec![0.0; op.lift().bias.len()],
            layers: op
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![0.0; l.weight.len()],
                    kernel: vec![0.0; l.kernel.param_len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            project_weight: vec![0.0; op.project().weight.len()],
            project_bias: vec![0.0; op.project().bias.len()],
        }
    }

    /// Flattened in [`NeuralOperator::params_flat`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.lift_weight);
        out.extend_from_slice(&self.lift_bias);
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.kernel);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.project_weight);
        out.extend_from_slice(&self.project_bias);
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![&mut self.lift_weight, &mut self.lift_bias];
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.kernel);
            out.push(&mut l.bias);
        }
        out.push(&mut self.project_weight);
        out.push(&mut self.project_bias);
        out
    }

    fn add_scaled(&mut self, other: &mut ParamGrad, a: f64) {
        for (x, y) in self.blocks_mut().into_iter().zip(other.blocks_mut()) {
            for (p, q) in x.iter_mut().zip(y.iter()) {
                *p += a * q;
            }
        }
    }
}

/// `Σ_j g[:, j] x[:, j]ᵀ`, row-major `rows × cols`, accumulated into `out`.
fn outer_sum(g: &[f64], rows: usize, x: &[f64], cols: usize, n: usize, out: &mut [f64]) {
    for r in 0..rows {
        let gr = &g[r * n..(r + 1) * n];
        for c in 0..cols {
            let xc = &x[c * n..(c + 1) * n];
            out[r * cols + c] += gr.iter().zip(xc).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

fn channel_sums(g: &[f64], rows: usize, n: usize, out: &mut [f64]) {
    for r in 0..rows {
        out[r] += g[r * n..(r + 1) * n].iter().sum::<f64>();
    }
}

/// Backpropagates the output cotangent `g_out` (Euclidean, per grid value).
/// Returns the parameter gradient and the input cotangent.
pub(crate) fn backward(op: &NeuralOperator, input: &Field, g_out: &Field) -> Result<(ParamGrad, Field), OperatorError> {
    let trace = op.forward_trace(input)?;
    let grid = *input.grid();
    let n = grid.len();
    let w = op.width();
    let mut grad = ParamGrad::zeros_like(op);

    let proj = op.project();
    let v_last = trace.states.last().unwrap();
    outer_sum(g_out.values(), proj.rows, v_last.values(), proj.cols, n, &mut grad.project_weight);
    channel_sums(g_out.values(), proj.rows, n, &mut grad.project_bias);
    let mut g = vec![0.0; w * n];
    pointwise_matmul_t(&proj.weight, proj.rows, proj.cols, g_out.values(), n, &mut g);

    for (i, layer) in op.layers().iter().enumerate().rev() {
        let v = &trace.states[i];
        let z = &trace.pre[i];
        let lg = &mut grad.layers[i];
        outer_sum(&g, w, v.values(), w, n, &mut lg.weight);
        let gz: Vec<f64> = g
            .iter()
            .zip(z.values())
            .map(|(gi, zi)| gi * layer.activation.derivative(*zi))
            .collect();
        channel_sums(&gz, w, n, &mut lg.bias);
        let gz = Field::from_raw(grid, w, gz);
        for (d, s) in lg.kernel.iter_mut().zip(layer.kernel.param_grad(v, &gz)) {
            *d += s;
        }
        let back = apply_kernel_transpose(&layer.kernel, &gz)?;
        let mut next = vec![0.0; w * n];
        pointwise_matmul_t(&layer.weight, w, w, &g, n, &mut next);
        for (a, b) in next.iter_mut().zip(back.values()) {
            *a += b;
        }
        g = next;
    }

    let lift = op.lift();
    outer_sum(&g, lift.rows, input.values(), lift.cols, n, &mut grad.lift_weight);
    channel_sums(&g, lift.rows, n, &mut grad.lift_bias);
    let mut g_in = vec![0.0; lift.cols * n];
    pointwise_matmul_t(&lift.weight, lift.rows, lift.cols, &g, n, &mut g_in);
    Ok((grad, Field::from_raw(grid, lift.cols, g_in)))
}

/// Gradient of `⟨c, 𝒢(u)⟩_{L²}` with respect to `u`, as an `L²` Riesz
/// representative (so `d/dt ⟨c, 𝒢(u + t e)⟩ = ⟨result, e⟩_{L²}`).
pub fn input_vjp(op: &NeuralOperator, u: &Field, cotangent: &Field) -> Result<Field, OperatorError> {
    // The L² pairing carries a factor h^d on each value, which cancels
    // against the h^{-d} of converting the Euclidean gradient back to L².
    let (_, g_in) = backward(op, u, cotangent)?;
    Ok(g_in)
}

/// Mean unclipped loss over `(inputs[i], targets[i])` for `i ∈ idx`, and
/// its exact gradient. Per-sample gradients are reduced in index order.
pub fn loss_and_grad_indexed(
    op: &NeuralOperator,
    inputs: &[Field],
    targets: &[Field],
    idx: &[usize],
) -> Result<(f64, ParamGrad), GradError> {
    if idx.is_empty() {
        return Err(GradError::EmptyBatch);
    }
    let per = par::try_map(idx.len(), |b| -> Result<(f64, ParamGrad), GradError> {
        let i = idx[b];
        let (u, t) = (&inputs[i], &targets[i]);
        let trace_out = op.forward(u)?;
        if !trace_out.same_shape(t) {
            return Err(GradError::Shape(i));
        }
        let h = u.grid().cell_volume();
        let loss = mse_loss(&trace_out, t, f64::INFINITY);
        let g_out: Vec<f64> = trace_out
            .values()
            .iter()
            .zip(t.values())
            .map(|(p, q)| 2.0 * h * (p - q))
            .collect();
        let g_out = Field::from_raw(*u.grid(), t.channels(), g_out);
        let (grad, _) = backward(op, u, &g_out)?;
        Ok((loss, grad))
    })?;
    let scale = 1.0 / idx.len() as f64;
    let mut total = ParamGrad::zeros_like(op);
    let mut loss = 0.0;
    for (l, mut g) in per {
        loss += l;
        total.add_scaled(&mut g, scale);
    }
    let loss = loss * scale;
    if let Some(bad) = total.flatten().iter().position(|v| !v.is_finite()) {
        return Err(GradError::NonFinite(format!("flat parameter {bad}")));
    }
    Ok((loss, total))
}

/// Mean loss and gradient over a batch of `(input, target)` pairs.
pub fn loss_and_grad(op: &NeuralOperator, batch: &[(Field, Field)]) -> Result<(f64, ParamGrad), GradError> {
    let (inputs, targets): (Vec<Field>, Vec<Field>) = batch.iter().cloned().unzip();
    let idx: Vec<usize> = (0..batch.len()).collect();
    loss_and_grad_indexed(op, &inputs, &targets, &idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, quadrature_inner, GrfSampler};
    use crate::operator::{build_operator, Activation, KernelKind, OperatorConfig};
    use crate::training::{apply_target, TargetOperator};
    use std::f64::consts::PI;

    fn small_config(kernel: KernelKind, act: Activation, dim: usize) -> OperatorConfig {
        OperatorConfig {
            grid: make_grid(dim, if dim == 1 { 16 } else { 8 }, 1.0).unwrap(),
            in_channels: 1,
            out_channels: 1,
            width: 3,
            layers: 2,
            kernel,
            activation: act,
            init_scale: 1.0,
        }
    }

    fn batch(grid: crate::grid::GridSpec, n: usize) -> Vec<(Field, Field)> {
        (0..n)
            .map(|i| {
                let u = GrfSampler::new(1.5, 1.0, 40 + i as u64).unwrap().sample(&grid, 1);
                let t = apply_target(&TargetOperator::smoothed_tanh(), &u);
                (u, t)
            })
            .collect()
    }

    #[test]
    fn mse_examples() {
        let g = make_grid(1, 64, 1.0).unwrap();
        let s = Field::from_fn(g, 1, |_, x| (2.0 * PI * x[0]).sin());
        let z = Field::zeros(g, 1);
        assert_eq!(mse_loss(&s, &s, f64::INFINITY), 0.0);
        assert!((mse_loss(&s, &z, f64::INFINITY) - 0.5).abs() < 1e-14);
        let big = s.scale((3.7f64 / 0.5).sqrt());
        assert!((mse_loss(&big, &z, f64::INFINITY) - 3.7).abs() < 1e-12);
        assert_eq!(mse_loss(&big, &z, 1.0), 1.0);
    }

    #[test]
    fn constant_predictor_bias_gradient() {
        let mut cfg = small_config(KernelKind::Spectral { k_max: 4 }, Activation::Tanh, 1);
        cfg.init_scale = 0.0;
        let zero = build_operator(&cfg, 0).unwrap();
        let mut flat = zero.params_flat();
        let bq = 0.4;
        *flat.last_mut().unwrap() = bq;
        let op = zero.with_params(&flat).unwrap();
        let b = batch(cfg.grid, 3);
        let (_, g) = loss_and_grad(&op, &b).unwrap();
        let expect: f64 = b
            .iter()
            .map(|(_, t)| -2.0 * t.values().iter().map(|v| v - bq).sum::<f64>() * cfg.grid.cell_volume())
            .sum::<f64>()
            / 3.0;
        assert!((g.project_bias[0] - expect).abs() < 1e-12);
    }

    fn finite_difference_check(cfg: &OperatorConfig) {
        let op = build_operator(cfg, 17).unwrap();
        let mut flat = op.params_flat();
        // Nonzero biases so that relu kinks and tanh curvature are exercised.
        let layout = op.param_layout();
        let mut pos = 0;
        for (name, len) in &layout {
            if name.ends_with("bias") {
                for (j, v) in flat[pos..pos + len].iter_mut().enumerate() {
                    *v = 0.1 * (j as f64 + 1.0) - 0.15;
                }
            }
            pos += len;
        }
        let op = op.with_params(&flat).unwrap();
        let b = batch(cfg.grid, 2);
        let (_, g) = loss_and_grad(&op, &b).unwrap();
        let analytic = g.flatten();
        let h = 1e-5;
        for i in 0..flat.len() {
            let mut p = flat.clone();
            p[i] += h;
            let lp = loss_and_grad(&op.with_params(&p).unwrap(), &b).unwrap().0;
            p[i] -= 2.0 * h;
            let lm = loss_and_grad(&op.with_params(&p).unwrap(), &b).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - analytic[i]).abs() <= 1e-6 * (1.0 + analytic[i].abs()),
                "param {i}: fd {fd} vs analytic {}",
                analytic[i]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_spectral() {
        finite_difference_check(&small_config(KernelKind::Spectral { k_max: 4 }, Activation::Tanh, 1));
        finite_difference_check(&small_config(KernelKind::Spectral { k_max: 2 }, Activation::Tanh, 2));
    }

    #[test]
    fn gradients_match_finite_differences_dense() {
        let mut cfg = small_config(KernelKind::Dense, Activation::Tanh, 1);
        cfg.width = 2;
        finite_difference_check(&cfg);
    }

    #[test]
    fn identical_pairs_equal_single_pair() {
        let cfg = small_config(KernelKind::Spectral { k_max: 4 }, Activation::Relu, 1);
        let op = build_operator(&cfg, 3).unwrap();
        let one = batch(cfg.grid, 1);
        let many = vec![one[0].clone(); 4];
        let (l1, g1) = loss_and_grad(&op, &one).unwrap();
        let (l4, g4) = loss_and_grad(&op, &many).unwrap();
        assert!((l1 - l4).abs() < 1e-14);
        for (a, b) in g1.flatten().iter().zip(g4.flatten()) {
            assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
        assert!(loss_and_grad(&op, &[]).is_err());
    }

    #[test]
    fn input_vjp_matches_directional_derivative() {
        let cfg = small_config(KernelKind::Spectral { k_max: 4 }, Activation::Tanh, 1);
        let op = build_operator(&cfg, 5).unwrap();
        let u = GrfSampler::new(1.5, 1.0, 1).unwrap().sample(&cfg.grid, 1);
        let e = GrfSampler::new(1.5, 1.0, 2).unwrap().sample(&cfg.grid, 1);
        let c = GrfSampler::new(1.5, 1.0, 3).unwrap().sample(&cfg.grid, 1);
        let g = input_vjp(&op, &u, &c).unwrap();
        let f = |t: f64| quadrature_inner(&c, &op.forward(&u.lin_comb(1.0, &e, t).unwrap()).unwrap()).unwrap();
        let fd = (f(1e-5) - f(-1e-5)) / 2e-5;
        let an = quadrature_inner(&g, &e).unwrap();
        assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{fd} vs {an}");
    }
}
