//! Targets, datasets, loss gradients and first-order training.

mod dataset;
mod grad;
mod target;

pub use dataset::{gen_dataset, Dataset, DatasetError, DATASET_MAGIC};
pub use grad::{input_vjp, loss_and_grad, loss_and_grad_indexed, mse_loss, GradError, LayerGrad, ParamGrad};
pub use target::{apply_target, TargetOperator};

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::operator::{NeuralOperator, OperatorError};
use crate::par;
use crate::rng::rng_from_seed;
use crate::sobolev::hs_norm;

/// Losses above this abort training.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "OptimizerRaw", into = "OptimizerRaw")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum OptimizerRaw {
    Sgd {},
    Adam {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
}

impl From<OptimizerRaw> for Optimizer {
    fn from(r: OptimizerRaw) -> Self {
        match r {
            OptimizerRaw::Sgd {} => Optimizer::Sgd,
            OptimizerRaw::Adam { beta1, beta2, eps } => Optimizer::Adam { beta1, beta2, eps },
        }
    }
}

impl From<Optimizer> for OptimizerRaw {
    fn from(o: Optimizer) -> Self {
        match o {
            Optimizer::Sgd => OptimizerRaw::Sgd {},
            Optimizer::Adam { beta1, beta2, eps } => OptimizerRaw::Adam { beta1, beta2, eps },
        }
    }
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: beta1(),
            beta2: beta2(),
            eps: adam_eps(),
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::adam()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// Samples per step; at least the dataset size means full-batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub seed: u64,
    /// Loss clip `B` used when evaluating risk; `None` means `∞`.
    /// Training itself always uses the unclipped loss.
    #[serde(default)]
    pub loss_clip: Option<f64>,
    /// Update only the projection weights and bias.
    #[serde(default)]
    pub projection_only: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.steps < 1 {
            return Err(TrainError::Config("steps must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be finite and >= 0".into()));
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(TrainError::Config("adam needs beta in [0, 1) and eps > 0".into()));
            }
        }
        Ok(())
    }

    pub fn clip(&self) -> f64 {
        self.loss_clip.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at step {step} (loss {loss:e})")]
    Diverged {
        step: usize,
        loss: f64,
        history: Vec<f64>,
    },
    #[error("dataset is incompatible with the operator: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub operator: NeuralOperator,
    /// Batch loss before each update.
    pub history: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.history.last().unwrap()
    }

    /// Running minimum of the history.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::INFINITY, |m, &l| {
                *m = m.min(l);
                Some(*m)
            })
            .collect()
    }
}

/// Runs `config.steps` optimizer steps from `op`; `op` itself is untouched.
pub fn train(op: &NeuralOperator, dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Incompatible("empty dataset".into()));
    }
    if dataset.channels_in() != op.in_channels() || dataset.channels_out() != op.out_channels() {
        return Err(TrainError::Incompatible(format!(
            "dataset has {}→{} channels, operator {}→{}",
            dataset.channels_in(),
            dataset.channels_out(),
            op.in_channels(),
            op.out_channels()
        )));
    }
    let mut params = op.params_flat();
    let p = params.len();
    let mask: Vec<bool> = if config.projection_only {
        let mut m = vec![false; p];
        let tail = op.project().weight.len() + op.project().bias.len();
        m[p - tail..].iter_mut().for_each(|v| *v = true);
        m
    } else {
        vec![true; p]
    };
    let mut m1 = vec![0.0; p];
    let mut m2 = vec![0.0; p];
    let mut rng = rng_from_seed(config.seed);
    let n = dataset.len();
    let full: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.steps);
    let mut current = op.clone();
    for step in 0..config.steps {
        let idx = if config.batch_size >= n {
            full.clone()
        } else {
            let mut b = sample_indices(&mut rng, n, config.batch_size).into_vec();
            b.sort_unstable();
            b
        };
        let (loss, grad) = loss_and_grad_indexed(&current, &dataset.inputs, &dataset.targets, &idx)?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(TrainError::Diverged { step, loss, history });
        }
        history.push(loss);
        let g = grad.flatten();
        let lr = config.learning_rate;
        match config.optimizer {
            Optimizer::Sgd => {
                for i in 0..p {
                    if mask[i] {
                        params[i] -= lr * g[i];
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = (step + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..p {
                    if !mask[i] {
                        continue;
                    }
                    m1[i] = beta1 * m1[i] + (1.0 - beta1) * g[i];
                    m2[i] = beta2 * m2[i] + (1.0 - beta2) * g[i] * g[i];
                    params[i] -= lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
                }
            }
        }
        current = match current.with_params(&params) {
            Ok(op) => op,
            Err(_) => {
                return Err(TrainError::Diverged {
                    step,
                    loss: f64::INFINITY,
                    history,
                })
            }
        };
    }
    Ok(TrainOutcome {
        operator: current,
        history,
    })
}

/// Mean clipped loss `(1/N) Σ min(‖𝒢(u_i) − 𝒯(u_i)‖², B)`.
pub fn eval_risk(op: &NeuralOperator, dataset: &Dataset, clip: f64) -> Result<f64, OperatorError> {
    Ok(per_sample_losses(op, dataset, clip)?.iter().sum::<f64>() / dataset.len() as f64)
}

/// Clipped loss of every sample, in dataset order.
pub fn per_sample_losses(op: &NeuralOperator, dataset: &Dataset, clip: f64) -> Result<Vec<f64>, OperatorError> {
    par::try_map(dataset.len(), |i| {
        let (u, t) = dataset.pair(i);
        Ok(mse_loss(&op.forward(u)?, t, clip))
    })
}

/// Aggregate relative error `sqrt(Σ ‖𝒢u_i − 𝒯u_i‖² / Σ ‖𝒯u_i‖²)` in `H^s`
/// (`s = 0` is `L²`).
pub fn relative_error(op: &NeuralOperator, dataset: &Dataset, s: f64) -> Result<f64, OperatorError> {
    let parts = par::try_map(dataset.len(), |i| {
        let (u, t) = dataset.pair(i);
        let e = op.forward(u)?.sub(t).expect("shapes match");
        Ok((hs_norm(&e, s).powi(2), hs_norm(t, s).powi(2)))
    })?;
    let (num, den) = parts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GrfSampler};
    use crate::operator::{build_operator, Activation, KernelKind, OperatorConfig};

    fn cfg(act: Activation, width: usize, k_max: usize) -> OperatorConfig {
        OperatorConfig {
            grid: make_grid(1, 32, 1.0).unwrap(),
            in_channels: 1,
            out_channels: 1,
            width,
            layers: 1,
            kernel: KernelKind::Spectral { k_max },
            activation: act,
            init_scale: 1.0,
        }
    }

    fn data(target: TargetOperator, seed: u64, n: usize) -> Dataset {
        gen_dataset(&target, &GrfSampler::new(2.0, 1.0, seed).unwrap(), &make_grid(1, 32, 1.0).unwrap(), n).unwrap()
    }

    fn tc(steps: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            steps,
            batch_size: 64,
            learning_rate: lr,
            optimizer: Optimizer::adam(),
            seed: 0,
            loss_clip: None,
            projection_only: false,
        }
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let op = build_operator(&cfg(Activation::Tanh, 4, 6), 1).unwrap();
        let d = data(TargetOperator::smoothed_tanh(), 1, 8);
        let out = train(&op, &d, &tc(5, 0.0)).unwrap();
        assert_eq!(out.operator, op);
        assert!(out.history.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn linear_target_is_learned() {
        let op = build_operator(&cfg(Activation::Identity, 1, 8), 2).unwrap();
        let train_set = data(TargetOperator::BesselInverse, 10, 32);
        let test_set = data(TargetOperator::BesselInverse, 11, 32);
        let out = train(&op, &train_set, &tc(3000, 0.02)).unwrap();
        let err = relative_error(&out.operator, &test_set, 0.0).unwrap();
        assert!(err < 1e-3, "relative error {err}");
        let best = out.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn seeds_give_distinct_parameters() {
        let d = data(TargetOperator::smoothed_tanh(), 1, 8);
        let a = train(&build_operator(&cfg(Activation::Tanh, 4, 6), 1).unwrap(), &d, &tc(3, 1e-3)).unwrap();
        let b = train(&build_operator(&cfg(Activation::Tanh, 4, 6), 2).unwrap(), &d, &tc(3, 1e-3)).unwrap();
        assert_ne!(a.operator.params_flat(), b.operator.params_flat());
    }

    #[test]
    fn training_is_deterministic_with_minibatches() {
        let d = data(TargetOperator::smoothed_tanh(), 1, 16);
        let op = build_operator(&cfg(Activation::Tanh, 4, 6), 1).unwrap();
        let mut c = tc(10, 1e-2);
        c.batch_size = 4;
        let a = train(&op, &d, &c).unwrap();
        let b = train(&op, &d, &c).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.operator, b.operator);
    }

    #[test]
    fn divergence_keeps_partial_history() {
        let d = data(TargetOperator::smoothed_tanh(), 1, 8);
        let op = build_operator(&cfg(Activation::Identity, 2, 6), 1).unwrap();
        let mut c = tc(200, 1e3);
        c.optimizer = Optimizer::Sgd;
        match train(&op, &d, &c) {
            Err(TrainError::Diverged { history, step, .. }) => assert_eq!(history.len(), step),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn risk_examples() {
        let d = data(TargetOperator::BesselInverse, 3, 10);
        let mut c = cfg(Activation::Identity, 1, 8);
        c.init_scale = 0.0;
        let zero = build_operator(&c, 0).unwrap();
        let expect = d.targets.iter().map(|t| t.l2_norm().powi(2)).sum::<f64>() / 10.0;
        assert!((eval_risk(&zero, &d, f64::INFINITY).unwrap() - expect).abs() < 1e-15);
        assert_eq!(eval_risk(&zero, &d, 0.0).unwrap(), 0.0);
        // Regenerated dataset gives the same risk.
        let again = data(TargetOperator::BesselInverse, 3, 10);
        let op = build_operator(&cfg(Activation::Tanh, 3, 6), 4).unwrap();
        assert_eq!(eval_risk(&op, &d, 1.0).unwrap(), eval_risk(&op, &again, 1.0).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(tc(0, 1e-3).validate().is_err());
        assert!(tc(1, -1.0).validate().is_err());
        let parsed: TrainConfig =
            serde_json::from_str(r#"{"steps":3,"batch_size":2,"learning_rate":0.1,"optimizer":{"kind":"sgd"}}"#).unwrap();
        assert_eq!(parsed.optimizer, Optimizer::Sgd);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"steps":3,"batch_size":2,"learning_rate":0.1,"lr":1}"#).is_err());
        assert!(serde_json::from_str::<Optimizer>(r#"{"kind":"sgd","beta1":0.5}"#).is_err());
    }
}
