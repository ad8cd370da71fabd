//! Trained operators against targets of graded difficulty.

use serde::{Deserialize, Serialize};

use super::common::{f64_or_inf, ser_f64_or_inf, OperatorSetup};
use super::report::{ReportBuilder, VerifyReport};
use super::VerifyError;
use crate::grid::{make_grid, GrfSampler};
use crate::operator::{Activation, KernelKind, OperatorConfig};
use crate::rng::derive_seed;
use crate::training::{gen_dataset, relative_error, train, Optimizer, TargetOperator, TrainConfig};

const TEST_STREAM: u64 = 0x7E57;
const TRAIN_STREAM: u64 = 0x7EA1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniversalityRun {
    pub target: TargetOperator,
    pub operator: OperatorSetup,
    pub sampler: GrfSampler,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train: TrainConfig,
    /// Relative `L²` goal on the held-out set; `"inf"` disables it.
    #[serde(deserialize_with = "f64_or_inf", serialize_with = "ser_f64_or_inf")]
    pub goal: f64,
    /// Order of the reported Sobolev test error.
    #[serde(default = "one")]
    pub sobolev_order: f64,
}

fn one() -> f64 {
    1.0
}

fn arch(n: usize, width: usize, layers: usize, k_max: usize, act: Activation, seed: u64) -> OperatorSetup {
    OperatorSetup {
        config: OperatorConfig {
            grid: make_grid(1, n, 1.0).unwrap(),
            in_channels: 1,
            out_channels: 1,
            width,
            layers,
            kernel: KernelKind::Spectral { k_max },
            activation: act,
            init_scale: 1.0,
        },
        seed,
        bias_scale: 0.0,
    }
}

fn adam(steps: usize, batch_size: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size,
        learning_rate: lr,
        optimizer: Optimizer::adam(),
        seed: 0,
        loss_clip: None,
        projection_only: false,
    }
}

impl UniversalityRun {
    /// Linear multiplier target, representable by one identity layer.
    pub fn bessel_inverse() -> Self {
        UniversalityRun {
            target: TargetOperator::BesselInverse,
            operator: arch(64, 1, 1, 8, Activation::Identity, 2),
            sampler: GrfSampler::new(2.0, 1.0, 10).unwrap().band_limited(8),
            train_samples: 64,
            test_samples: 64,
            train: adam(5000, 64, 0.02),
            goal: 1e-3,
            sobolev_order: 1.0,
        }
    }

    pub fn smoothed_tanh() -> Self {
        UniversalityRun {
            target: TargetOperator::smoothed_tanh(),
            operator: arch(64, 32, 3, 16, Activation::Tanh, 3),
            sampler: GrfSampler::new(2.0, 1.0, 20).unwrap(),
            train_samples: 256,
            test_samples: 128,
            train: adam(3000, 32, 3e-3),
            goal: 5e-2,
            sobolev_order: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniversalityConfig {
    pub runs: Vec<UniversalityRun>,
}

impl Default for UniversalityConfig {
    fn default() -> Self {
        UniversalityConfig {
            runs: vec![UniversalityRun::bessel_inverse(), UniversalityRun::smoothed_tanh()],
        }
    }
}

impl UniversalityConfig {
    /// Only the representable run, at its full budget.
    pub fn quick(self) -> Self {
        UniversalityConfig {
            runs: self
                .runs
                .into_iter()
                .filter(|r| r.target == TargetOperator::BesselInverse)
                .collect(),
        }
    }
}

pub fn universality_experiment(config: &UniversalityConfig) -> Result<VerifyReport, VerifyError> {
    let mut rep = ReportBuilder::new("universality", config);
    for (i, run) in config.runs.iter().enumerate() {
        let tag = format!("run{i}.{}", run.target.name());
        if run.train_samples == 0 || run.test_samples == 0 {
            return Err(VerifyError::Config("train and test sets must be non-empty".into()));
        }
        let grid = run.operator.config.grid;
        let train_seed = derive_seed(run.sampler.seed, TRAIN_STREAM, 0);
        let test_seed = derive_seed(run.sampler.seed, TEST_STREAM, 0);
        rep.seed(format!("{tag}.train_data"), train_seed);
        rep.seed(format!("{tag}.test_data"), test_seed);
        rep.seed(format!("{tag}.init"), run.operator.seed);
        let train_set = gen_dataset(&run.target, &run.sampler.with_seed(train_seed), &grid, run.train_samples)?;
        let test_set = gen_dataset(&run.target, &run.sampler.with_seed(test_seed), &grid, run.test_samples)?;
        let op = run.operator.build()?;
        let out = train(&op, &train_set, &run.train)?;
        let err = relative_error(&out.operator, &test_set, 0.0)?;
        let err_h = relative_error(&out.operator, &test_set, run.sobolev_order)?;
        let train_err = relative_error(&out.operator, &train_set, 0.0)?;
        rep.check_le(format!("{tag}: relative L² test error"), err, run.goal);
        rep.measure(format!("{tag}.test_rel_l2"), err);
        rep.measure(format!("{tag}.test_rel_h{}", run.sobolev_order), err_h);
        rep.measure(format!("{tag}.train_rel_l2"), train_err);
        rep.measure(format!("{tag}.final_loss"), out.final_loss());
        rep.measure(format!("{tag}.params"), op.param_count() as f64);
        rep.series(format!("{tag}.loss"), out.history);
    }
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(goal: f64) -> UniversalityConfig {
        let mut run = UniversalityRun::bessel_inverse();
        run.operator.config.grid = make_grid(1, 32, 1.0).unwrap();
        run.train.steps = 2500;
        run.train_samples = 16;
        run.test_samples = 16;
        run.goal = goal;
        UniversalityConfig { runs: vec![run] }
    }

    #[test]
    fn representable_target_reaches_goal() {
        let r = universality_experiment(&small(1e-3)).unwrap();
        assert!(r.pass(), "{:#?}", r.assertions);
    }

    #[test]
    fn infinite_goal_is_vacuous() {
        let mut cfg = small(f64::INFINITY);
        cfg.runs[0].train.steps = 2;
        let r = universality_experiment(&cfg).unwrap();
        assert!(r.pass());
        let json = serde_json::to_string(&cfg).unwrap();
        let back: UniversalityConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.runs[0].goal, f64::INFINITY);
    }

    #[test]
    fn train_and_test_seeds_differ() {
        let r = universality_experiment(&{
            let mut c = small(f64::INFINITY);
            c.runs[0].train.steps = 1;
            c
        })
        .unwrap();
        let keys: Vec<_> = r.seeds.iter().filter(|(k, _)| k.contains("data")).map(|(_, v)| *v).collect();
        assert_eq!(keys.len(), 2);
        assert_ne!(keys[0], keys[1]);
    }
}
