//! Concentration of empirical risk around the population risk.

use serde::{Deserialize, Serialize};

use super::common::OperatorSetup;
use super::report::{ReportBuilder, VerifyReport};
use super::VerifyError;
use crate::grid::{make_grid, GrfSampler};
use crate::operator::{Activation, KernelKind, NeuralOperator, OperatorConfig};
use crate::par;
use crate::rng::derive_seed;
use crate::stats::{fit_loglog, mean, quantile, std_dev};
use crate::training::{apply_target, mse_loss, TargetOperator};

const REFERENCE_STREAM: u64 = 0x9E4;
const DRAW_STREAM: u64 = 0x9E5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneralizationConfig {
    pub operator: OperatorSetup,
    pub target: TargetOperator,
    pub sampler: GrfSampler,
    pub reference_samples: usize,
    pub n_list: Vec<usize>,
    pub draws: usize,
    pub delta: f64,
    /// Loss clip `B`; defaults to four times the reference 99th percentile.
    pub clip: Option<f64>,
    pub seed: u64,
}

impl Default for GeneralizationConfig {
    fn default() -> Self {
        GeneralizationConfig {
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
                seed: 21,
                bias_scale: 0.5,
            },
            target: TargetOperator::smoothed_tanh(),
            sampler: GrfSampler::new(1.5, 1.0, 0).unwrap(),
            reference_samples: 100_000,
            n_list: vec![16, 32, 64, 128, 256, 512, 1024],
            draws: 500,
            delta: 0.05,
            clip: None,
            seed: 6,
        }
    }
}

impl GeneralizationConfig {
    pub fn quick(mut self) -> Self {
        self.reference_samples = self.reference_samples.min(10_000);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralizationPoint {
    pub n: usize,
    pub draws: usize,
    pub risk_mean: f64,
    pub risk_std: f64,
    pub bound: f64,
    pub coverage: f64,
}

fn sample_loss(op: &NeuralOperator, cfg: &GeneralizationConfig, seed: u64, clip: f64) -> Result<f64, VerifyError> {
    let u = cfg.sampler.with_seed(seed).sample(op.grid(), 1);
    let t = apply_target(&cfg.target, &u);
    Ok(mse_loss(&op.forward(&u)?, &t, clip))
}

pub fn verify_generalization(
    config: &GeneralizationConfig,
    model: Option<&NeuralOperator>,
) -> Result<VerifyReport, VerifyError> {
    if config.draws < 200 {
        return Err(VerifyError::Config("need at least 200 draws per N".into()));
    }
    if config.n_list.is_empty() || config.n_list.contains(&0) {
        return Err(VerifyError::Config("n_list must hold positive sizes".into()));
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(VerifyError::Config("delta must lie in (0, 1)".into()));
    }
    if config.reference_samples == 0 {
        return Err(VerifyError::Config("reference set must be non-empty".into()));
    }
    let op = match model {
        Some(m) => m.clone(),
        None => config.operator.build()?,
    };
    let mut rep = ReportBuilder::new("generalization", config);
    rep.seed("master", config.seed);
    let ref_seed = derive_seed(config.seed, REFERENCE_STREAM, 0);
    rep.seed("reference", ref_seed);
    let raw = par::try_map(config.reference_samples, |i| {
        sample_loss(&op, config, derive_seed(ref_seed, REFERENCE_STREAM, i as u64), f64::INFINITY)
    })?;
    let clip = match config.clip {
        Some(b) if b > 0.0 => b,
        Some(_) => return Err(VerifyError::Config("clip must be positive".into())),
        None => {
            let b = 4.0 * quantile(&raw, 0.99);
            if b > 0.0 {
                b
            } else {
                1.0
            }
        }
    };
    let population = mean(&raw.iter().map(|l| l.min(clip)).collect::<Vec<_>>());
    rep.measure("population_risk", population);
    rep.measure("clip", clip);
    let log_term = (2.0 / config.delta).ln();
    let mut points = Vec::new();
    for &n in &config.n_list {
        let stream = derive_seed(config.seed, DRAW_STREAM, n as u64);
        let risks = par::try_map(config.draws, |m| {
            let draw = derive_seed(stream, m as u64, 0);
            let mut s = 0.0;
            for i in 0..n {
                s += sample_loss(&op, config, derive_seed(draw, DRAW_STREAM, i as u64), clip)?;
            }
            Ok::<_, VerifyError>(s / n as f64)
        })?;
        let bound = clip * (log_term / (2.0 * n as f64)).sqrt();
        let inside = risks.iter().filter(|r| (*r - population).abs() <= bound).count();
        let coverage = inside as f64 / config.draws as f64;
        rep.check_ge(format!("coverage at N={n}"), coverage, 1.0 - config.delta);
        points.push(GeneralizationPoint {
            n,
            draws: config.draws,
            risk_mean: mean(&risks),
            risk_std: std_dev(&risks),
            bound,
            coverage,
        });
    }
    // Bounded-difference constant of the clipped empirical mean is B/N per
    // sample; the loss itself is not Lipschitz in the sample outside the clip.
    rep.measure("bounded_difference_per_sample_at_min_n", clip / config.n_list[0] as f64);
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let stds: Vec<f64> = points.iter().map(|p| p.risk_std).collect();
    if stds.iter().all(|s| *s == 0.0) {
        rep.warn("empirical risk is deterministic; slope check skipped");
    } else if stds.iter().any(|s| *s == 0.0) || points.len() < 3 {
        rep.warn("slope fit needs three or more sizes with positive spread; skipped");
    } else {
        let fit = fit_loglog(&ns, &stds);
        let (lo, hi) = fit.slope_interval(0.95);
        rep.check("std slope 95% band inside [-0.65, -0.35]", -0.5, fit.slope, lo >= -0.65 && hi <= -0.35);
        rep.measure("slope", fit.slope);
        rep.measure("slope_ci_low", lo);
        rep.measure("slope_ci_high", hi);
        rep.measure("slope_r2", fit.r_squared);
    }
    rep.series("n", ns);
    rep.series("risk_std", stds);
    rep.series("risk_mean", points.iter().map(|p| p.risk_mean).collect());
    rep.series("bound", points.iter().map(|p| p.bound).collect());
    rep.series("coverage", points.iter().map(|p| p.coverage).collect());
    Ok(rep.finish())
}
