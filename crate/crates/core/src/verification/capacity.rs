//! Best achievable error as a function of the number of kept modes.

use serde::{Deserialize, Serialize};

use super::report::{ReportBuilder, VerifyReport};
use super::VerifyError;
use crate::grid::{make_grid, GridSpec, GrfSampler};
use crate::operator::{build_operator, Activation, KernelKind, OperatorConfig};
use crate::par;
use crate::rng::derive_seed;
use crate::training::{gen_dataset, relative_error, train, Optimizer, TargetOperator, TrainConfig};

const INIT_STREAM: u64 = 0xCA9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityConfig {
    pub target: TargetOperator,
    pub grid: GridSpec,
    pub sampler: GrfSampler,
    /// Kept modes per capacity; capacity `C` keeps `max_axis |k| < C`.
    pub capacities: Vec<usize>,
    pub width: usize,
    pub restarts: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig {
            target: TargetOperator::band_limited(),
            grid: make_grid(1, 64, 1.0).unwrap(),
            sampler: GrfSampler::new(1.0, 1.0, 30).unwrap(),
            capacities: vec![1, 2, 4, 8, 16],
            width: 1,
            restarts: 5,
            train_samples: 64,
            test_samples: 64,
            train: TrainConfig {
                steps: 2500,
                batch_size: 64,
                learning_rate: 0.02,
                optimizer: Optimizer::adam(),
                seed: 0,
                loss_clip: None,
                projection_only: false,
            },
            seed: 7,
        }
    }
}

impl CapacityConfig {
    pub fn quick(mut self) -> Self {
        self.train.steps = self.train.steps.min(1500);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityPoint {
    pub capacity: usize,
    pub best_error: f64,
    pub restarts: usize,
    pub success_fraction: f64,
}

/// Relative error of the best operator whose multiplier is free on the kept
/// modes and one shared constant elsewhere, in expectation over the sampler.
pub fn projection_floor(target: &TargetOperator, sampler: &GrfSampler, grid: &GridSpec, kept: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut total = 0.0;
    let mut unkept = Vec::new();
    for j in 0..grid.len() {
        let w = sampler.mode_variance(grid, j);
        let g = target.multiplier(grid, j).re;
        total += w * g * g;
        let k = grid.wavenumber(j);
        if k[0].unsigned_abs().max(k[1].unsigned_abs()) as usize >= kept {
            num += w * g;
            den += w;
            unkept.push((w, g));
        }
    }
    let g_star = if den > 0.0 { num / den } else { 0.0 };
    let resid: f64 = unkept.iter().map(|(w, g)| w * (g - g_star).powi(2)).sum();
    if total > 0.0 {
        (resid / total).sqrt()
    } else {
        0.0
    }
}

pub fn capacity_sweep(config: &CapacityConfig) -> Result<VerifyReport, VerifyError> {
    if config.restarts < 5 {
        return Err(VerifyError::Config("capacity sweep needs at least 5 restarts".into()));
    }
    if config.capacities.is_empty() || config.capacities.contains(&0) {
        return Err(VerifyError::Config("capacities must be positive".into()));
    }
    if config.capacities.windows(2).any(|w| w[1] < w[0]) {
        return Err(VerifyError::Config("capacities must be ascending".into()));
    }
    if !config.target.is_linear() {
        return Err(VerifyError::Config("capacity sweep needs a linear target".into()));
    }
    let mut rep = ReportBuilder::new("capacity", config);
    rep.seed("master", config.seed);
    let train_set = gen_dataset(
        &config.target,
        &config.sampler.with_seed(derive_seed(config.sampler.seed, 0, 0)),
        &config.grid,
        config.train_samples,
    )?;
    let test_set = gen_dataset(
        &config.target,
        &config.sampler.with_seed(derive_seed(config.sampler.seed, 1, 0)),
        &config.grid,
        config.test_samples,
    )?;
    let mut points = Vec::new();
    for &c in &config.capacities {
        let op_cfg = OperatorConfig {
            grid: config.grid,
            in_channels: 1,
            out_channels: 1,
            width: config.width,
            layers: 1,
            kernel: KernelKind::Spectral { k_max: c - 1 },
            activation: Activation::Identity,
            init_scale: 1.0,
        };
        let errors = par::try_map(config.restarts, |r| {
            let op = build_operator(&op_cfg, derive_seed(config.seed, INIT_STREAM, r as u64))?;
            let out = train(&op, &train_set, &config.train)?;
            Ok::<_, VerifyError>(relative_error(&out.operator, &test_set, 0.0)?)
        })?;
        let best = errors.iter().cloned().fold(f64::INFINITY, f64::min);
        let success = errors.iter().filter(|e| **e <= 2.0 * best).count() as f64 / errors.len() as f64;
        let floor = projection_floor(&config.target, &config.sampler, &config.grid, c);
        rep.measure(format!("floor.C{c}"), floor);
        rep.series(format!("restart_errors.C{c}"), errors);
        points.push((
            CapacityPoint {
                capacity: c,
                best_error: best,
                restarts: config.restarts,
                success_fraction: success,
            },
            floor,
        ));
    }
    for w in points.windows(2) {
        let (a, b) = (&w[0].0, &w[1].0);
        rep.check_le(
            format!("ε̂({}) ≤ 1.1·ε̂({})", b.capacity, a.capacity),
            b.best_error,
            1.1 * a.best_error,
        );
    }
    let (first, first_floor) = &points[0];
    let (last, _) = points.last().unwrap();
    if points.len() > 1 {
        rep.check_ge(
            format!("ε̂({}) ≥ 5·ε̂({})", first.capacity, last.capacity),
            first.best_error,
            5.0 * last.best_error,
        );
    }
    if *first_floor > 0.0 {
        let rel = (first.best_error - first_floor).abs() / first_floor;
        rep.check_le(format!("ε̂({}) matches projection floor", first.capacity), rel, 0.2);
    }
    let nondecreasing = points.windows(2).all(|w| w[1].0.success_fraction >= w[0].0.success_fraction);
    rep.measure("success_nondecreasing", if nondecreasing { 1.0 } else { 0.0 });
    rep.series("capacity", points.iter().map(|p| p.0.capacity as f64).collect());
    rep.series("best_error", points.iter().map(|p| p.0.best_error).collect());
    rep.series("success_fraction", points.iter().map(|p| p.0.success_fraction).collect());
    rep.series("floor", points.iter().map(|p| p.1).collect());
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_oracle_examples() {
        let g = make_grid(1, 16, 1.0).unwrap();
        let s = GrfSampler::new(1.0, 1.0, 0).unwrap();
        let t = TargetOperator::BandLimited { gains: vec![1.0; 4] };
        assert_eq!(projection_floor(&t, &s, &g, 4), 0.0);
        assert!(projection_floor(&t, &s, &g, 1) > 0.0);
        // A flat gain on every sampled mode is the shared constant itself.
        let flat = TargetOperator::BandLimited { gains: vec![1.0; 8] };
        assert!(projection_floor(&flat, &s.band_limited(7), &g, 1) < 1e-15);
        // Gains +1 at |k| = 1 and −1 at |k| = 2, one kept mode.
        let g8 = make_grid(1, 8, 1.0).unwrap();
        let two = TargetOperator::BandLimited { gains: vec![0.0, 1.0, -1.0] };
        let sb = s.clone().band_limited(2);
        let w1 = sb.mode_variance(&g8, 1);
        let w2 = sb.mode_variance(&g8, 2);
        let gs = (w1 - w2) / (w1 + w2);
        let expect = ((w1 * (1.0 - gs).powi(2) + w2 * (1.0 + gs).powi(2)) / (w1 + w2)).sqrt();
        assert!((projection_floor(&two, &sb, &g8, 1) - expect).abs() < 1e-14);
    }

    fn small(caps: Vec<usize>) -> CapacityConfig {
        CapacityConfig {
            target: TargetOperator::BandLimited {
                gains: vec![1.0, -1.0, 1.0, -1.0],
            },
            grid: make_grid(1, 32, 1.0).unwrap(),
            capacities: caps,
            train_samples: 24,
            test_samples: 24,
            ..Default::default()
        }
    }

    #[test]
    fn representable_band_is_learned() {
        let r = capacity_sweep(&small(vec![1, 4])).unwrap();
        let best = &r.series["best_error"];
        assert!(best[1] < 1e-3, "{best:?}");
        // One mode leaves the energy of modes 1..3 on the table.
        assert!(best[0] >= 0.8 * r.measured["floor.C1"]);
    }

    #[test]
    fn duplicate_capacities_agree() {
        let mut cfg = small(vec![2, 2]);
        cfg.train.steps = 50;
        let r = capacity_sweep(&cfg).unwrap();
        let best = &r.series["best_error"];
        assert_eq!(best[0], best[1]);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small(vec![1, 2]);
        cfg.restarts = 2;
        assert!(capacity_sweep(&cfg).is_err());
        assert!(capacity_sweep(&small(vec![4, 2])).is_err());
    }
}
