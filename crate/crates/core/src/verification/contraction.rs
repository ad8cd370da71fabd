//! Banach iteration: uniqueness of the fixed point and the geometric
//! envelope.

use serde::{Deserialize, Serialize};

use super::common::{default_operator, OperatorSetup};
use super::report::{ReportBuilder, VerifyReport};
use super::VerifyError;
use crate::grid::{Field, GrfSampler};
use crate::operator::{iterate_to_fixed_point, rescale_to_contraction, KernelKind, NeuralOperator};
use crate::par;
use crate::rng::derive_seed;
use crate::stats::fit_line;

const START_STREAM: u64 = 0xC0A7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractionConfig {
    pub operator: OperatorSetup,
    pub q_list: Vec<f64>,
    pub starts: usize,
    /// GRF used for starting points; amplitudes grow with the start index.
    pub sampler: GrfSampler,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        let mut operator = default_operator();
        operator.config.width = 4;
        operator.config.layers = 2;
        operator.config.kernel = KernelKind::Spectral { k_max: 8 };
        ContractionConfig {
            operator,
            q_list: vec![0.3, 0.7, 0.9],
            starts: 3,
            sampler: GrfSampler::new(1.5, 1.0, 0).unwrap(),
            tol: 1e-10,
            max_iter: 5000,
            seed: 3,
        }
    }
}

impl ContractionConfig {
    pub fn quick(self) -> Self {
        self
    }
}

/// Rounding floor for distances to `u*`: below it computed norms carry no
/// information about the contraction.
fn noise_floor(star: &Field) -> f64 {
    1e-14 * (1.0 + star.l2_norm())
}

struct QOutcome {
    envelope_violations: usize,
    uniqueness_gap: f64,
    slope: f64,
    converged: bool,
    iterations: Vec<f64>,
    worst_ratio: f64,
    distances: Vec<f64>,
}

fn run_q(op: &NeuralOperator, q: f64, cfg: &ContractionConfig) -> Result<QOutcome, VerifyError> {
    let op = rescale_to_contraction(op, q)?;
    let starts: Vec<Field> = (0..cfg.starts)
        .map(|s| {
            let amp = cfg.sampler.amplitude * (1.0 + s as f64);
            GrfSampler {
                amplitude: amp,
                ..cfg.sampler.clone()
            }
            .with_seed(derive_seed(cfg.seed, START_STREAM, s as u64))
            .sample(op.grid(), op.in_channels())
        })
        .collect();
    let runs = par::try_map(starts.len(), |s| {
        Ok::<_, VerifyError>(iterate_to_fixed_point(&op, &starts[s], cfg.tol, cfg.max_iter)?)
    })?;
    // Long-run oracle for u*: keep iterating the first run until the step
    // stalls at rounding level.
    let reference = iterate_to_fixed_point(&op, &runs[0].fixed_point, 1e-300, 200)?.fixed_point;
    let floor = noise_floor(&reference);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut gap = 0.0f64;
    let mut distances = Vec::new();
    // Replay each trajectory against the reference u*.
    for s in 0..starts.len() {
        gap = gap.max(runs[s].fixed_point.sub(&runs[0].fixed_point)?.l2_norm());
        let mut cur = starts[s].clone();
        let e0 = cur.sub(&reference)?.l2_norm();
        let mut prev = e0;
        for n in 1..=runs[s].iterations {
            cur = op.forward(&cur)?;
            let e = cur.sub(&reference)?.l2_norm();
            let bound = q.powi(n as i32) * e0 * (1.0 + 1e-6);
            if e > bound + floor {
                violations += 1;
            }
            if prev > 1e3 * floor {
                worst_ratio = worst_ratio.max(e / prev);
            }
            if s == 0 {
                distances.push(e);
                if e > 1e3 * floor {
                    xs.push(n as f64);
                    ys.push(e.ln());
                }
            }
            prev = e;
        }
    }
    let slope = if xs.len() >= 2 { fit_line(&xs, &ys).slope } else { f64::NEG_INFINITY };
    Ok(QOutcome {
        envelope_violations: violations,
        uniqueness_gap: gap,
        slope,
        converged: runs.iter().all(|r| r.converged),
        iterations: runs.iter().map(|r| r.iterations as f64).collect(),
        worst_ratio,
        distances,
    })
}

/// For each `q`: rescale the base operator to certified factor `q`, iterate
/// from several starts, and check uniqueness, the `qⁿ` envelope and the
/// fitted decay rate. Also runs the exact linear case `𝒢(u) = u/2`.
pub fn verify_contraction(
    config: &ContractionConfig,
    model: Option<&NeuralOperator>,
) -> Result<VerifyReport, VerifyError> {
    if config.q_list.is_empty() || config.q_list.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
        return Err(VerifyError::Config("q_list must be non-empty and inside (0, 1)".into()));
    }
    if config.starts < 3 {
        return Err(VerifyError::Config("contraction needs at least 3 starts".into()));
    }
    if !(config.tol > 0.0) {
        return Err(VerifyError::Config("tol must be positive".into()));
    }
    let base = match model {
        Some(m) => m.clone(),
        None => config.operator.build()?,
    };
    let mut rep = ReportBuilder::new("contraction", config);
    rep.seed("master", config.seed);
    rep.seed("operator", config.operator.seed);
    for &q in &config.q_list {
        let o = run_q(&base, q, config)?;
        rep.check(format!("q={q}: all starts converged"), 1.0, o.converged as u8 as f64, o.converged);
        rep.check_le(format!("q={q}: envelope violations"), o.envelope_violations as f64, 0.0);
        rep.check_le(format!("q={q}: fixed points agree (uniqueness)"), o.uniqueness_gap, 10.0 * config.tol);
        rep.check_le(format!("q={q}: fitted log-decay slope ≤ log q + 0.01"), o.slope, q.ln() + 0.01);
        rep.measure(format!("q={q}.worst_step_ratio"), o.worst_ratio);
        rep.measure(format!("q={q}.slope"), o.slope);
        rep.series(format!("q={q}.iterations"), o.iterations);
        rep.series(format!("q={q}.envelope"), o.distances);
    }

    // Exact geometric case on the same grid.
    let grid = *base.grid();
    let half = NeuralOperator::linear_scaling(grid, 1, 1, &[0.5], KernelKind::Spectral { k_max: 1 })?;
    let u0 = Field::constant(grid, 1, 1.0 / grid.volume().sqrt());
    let mut u = u0.clone();
    let mut worst = 0.0f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in 1..=20 {
        u = half.forward(&u)?;
        worst = worst.max((u.l2_norm() - 0.5f64.powi(n)).abs());
        xs.push(n as f64);
        ys.push(u.l2_norm().ln());
    }
    let slope = fit_line(&xs, &ys).slope;
    rep.check_le("G(u)=u/2: |‖u_n‖ − 2^-n| over 20 steps", worst, 1e-12);
    rep.check_le("G(u)=u/2: |slope − log 0.5|", (slope - 0.5f64.ln()).abs(), 1e-12);
    Ok(rep.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn default_run_passes() {
        let r = verify_contraction(&ContractionConfig::default(), None).unwrap();
        assert!(r.pass(), "{:#?}", r.assertions);
    }

    #[test]
    fn iteration_counts_follow_geometric_series() {
        let g = make_grid(1, 16, 1.0).unwrap();
        let u0 = Field::constant(g, 1, 1.0);
        for q in [0.3, 0.9] {
            let op = NeuralOperator::linear_scaling(g, 1, 1, &[q], KernelKind::Spectral { k_max: 1 }).unwrap();
            let r = iterate_to_fixed_point(&op, &u0, 1e-10, 10_000).unwrap();
            let predicted = (1e-10f64).ln() / q.ln();
            assert!((r.iterations as f64 - predicted).abs() <= 2.0, "q={q}: {} vs {predicted}", r.iterations);
        }
    }

    #[test]
    fn rejects_bad_q() {
        let cfg = ContractionConfig {
            q_list: vec![1.0],
            ..Default::default()
        };
        assert!(verify_contraction(&cfg, None).is_err());
    }
}
