//! Certificate inequalities for output growth and input perturbations.

use serde::{Deserialize, Serialize};

use super::common::{default_operator, OperatorSetup};
use super::report::{ReportBuilder, VerifyReport};
use super::VerifyError;
use crate::grid::{Field, GrfSampler};
use crate::operator::{lipschitz_cert, NeuralOperator};
use crate::par;
use crate::rng::derive_seed;
use crate::sobolev::hs_norm;
use crate::training::input_vjp;

const INPUT_STREAM: u64 = 0x57AB;
const PAIR_STREAM: u64 = 0x57AC;
const DIRECTION_STREAM: u64 = 0x57AD;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub operator: OperatorSetup,
    pub sampler: GrfSampler,
    pub trials: usize,
    /// Gradient-ascent steps of the adversarial ratio search.
    pub adversarial_steps: usize,
    /// Independent starting pairs for the adversarial search.
    pub adversarial_starts: usize,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            operator: default_operator(),
            sampler: GrfSampler::new(1.5, 1.0, 0).unwrap(),
            trials: 1000,
            adversarial_steps: 100,
            adversarial_starts: 4,
            seed: 1,
        }
    }
}

impl StabilityConfig {
    pub fn quick(mut self) -> Self {
        self.trials = (self.trials / 10).max(100);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    pub operator: OperatorSetup,
    pub sampler: GrfSampler,
    pub trials: usize,
    pub delta_norms: Vec<f64>,
    pub seed: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        let mut operator = default_operator();
        operator.config.activation = crate::operator::Activation::Relu;
        SensitivityConfig {
            operator,
            sampler: GrfSampler::new(1.5, 1.0, 0).unwrap(),
            trials: 1000,
            delta_norms: vec![1e-6, 1e-4, 1e-2, 1e-1],
            seed: 2,
        }
    }
}

impl SensitivityConfig {
    pub fn quick(mut self) -> Self {
        self.trials = (self.trials / 10).max(10);
        self
    }
}

fn draw(sampler: &GrfSampler, op: &NeuralOperator, master: u64, stream: u64, i: usize) -> Field {
    sampler
        .with_seed(derive_seed(master, stream, i as u64))
        .sample(op.grid(), op.in_channels())
}

/// `‖𝒢(u) − 𝒢(v)‖ / ‖u − v‖` in `L²`.
fn ratio(op: &NeuralOperator, u: &Field, v: &Field) -> Result<f64, VerifyError> {
    let num = op.forward(u)?.sub(&op.forward(v)?)?.l2_norm();
    let den = u.sub(v)?.l2_norm();
    Ok(num / den)
}

/// Gradient of the difference ratio with respect to `(u, v)`.
fn ratio_grad(op: &NeuralOperator, u: &Field, v: &Field) -> Result<(f64, Field, Field), VerifyError> {
    let d = op.forward(u)?.sub(&op.forward(v)?)?;
    let a = d.l2_norm();
    let diff = u.sub(v)?;
    let b = diff.l2_norm();
    if a == 0.0 {
        let z = Field::zeros(*u.grid(), u.channels());
        return Ok((0.0, z.clone(), z));
    }
    let c = d.scale(1.0 / a);
    let gu = input_vjp(op, u, &c)?;
    let gv = input_vjp(op, v, &c)?.scale(-1.0);
    // r = a / b, ∂r = ∂a / b − a (u − v) / b³ (and the negative for v).
    let corr = diff.scale(a / (b * b * b));
    let du = gu.scale(1.0 / b).sub(&corr)?;
    let dv = gv.scale(1.0 / b).add(&corr)?;
    Ok((a / b, du, dv))
}

/// Backtracking gradient ascent on the difference ratio from `(u, v)`.
pub fn adversarial_ratio(op: &NeuralOperator, u: Field, v: Field, steps: usize) -> Result<f64, VerifyError> {
    let (mut u, mut v) = (u, v);
    let (mut best, mut du, mut dv) = ratio_grad(op, &u, &v)?;
    let mut step = 0.1 * u.sub(&v)?.l2_norm();
    for _ in 0..steps {
        let gnorm = (du.l2_norm().powi(2) + dv.l2_norm().powi(2)).sqrt();
        if gnorm == 0.0 || step < 1e-14 {
            break;
        }
        let s = step / gnorm;
        let nu = u.lin_comb(1.0, &du, s)?;
        let nv = v.lin_comb(1.0, &dv, s)?;
        let r = ratio(op, &nu, &nv)?;
        if r.is_finite() && r > best {
            u = nu;
            v = nv;
            let (r2, a, b) = ratio_grad(op, &u, &v)?;
            best = r2;
            du = a;
            dv = b;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    Ok(best)
}

/// Checks `‖𝒢(u)‖ ≤ L̂ ‖u‖ + c0` on random inputs and runs an adversarial
/// search for the difference ratio.
pub fn verify_stability(config: &StabilityConfig, model: Option<&NeuralOperator>) -> Result<VerifyReport, VerifyError> {
    if config.trials < 100 {
        return Err(VerifyError::Config("stability needs at least 100 trials".into()));
    }
    let op = match model {
        Some(m) => m.clone(),
        None => config.operator.build()?,
    };
    let mut rep = ReportBuilder::new("stability", config);
    rep.seed("master", config.seed);
    rep.seed("operator", config.operator.seed);
    let cert = lipschitz_cert(&op);
    rep.measure("certificate_product", cert.product);
    rep.measure("c0", cert.c0);

    let rows = par::try_map(config.trials, |i| -> Result<(f64, f64), VerifyError> {
        let u = draw(&config.sampler, &op, config.seed, INPUT_STREAM, i);
        let lhs = op.forward(&u)?.l2_norm();
        Ok((lhs, cert.product * u.l2_norm() + cert.c0 + 1e-9))
    })?;
    let slack: Vec<f64> = rows.iter().map(|(l, r)| r - l).collect();
    let violations = slack.iter().filter(|s| **s < 0.0).count();
    rep.check_le("stability certificate violations (‖G(u)‖ ≤ L‖u‖ + c0 + 1e-9)", violations as f64, 0.0);
    rep.measure("min_slack", slack.iter().cloned().fold(f64::INFINITY, f64::min));
    rep.measure("max_slack", slack.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    rep.series("slack", slack);

    let random_ratio = par::try_map(config.trials, |i| {
        let u = draw(&config.sampler, &op, config.seed, PAIR_STREAM, 2 * i);
        let v = draw(&config.sampler, &op, config.seed, PAIR_STREAM, 2 * i + 1);
        ratio(&op, &u, &v)
    })?
    .into_iter()
    .fold(0.0, f64::max);
    rep.measure("random_pair_worst_ratio", random_ratio);

    let adv = par::try_map(config.adversarial_starts, |i| {
        let u = draw(&config.sampler, &op, config.seed, PAIR_STREAM ^ 0xFF, 2 * i);
        let v = draw(&config.sampler, &op, config.seed, PAIR_STREAM ^ 0xFF, 2 * i + 1);
        adversarial_ratio(&op, u, v, config.adversarial_steps)
    })?;
    let adv_best = adv.iter().cloned().fold(0.0, f64::max);
    rep.series("adversarial_ratio", adv);
    rep.measure("adversarial_worst_ratio", adv_best);
    rep.check_le("adversarial ratio ≤ certificate", adv_best, cert.product);
    rep.check_le("random-pair ratio ≤ certificate", random_ratio, cert.product);
    Ok(rep.finish())
}

/// Checks `‖𝒢(u + δu) − 𝒢(u)‖ ≤ L̂ ‖δu‖ + 1e-9` over trials and scales.
pub fn verify_sensitivity(
    config: &SensitivityConfig,
    model: Option<&NeuralOperator>,
) -> Result<VerifyReport, VerifyError> {
    if config.delta_norms.is_empty() || config.delta_norms.iter().any(|d| !(1e-8..=1.0).contains(d)) {
        return Err(VerifyError::Config("delta_norms must be non-empty and lie in [1e-8, 1]".into()));
    }
    if config.trials == 0 {
        return Err(VerifyError::Config("sensitivity needs at least one trial".into()));
    }
    let op = match model {
        Some(m) => m.clone(),
        None => config.operator.build()?,
    };
    let mut rep = ReportBuilder::new("sensitivity", config);
    rep.seed("master", config.seed);
    rep.seed("operator", config.operator.seed);
    let cert = lipschitz_cert(&op);
    rep.measure("certificate_product", cert.product);

    let rows = par::try_map(config.trials, |i| -> Result<Vec<(f64, f64, f64)>, VerifyError> {
        let u = draw(&config.sampler, &op, config.seed, INPUT_STREAM, i);
        let e = draw(&config.sampler, &op, config.seed, DIRECTION_STREAM, i);
        let e = e.scale(1.0 / e.l2_norm());
        let base = op.forward(&u)?;
        let mut out = Vec::with_capacity(config.delta_norms.len() + 1);
        // δu = 0: both sides must vanish exactly.
        let zero = op.forward(&u.lin_comb(1.0, &e, 0.0)?)?.sub(&base)?.l2_norm();
        out.push((0.0, zero, 0.0));
        for &d in &config.delta_norms {
            // Measure against the perturbation the operator actually saw.
            let v = u.add(&e.scale(d))?;
            let du = v.sub(&u)?;
            let out_diff = op.forward(&v)?.sub(&base)?;
            let h1_ratio = hs_norm(&out_diff, 1.0) / hs_norm(&du, 1.0);
            out.push((du.l2_norm(), out_diff.l2_norm(), h1_ratio));
        }
        Ok(out)
    })?;
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    let mut worst_h1 = 0.0f64;
    let mut zero_max = 0.0f64;
    let mut ratios = Vec::new();
    for r in rows.iter().flatten() {
        let (dn, on, h1) = *r;
        if dn == 0.0 {
            zero_max = zero_max.max(on);
            continue;
        }
        if on > cert.product * dn + 1e-9 {
            violations += 1;
        }
        worst = worst.max(on / dn);
        worst_h1 = worst_h1.max(h1);
        ratios.push(on / dn);
    }
    rep.check_le("sensitivity certificate violations", violations as f64, 0.0);
    rep.check_le("zero perturbation gives zero output change", zero_max, 0.0);
    rep.check_le("empirical worst ratio ≤ certificate", worst, cert.product);
    rep.measure("empirical_worst_ratio", worst);
    rep.measure("certificate_slack", cert.product - worst);
    rep.measure("h1_worst_ratio_reported_only", worst_h1);
    rep.measure("pairs", ratios.len() as f64);
    rep.series("ratios", ratios);
    Ok(rep.finish())
}
