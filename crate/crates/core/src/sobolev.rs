//! Sobolev norms on the torus.
//!
//! The canonical norm is the Bessel form
//! `‖u‖²_{H^s} = length^d Σ_k (1 + |2πk/length|²)^s |c_k|²`. For integer
//! orders the literal derivative-sum `Σ_{|α|≤s} ∫ |D^α u|²` is available as
//! an independent route (derivatives taken spectrally, integrals by grid
//! quadrature); in 1-D at `s = 1` the two agree exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::num_complex::Complex64;
use crate::grid::{dft, idft_complex_channel, Field, GridSpec, GrfSampler};
use crate::par;
use crate::rng::derive_seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SobolevError {
    #[error("embedding into L-infinity needs s > d/2 (s = {s}, d = {dim})")]
    EmbeddingHypothesis { s: f64, dim: usize },
    #[error("need at least {min} trials, got {got}")]
    TooFewTrials { min: usize, got: usize },
    #[error("smoothness index must be finite and >= 0, got {0}")]
    BadIndex(f64),
    #[error("no fields supplied")]
    Empty,
}

/// Smoothness index `s ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub fn new(s: f64) -> Result<Self, SobolevError> {
        if s.is_finite() && s >= 0.0 {
            Ok(SobolevIndex(s))
        } else {
            Err(SobolevError::BadIndex(s))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SobolevIndex {
    type Error = SobolevError;
    fn try_from(s: f64) -> Result<Self, SobolevError> {
        SobolevIndex::new(s)
    }
}

impl From<SobolevIndex> for f64 {
    fn from(s: SobolevIndex) -> f64 {
        s.0
    }
}

/// Bessel-form `H^s` norm.
pub fn hs_norm(field: &Field, s: f64) -> f64 {
    let grid = field.grid();
    let spec = dft(field);
    let weights: Vec<f64> = (0..grid.len())
        .map(|j| (1.0 + grid.wavenumber_sq(j)).powf(s))
        .collect();
    let mut sum = 0.0;
    for c in 0..field.channels() {
        for (w, coef) in weights.iter().zip(spec.channel(c)) {
            sum += w * coef.norm_sqr();
        }
    }
    (grid.volume() * sum).sqrt()
}

/// Multi-indices `α` with `|α| ≤ order` for the grid's dimension.
fn multi_indices(dim: usize, order: u32) -> Vec<[u32; 2]> {
    let mut out = Vec::new();
    for a in 0..=order {
        if dim == 1 {
            out.push([a, 0]);
        } else {
            for b in 0..=(order - a) {
                out.push([a, b]);
            }
        }
    }
    out
}

/// `D^α u` of one channel, as a complex grid function (multiplication by
/// `(i 2πk/length)^α` in Fourier space). Keeping the complex synthesis
/// retains the Nyquist contribution that a real derivative would drop.
fn spectral_derivative(grid: &GridSpec, coeffs: &[Complex64], alpha: [u32; 2]) -> Vec<Complex64> {
    let scale = 2.0 * std::f64::consts::PI / grid.length();
    let d: Vec<Complex64> = coeffs
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let k = grid.wavenumber(j);
            let f0 = Complex64::new(0.0, scale * k[0] as f64).powu(alpha[0]);
            let f1 = Complex64::new(0.0, scale * k[1] as f64).powu(alpha[1]);
            c * f0 * f1
        })
        .collect();
    idft_complex_channel(grid, &d)
}

/// Literal derivative-sum norm `(Σ_{|α|≤s} ∫ |D^α u|²)^{1/2}` for integer `s`.
pub fn derivative_sum_norm(field: &Field, order: u32) -> f64 {
    let grid = field.grid();
    let spec = dft(field);
    let h = grid.cell_volume();
    let mut total = 0.0;
    for c in 0..field.channels() {
        let coeffs = spec.channel(c);
        for alpha in multi_indices(grid.dim(), order) {
            let d = spectral_derivative(grid, coeffs, alpha);
            total += h * d.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    total.sqrt()
}

/// Grid maximum of `|u_c(x_j)|` over channels and points.
pub fn linf_norm(field: &Field) -> f64 {
    field.max_abs()
}

/// Monte-Carlo estimate of the embedding constant `C_s` in
/// `‖u‖_∞ ≤ C_s ‖u‖_{H^s}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub s: SobolevIndex,
    pub dim: usize,
    /// Largest observed `‖u‖_∞ / ‖u‖_{H^s}`: a lower bound on `C_s`.
    pub sampled_ratio_max: f64,
    pub trials: usize,
    /// Running maximum after each trial.
    pub running_max: Vec<f64>,
    /// True when the second half of the trials raised the maximum by < 10%.
    pub pass: bool,
}

fn check_hypothesis(s: f64, dim: usize) -> Result<SobolevIndex, SobolevError> {
    let idx = SobolevIndex::new(s)?;
    if s <= dim as f64 / 2.0 {
        return Err(SobolevError::EmbeddingHypothesis { s, dim });
    }
    Ok(idx)
}

/// Ratio statistics over an explicit set of fields (no trial-count floor).
pub fn embedding_ratio_of(fields: &[Field], s: f64) -> Result<EmbeddingReport, SobolevError> {
    let first = fields.first().ok_or(SobolevError::Empty)?;
    let dim = first.grid().dim();
    let idx = check_hypothesis(s, dim)?;
    let ratios: Vec<f64> = par::map(fields.len(), |i| {
        let hs = hs_norm(&fields[i], s);
        if hs > 0.0 {
            linf_norm(&fields[i]) / hs
        } else {
            0.0
        }
    });
    let mut running_max = Vec::with_capacity(ratios.len());
    let mut m = 0.0f64;
    for r in &ratios {
        m = m.max(*r);
        running_max.push(m);
    }
    let half = running_max[(running_max.len() - 1) / 2];
    let pass = m.is_finite() && (half == m || (half > 0.0 && m < 1.1 * half));
    Ok(EmbeddingReport {
        s: idx,
        dim,
        sampled_ratio_max: m,
        trials: fields.len(),
        running_max,
        pass,
    })
}

/// Draws `trials` GRF fields (per-trial derived seeds) and estimates `C_s`.
pub fn embedding_ratio(
    sampler: &GrfSampler,
    grid: &GridSpec,
    s: f64,
    trials: usize,
) -> Result<EmbeddingReport, SobolevError> {
    check_hypothesis(s, grid.dim())?;
    if trials < 100 {
        return Err(SobolevError::TooFewTrials { min: 100, got: trials });
    }
    let fields = par::map(trials, |i| {
        sampler
            .with_seed(derive_seed(sampler.seed, 0x5_0b_01, i as u64))
            .sample(grid, 1)
    });
    embedding_ratio_of(&fields, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, quadrature_inner};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(n: usize) -> Field {
        let g = make_grid(1, n, 1.0).unwrap();
        Field::from_fn(g, 1, |_, x| (2.0 * PI * x[0]).sin())
    }

    #[test]
    fn hs_norm_examples() {
        let g = make_grid(1, 32, 1.0).unwrap();
        for s in [0.0, 1.0, 2.7] {
            assert!((hs_norm(&Field::constant(g, 1, 1.0), s) - 1.0).abs() < 1e-14);
        }
        assert_eq!(hs_norm(&Field::zeros(g, 1), 1.0), 0.0);
        let expected = ((1.0 + 4.0 * PI * PI) / 2.0).sqrt();
        assert!((hs_norm(&sine(64), 1.0) - expected).abs() < 1e-12);
        assert!((expected - 4.4988).abs() < 1e-4);
    }

    #[test]
    fn derivative_sum_examples() {
        let g = make_grid(1, 32, 1.0).unwrap();
        assert!((derivative_sum_norm(&Field::constant(g, 1, 1.0), 3) - 1.0).abs() < 1e-14);
        let u = sine(64);
        assert!((derivative_sum_norm(&u, 1) - hs_norm(&u, 1.0)).abs() < 1e-10);
        // Term-by-term quadrature of u, u', u'' from analytic derivatives.
        let gg = *u.grid();
        let d1 = Field::from_fn(gg, 1, |_, x| 2.0 * PI * (2.0 * PI * x[0]).cos());
        let d2 = Field::from_fn(gg, 1, |_, x| -4.0 * PI * PI * (2.0 * PI * x[0]).sin());
        let oracle = (quadrature_inner(&u, &u).unwrap()
            + quadrature_inner(&d1, &d1).unwrap()
            + quadrature_inner(&d2, &d2).unwrap())
        .sqrt();
        let analytic = ((1.0 + 4.0 * PI.powi(2) + 16.0 * PI.powi(4)) / 2.0).sqrt();
        assert!((oracle - analytic).abs() < 1e-10 * analytic);
        assert!((derivative_sum_norm(&u, 2) - analytic).abs() < 1e-10 * analytic);
    }

    #[test]
    fn two_d_derivative_sum_brackets_bessel() {
        // Σ_{|α|≤1} k^{2α} = 1 + k0² + k1² equals the Bessel weight at s = 1 in 2-D too.
        let g = make_grid(2, 16, 1.0).unwrap();
        let u = GrfSampler::new(2.0, 1.0, 4).unwrap().sample(&g, 1);
        let a = derivative_sum_norm(&u, 1);
        let b = hs_norm(&u, 1.0);
        assert!((a - b).abs() < 1e-10 * b);
        // At s = 2 the derivative sum omits the cross term 2 k0² k1², so it is smaller.
        assert!(derivative_sum_norm(&u, 2) <= hs_norm(&u, 2.0) * (1.0 + 1e-12));
    }

    #[test]
    fn linf_examples() {
        let g = make_grid(1, 16, 1.0).unwrap();
        assert_eq!(linf_norm(&Field::constant(g, 1, -2.0)), 2.0);
        assert_eq!(linf_norm(&Field::zeros(g, 1)), 0.0);
        assert!(linf_norm(&sine(64)) >= 0.995);
    }

    #[test]
    fn embedding_ratio_examples() {
        let g = make_grid(1, 64, 1.0).unwrap();
        let sampler = GrfSampler::new(2.5, 1.0, 17).unwrap();
        let r = embedding_ratio(&sampler, &g, 1.0, 1000).unwrap();
        assert!(r.pass);
        assert!(r.sampled_ratio_max.is_finite() && r.sampled_ratio_max > 0.0);
        assert!(matches!(
            embedding_ratio(&sampler, &g, 0.4, 1000),
            Err(SobolevError::EmbeddingHypothesis { .. })
        ));
        assert!(matches!(
            embedding_ratio(&sampler, &g, 1.0, 10),
            Err(SobolevError::TooFewTrials { .. })
        ));
        let one = embedding_ratio_of(&[Field::constant(g, 1, 1.0)], 1.0).unwrap();
        assert_eq!(one.sampled_ratio_max, 1.0);
    }

    #[test]
    fn held_out_embedding_check() {
        let g = make_grid(1, 64, 1.0).unwrap();
        let sampler = GrfSampler::new(2.5, 1.0, 23).unwrap();
        let r = embedding_ratio(&sampler, &g, 1.0, 1000).unwrap();
        let fresh = sampler.with_seed(99_999);
        for i in 0..1000 {
            let u = fresh.with_seed(derive_seed(777, 0, i)).sample(&g, 1);
            assert!(linf_norm(&u) <= 2.0 * r.sampled_ratio_max * hs_norm(&u, 1.0));
        }
    }

    #[test]
    fn monotone_in_s() {
        let g = make_grid(1, 32, 1.0).unwrap();
        let u = GrfSampler::new(1.5, 1.0, 2).unwrap().sample(&g, 2);
        let mut prev = 0.0;
        for i in 0..10 {
            let v = hs_norm(&u, i as f64 * 0.3);
            assert!(v >= prev);
            prev = v;
        }
    }

    fn grf(seed: u64) -> Field {
        let g = make_grid(1, 32, 1.0).unwrap();
        GrfSampler::new(1.5, 1.0, seed).unwrap().sample(&g, 2)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn l2_identity_and_homogeneity(seed in any::<u64>(), c in -5.0f64..5.0, s in 0.0f64..3.0) {
            let u = grf(seed);
            let l2 = quadrature_inner(&u, &u).unwrap().sqrt();
            prop_assert!((hs_norm(&u, 0.0) - l2).abs() <= 1e-12 * l2);
            let a = hs_norm(&u.scale(c), s);
            let b = c.abs() * hs_norm(&u, s);
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
        }

        #[test]
        fn triangle_inequality(s1 in any::<u64>(), s2 in any::<u64>(), s in 0.0f64..3.0) {
            let (u, v) = (grf(s1), grf(s2));
            let w = u.add(&v).unwrap();
            prop_assert!(hs_norm(&w, s) <= hs_norm(&u, s) + hs_norm(&v, s) + 1e-10);
        }

        #[test]
        fn bessel_matches_derivative_sum_at_order_one(seed in any::<u64>()) {
            let u = grf(seed);
            let a = derivative_sum_norm(&u, 1);
            let b = hs_norm(&u, 1.0);
            prop_assert!((a - b).abs() <= 1e-10 * b);
        }
    }
}
