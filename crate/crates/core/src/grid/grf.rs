use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{idft, Field, GridError, GridSpec, Spectrum};
use crate::rng::rng_from_seed;

/// Gaussian random field with Bessel-type spectral decay.
///
/// Coefficient `c_k` is complex Gaussian with `E|c_k|² = σ_k²`,
/// `σ_k = amplitude · (1 + |2πk/length|²)^(-alpha/2)`, and `c_{-k} = conj(c_k)`.
/// Self-conjugate modes (`k = 0`, Nyquist) are real Gaussians. With
/// `band_limit = Some(m)` every mode with `max_axis |k| > m`, and every
/// Nyquist mode, is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrfSampler {
    pub alpha: f64,
    pub amplitude: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_limit: Option<usize>,
}

impl Default for GrfSampler {
    fn default() -> Self {
        GrfSampler {
            alpha: 2.5,
            amplitude: 1.0,
            seed: 0,
            band_limit: None,
        }
    }
}

impl GrfSampler {
    pub fn new(alpha: f64, amplitude: f64, seed: u64) -> Result<Self, GridError> {
        let s = GrfSampler {
            alpha,
            amplitude,
            seed,
            band_limit: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn band_limited(mut self, modes: usize) -> Self {
        self.band_limit = Some(modes);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(GridError::BadSampler(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(GridError::BadSampler(format!(
                "amplitude must be >= 0, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    /// Expected `E|c_k|²` of one coefficient (zero for masked modes).
    pub fn mode_variance(&self, grid: &GridSpec, flat: usize) -> f64 {
        if let Some(m) = self.band_limit {
            let k = grid.wavenumber(flat);
            if grid.is_nyquist(flat) || k[0].unsigned_abs() as usize > m || k[1].unsigned_abs() as usize > m
            {
                return 0.0;
            }
        }
        self.amplitude.powi(2) * (1.0 + grid.wavenumber_sq(flat)).powf(-self.alpha)
    }

    pub fn sample(&self, grid: &GridSpec, channels: usize) -> Field {
        sample_grf(self, grid, channels)
    }
}

/// Draws one real field; bit-identical for identical `(sampler, grid, channels)`.
pub fn sample_grf(sampler: &GrfSampler, grid: &GridSpec, channels: usize) -> Field {
    let n = grid.len();
    let mut rng = rng_from_seed(sampler.seed);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); channels * n];
    for c in 0..channels {
        let ch = &mut coeffs[c * n..(c + 1) * n];
        for j in 0..n {
            let p = grid.partner(j);
            if p < j {
                continue;
            }
            let sd = sampler.mode_variance(grid, j).sqrt();
            let z = if p == j {
                let x: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(sd * x, 0.0)
            } else {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im) * (sd * std::f64::consts::FRAC_1_SQRT_2)
            };
            ch[j] = z;
            ch[p] = z.conj();
        }
    }
    idft(&Spectrum::from_raw(*grid, channels, coeffs))
}
