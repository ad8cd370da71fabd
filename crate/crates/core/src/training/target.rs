//! Reference operators that the networks are trained to imitate.

use serde::{Deserialize, Serialize};

use crate::grid::num_complex::Complex64;
use crate::grid::{dft_channel, idft_channel, Field, GridSpec};

fn default_tau() -> f64 {
    0.01
}

/// Alternating `+1, -1, …` over the first 16 modes.
fn default_gains() -> Vec<f64> {
    (0..16).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TargetRaw", into = "TargetRaw")]
pub enum TargetOperator {
    /// `(1 − Δ)^{-1}`: multiplier `(1 + |2πk/L|²)^{-1}`.
    BesselInverse,
    /// Zero-mean antiderivative along axis 0: multiplier `L/(i 2π k_0)` for
    /// `k_0 ≠ 0`, zero for `k_0 = 0` and for the Nyquist row.
    Antiderivative,
    /// Pointwise `tanh` followed by the heat filter `exp(−|2πk/L|² τ)`.
    SmoothedTanh {
        tau: f64,
    },
    /// Real multiplier `gains[j]` on modes with `max_axis |k| = j`, zero
    /// beyond. A fixed finite number of active modes.
    BandLimited {
        gains: Vec<f64>,
    },
}

// Struct variants throughout so that unknown keys are rejected for every kind.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum TargetRaw {
    BesselInverse {},
    Antiderivative {},
    SmoothedTanh {
        #[serde(default = "default_tau")]
        tau: f64,
    },
    BandLimited {
        #[serde(default = "default_gains")]
        gains: Vec<f64>,
    },
}

impl From<TargetRaw> for TargetOperator {
    fn from(r: TargetRaw) -> Self {
        match r {
            TargetRaw::BesselInverse {} => TargetOperator::BesselInverse,
            TargetRaw::Antiderivative {} => TargetOperator::Antiderivative,
            TargetRaw::SmoothedTanh { tau } => TargetOperator::SmoothedTanh { tau },
            TargetRaw::BandLimited { gains } => TargetOperator::BandLimited { gains },
        }
    }
}

impl From<TargetOperator> for TargetRaw {
    fn from(t: TargetOperator) -> Self {
        match t {
            TargetOperator::BesselInverse => TargetRaw::BesselInverse {},
            TargetOperator::Antiderivative => TargetRaw::Antiderivative {},
            TargetOperator::SmoothedTanh { tau } => TargetRaw::SmoothedTanh { tau },
            TargetOperator::BandLimited { gains } => TargetRaw::BandLimited { gains },
        }
    }
}

impl TargetOperator {
    pub fn smoothed_tanh() -> Self {
        TargetOperator::SmoothedTanh { tau: default_tau() }
    }

    pub fn band_limited() -> Self {
        TargetOperator::BandLimited { gains: default_gains() }
    }

    /// Accepts snake_case or kebab-case names with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        match name.replace('-', "_").as_str() {
            "bessel_inverse" => Some(TargetOperator::BesselInverse),
            "antiderivative" => Some(TargetOperator::Antiderivative),
            "smoothed_tanh" => Some(Self::smoothed_tanh()),
            "band_limited" => Some(Self::band_limited()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TargetOperator::BesselInverse => "bessel_inverse",
            TargetOperator::Antiderivative => "antiderivative",
            TargetOperator::SmoothedTanh { .. } => "smoothed_tanh",
            TargetOperator::BandLimited { .. } => "band_limited",
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, TargetOperator::SmoothedTanh { .. })
    }

    /// Fourier multiplier of a linear target at flat spectral index `j`.
    /// For the smoothed tanh this is the filter applied after `tanh`.
    pub fn multiplier(&self, grid: &GridSpec, j: usize) -> Complex64 {
        match self {
            TargetOperator::BesselInverse => Complex64::new(1.0 / (1.0 + grid.wavenumber_sq(j)), 0.0),
            TargetOperator::Antiderivative => {
                let k0 = grid.wavenumber(j)[0];
                if k0 == 0 || k0 == -(grid.n() as i64) / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    let w = 2.0 * std::f64::consts::PI * k0 as f64 / grid.length();
                    Complex64::new(0.0, -1.0 / w)
                }
            }
            TargetOperator::SmoothedTanh { tau } => Complex64::new((-grid.wavenumber_sq(j) * tau).exp(), 0.0),
            TargetOperator::BandLimited { gains } => {
                let k = grid.wavenumber(j);
                let m = k[0].unsigned_abs().max(k[1].unsigned_abs()) as usize;
                if grid.is_nyquist(j) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(gains.get(m).copied().unwrap_or(0.0), 0.0)
                }
            }
        }
    }
}

fn apply_multiplier(target: &TargetOperator, field: &Field) -> Field {
    let grid = *field.grid();
    let mult: Vec<Complex64> = (0..grid.len()).map(|j| target.multiplier(&grid, j)).collect();
    let mut values = Vec::with_capacity(field.values().len());
    for c in 0..field.channels() {
        let mut coeffs = dft_channel(&grid, field.channel(c));
        for (z, m) in coeffs.iter_mut().zip(&mult) {
            *z *= m;
        }
        values.extend(idft_channel(&grid, &coeffs));
    }
    Field::from_raw(grid, field.channels(), values)
}

/// Evaluates `𝒯(u)` channel by channel.
pub fn apply_target(target: &TargetOperator, field: &Field) -> Field {
    match target {
        TargetOperator::SmoothedTanh { .. } => {
            let t = Field::from_raw(
                *field.grid(),
                field.channels(),
                field.values().iter().map(|v| v.tanh()).collect(),
            );
            apply_multiplier(target, &t)
        }
        _ => apply_multiplier(target, field),
    }
}
