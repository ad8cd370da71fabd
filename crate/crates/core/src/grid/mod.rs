//! Uniform periodic grids and the fields that live on them.
//!
//! A grid is the torus `[0, length)^dim` with `n` points per axis. Fields
//! store `channels × N` values channel-major; within a channel, 2-D points
//! are laid out with axis 0 slowest (`j = i0 * n + i1`).
//!
//! Spectra use the mean-normalised convention
//! `c_k = (1/N) Σ_j u_j e^{-2πi k·j/n}` so that `c_0` is the mean of the
//! field and `u_j = Σ_k c_k e^{2πi k·j/n}`. Coefficients are stored in FFT
//! order; [`GridSpec::freq`] maps an index to its signed frequency in
//! `[-n/2, n/2)`.

mod fft;
mod grf;
mod resample;

pub use fft::{dft, idft};
pub(crate) use fft::{dft_channel, idft_channel, idft_complex_channel};
pub use grf::{sample_grf, GrfSampler};
pub use resample::resample;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Real and complex scalars used throughout the crate.
pub use rustfft::num_complex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("points per axis must be a power of two >= 8, got {0}")]
    BadPointCount(usize),
    #[error("period length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("expected {expected} values for {channels} channel(s), got {got}")]
    ShapeMismatch {
        expected: usize,
        got: usize,
        channels: usize,
    },
    #[error("field contains a non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("grid or channel mismatch: {0}")]
    Mismatch(String),
    #[error("invalid sampler: {0}")]
    BadSampler(String),
}

/// Uniform periodic grid: `dim` axes, `n` points each, period `length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRaw", into = "GridSpecRaw")]
pub struct GridSpec {
    dim: usize,
    n: usize,
    length: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpecRaw {
    dim: usize,
    n: usize,
    #[serde(default = "default_length")]
    length: f64,
}

fn default_length() -> f64 {
    1.0
}

impl TryFrom<GridSpecRaw> for GridSpec {
    type Error = GridError;
    fn try_from(raw: GridSpecRaw) -> Result<Self, GridError> {
        GridSpec::new(raw.dim, raw.n, raw.length)
    }
}

impl From<GridSpec> for GridSpecRaw {
    fn from(g: GridSpec) -> Self {
        GridSpecRaw {
            dim: g.dim,
            n: g.n,
            length: g.length,
        }
    }
}

/// Validated constructor; same as [`GridSpec::new`].
pub fn make_grid(dim: usize, n: usize, length: f64) -> Result<GridSpec, GridError> {
    GridSpec::new(dim, n, length)
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self, GridError> {
        if !(1..=2).contains(&dim) {
            return Err(GridError::BadDimension(dim));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(GridError::BadPointCount(n));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(GridError::BadLength(length));
        }
        Ok(GridSpec { dim, n, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Total number of points `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing `h = length / n`.
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Quadrature weight `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Measure of the torus, `length^dim`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Same grid with a different point count.
    pub fn with_n(&self, n: usize) -> Result<Self, GridError> {
        GridSpec::new(self.dim, n, self.length)
    }

    /// Signed frequency in `[-n/2, n/2)` of a per-axis FFT index.
    pub fn freq(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let i = idx as i64;
        if i >= n / 2 {
            i - n
        } else {
            i
        }
    }

    /// Per-axis FFT index of a signed frequency (taken modulo `n`).
    pub fn index_of(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    /// Signed wavenumber vector of a flat spectral index (unused axes are 0).
    pub fn wavenumber(&self, flat: usize) -> [i64; 2] {
        if self.dim == 1 {
            [self.freq(flat), 0]
        } else {
            [self.freq(flat / self.n), self.freq(flat % self.n)]
        }
    }

    /// Flat spectral index of a wavenumber vector.
    pub fn flat_index(&self, k: [i64; 2]) -> usize {
        if self.dim == 1 {
            self.index_of(k[0])
        } else {
            self.index_of(k[0]) * self.n + self.index_of(k[1])
        }
    }

    /// Flat index of the conjugate partner `-k` of a flat spectral index.
    pub fn partner(&self, flat: usize) -> usize {
        let k = self.wavenumber(flat);
        self.flat_index([-k[0], -k[1]])
    }

    /// `|2πk / length|²` for a flat spectral index.
    pub fn wavenumber_sq(&self, flat: usize) -> f64 {
        let k = self.wavenumber(flat);
        let s = 2.0 * std::f64::consts::PI / self.length;
        let (a, b) = (s * k[0] as f64, s * k[1] as f64);
        a * a + b * b
    }

    /// Physical coordinates of a flat grid index.
    pub fn point(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        if self.dim == 1 {
            [flat as f64 * h, 0.0]
        } else {
            [(flat / self.n) as f64 * h, (flat % self.n) as f64 * h]
        }
    }

    /// True if some axis frequency of `flat` equals the Nyquist value `-n/2`.
    pub fn is_nyquist(&self, flat: usize) -> bool {
        let k = self.wavenumber(flat);
        let nyq = -(self.n as i64) / 2;
        k[0] == nyq || (self.dim == 2 && k[1] == nyq)
    }
}

/// Channel-valued function sampled on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    channels: usize,
    values: Vec<f64>,
}

impl Field {
    /// Checked constructor: shape must be `channels × N` and all values finite.
    pub fn new(grid: GridSpec, channels: usize, values: Vec<f64>) -> Result<Self, GridError> {
        let expected = channels * grid.len();
        if channels == 0 || values.len() != expected {
            return Err(GridError::ShapeMismatch {
                expected,
                got: values.len(),
                channels,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Field {
            grid,
            channels,
            values,
        })
    }

    /// Constructor for values produced by trusted internal arithmetic.
    /// Shape is asserted; finiteness is the caller's responsibility.
    pub(crate) fn from_raw(grid: GridSpec, channels: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), channels * grid.len());
        Field {
            grid,
            channels,
            values,
        }
    }

    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        Field::from_raw(grid, channels, vec![0.0; channels * grid.len()])
    }

    pub fn constant(grid: GridSpec, channels: usize, c: f64) -> Self {
        assert!(c.is_finite());
        Field::from_raw(grid, channels, vec![c; channels * grid.len()])
    }

    /// Samples `f(channel, x)` at every grid point.
    pub fn from_fn(grid: GridSpec, channels: usize, f: impl Fn(usize, [f64; 2]) -> f64) -> Self {
        let n = grid.len();
        let values = (0..channels)
            .flat_map(|c| (0..n).map(move |j| (c, j)))
            .map(|(c, j)| f(c, grid.point(j)))
            .collect::<Vec<_>>();
        assert!(values.iter().all(|v| v.is_finite()));
        Field::from_raw(grid, channels, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.grid == other.grid && self.channels == other.channels
    }

    fn check_shape(&self, other: &Field) -> Result<(), GridError> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(GridError::Mismatch(format!(
                "{:?}×{} vs {:?}×{}",
                self.grid, self.channels, other.grid, other.channels
            )))
        }
    }

    pub fn scale(&self, a: f64) -> Field {
        Field::from_raw(
            self.grid,
            self.channels,
            self.values.iter().map(|v| a * v).collect(),
        )
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field, GridError> {
        self.check_shape(other)?;
        Ok(Field::from_raw(
            self.grid,
            self.channels,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    pub fn add(&self, other: &Field) -> Result<Field, GridError> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Result<Field, GridError> {
        self.lin_comb(1.0, other, -1.0)
    }

    /// Discrete `L²` norm `sqrt(h^d Σ |u|²)`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64, GridError> {
        self.check_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Mean of each channel.
    pub fn channel_means(&self) -> Vec<f64> {
        (0..self.channels)
            .map(|c| self.channel(c).iter().sum::<f64>() / self.grid.len() as f64)
            .collect()
    }
}

/// Discrete Fourier coefficients of a field, FFT-ordered per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    channels: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: GridSpec, channels: usize, coeffs: Vec<Complex64>) -> Result<Self, GridError> {
        let expected = channels * grid.len();
        if channels == 0 || coeffs.len() != expected {
            return Err(GridError::ShapeMismatch {
                expected,
                got: coeffs.len(),
                channels,
            });
        }
        if let Some(i) = coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Spectrum {
            grid,
            channels,
            coeffs,
        })
    }

    pub(crate) fn from_raw(grid: GridSpec, channels: usize, coeffs: Vec<Complex64>) -> Self {
        Spectrum {
            grid,
            channels,
            coeffs,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.coeffs[c * n..(c + 1) * n]
    }

    /// Coefficient of channel `c` at wavenumber `k`.
    pub fn at(&self, c: usize, k: [i64; 2]) -> Complex64 {
        self.coeffs[c * self.grid.len() + self.grid.flat_index(k)]
    }

    /// Largest `|c_{-k} - conj(c_k)|` relative to the largest coefficient.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let n = self.grid.len();
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for c in 0..self.channels {
            let ch = &self.coeffs[c * n..(c + 1) * n];
            for j in 0..n {
                let p = self.grid.partner(j);
                worst = worst.max((ch[p] - ch[j].conj()).norm());
            }
        }
        worst / scale
    }
}

/// Quadrature inner product `h^d Σ_j Σ_c f_c(x_j) g_c(x_j)`.
pub fn quadrature_inner(f: &Field, g: &Field) -> Result<f64, GridError> {
    f.check_shape(g)?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(f.grid.cell_volume() * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn make_grid_examples() {
        let g = make_grid(1, 8, 1.0).unwrap();
        assert_eq!(g.len(), 8);
        assert_eq!(g.spacing(), 0.125);
        assert_eq!(make_grid(2, 16, 1.0).unwrap().len(), 256);
        assert_eq!(make_grid(1, 12, 1.0), Err(GridError::BadPointCount(12)));
        assert_eq!(make_grid(3, 8, 1.0), Err(GridError::BadDimension(3)));
        assert_eq!(make_grid(1, 4, 1.0), Err(GridError::BadPointCount(4)));
        assert!(matches!(make_grid(1, 8, 0.0), Err(GridError::BadLength(_))));
    }

    #[test]
    fn frequency_indexing() {
        let g = make_grid(1, 8, 1.0).unwrap();
        let ks: Vec<i64> = (0..8).map(|i| g.freq(i)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        for i in 0..8 {
            assert_eq!(g.index_of(g.freq(i)), i);
        }
        assert_eq!(g.partner(1), 7);
        assert_eq!(g.partner(4), 4);
        let g2 = make_grid(2, 8, 1.0).unwrap();
        for j in 0..g2.len() {
            assert_eq!(g2.flat_index(g2.wavenumber(j)), j);
            assert_eq!(g2.partner(g2.partner(j)), j);
        }
    }

    #[test]
    fn grid_serde_validates() {
        let g: GridSpec = serde_json::from_str(r#"{"dim":1,"n":64}"#).unwrap();
        assert_eq!(g.length(), 1.0);
        assert!(serde_json::from_str::<GridSpec>(r#"{"dim":1,"n":100}"#).is_err());
        assert!(serde_json::from_str::<GridSpec>(r#"{"dim":1,"n":64,"extra":1}"#).is_err());
    }

    #[test]
    fn field_rejects_bad_input() {
        let g = make_grid(1, 8, 1.0).unwrap();
        assert!(Field::new(g, 1, vec![0.0; 7]).is_err());
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert_eq!(Field::new(g, 1, v), Err(GridError::NonFinite(3)));
    }

    #[test]
    fn quadrature_examples() {
        let g = make_grid(1, 64, 1.0).unwrap();
        let one = Field::constant(g, 1, 1.0);
        assert!((quadrature_inner(&one, &one).unwrap() - 1.0).abs() < 1e-15);
        let s = Field::from_fn(g, 1, |_, x| (2.0 * PI * x[0]).sin());
        let c = Field::from_fn(g, 1, |_, x| (2.0 * PI * x[0]).cos());
        assert!((quadrature_inner(&s, &s).unwrap() - 0.5).abs() < 1e-14);
        assert!(quadrature_inner(&s, &c).unwrap().abs() < 1e-14);
        let other = Field::constant(make_grid(1, 32, 1.0).unwrap(), 1, 1.0);
        assert!(quadrature_inner(&one, &other).is_err());
    }
}
