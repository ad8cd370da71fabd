//! Integral kernel operators `𝒦[v](x) = ∫ κ(x, y) v(y) dy`.
//!
//! Two realisations:
//!
//! - [`DenseKernel`]: an explicit `(d_v·N) × (d_v·N)` matrix of kernel values
//!   `κ_ab(x_i, x_j)` (row `a·N + i`, column `b·N + j`), applied with the
//!   quadrature rule `𝒦[v](x_i) = h^d Σ_j κ(x_i, x_j) v(x_j)`. Tied to one grid.
//! - [`SpectralKernel`]: a translation-invariant kernel stored as per-mode
//!   `d_v × d_v` complex multipliers `R_k` for `max_axis |k| ≤ k_max`. Only a
//!   half set of modes is stored; `R_{-k} = conj(R_k)` is implied, so outputs
//!   are real. The imaginary part of `R_0` has no effect. Works on any grid
//!   of matching dimension with `n/2 > k_max`.

use nalgebra::{Complex, DMatrix};

use super::OperatorError;
use crate::grid::num_complex::Complex64;
use crate::grid::{dft_channel, idft_channel, Field, GridSpec};

/// Kernel family selector used by configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(from = "KernelKindRaw", into = "KernelKindRaw")]
pub enum KernelKind {
    Dense,
    Spectral { k_max: usize },
}

#[derive(Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum KernelKindRaw {
    Dense {},
    Spectral { k_max: usize },
}

impl From<KernelKindRaw> for KernelKind {
    fn from(r: KernelKindRaw) -> Self {
        match r {
            KernelKindRaw::Dense {} => KernelKind::Dense,
            KernelKindRaw::Spectral { k_max } => KernelKind::Spectral { k_max },
        }
    }
}

impl From<KernelKind> for KernelKindRaw {
    fn from(k: KernelKind) -> Self {
        match k {
            KernelKind::Dense => KernelKindRaw::Dense {},
            KernelKind::Spectral { k_max } => KernelKindRaw::Spectral { k_max },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseKernel {
    grid: GridSpec,
    channels: usize,
    matrix: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralKernel {
    dim: usize,
    k_max: usize,
    channels: usize,
    /// `modes × channels × channels`, row-major per mode.
    multipliers: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Dense(DenseKernel),
    Spectral(SpectralKernel),
}

impl DenseKernel {
    pub fn new(grid: GridSpec, channels: usize, matrix: Vec<f64>) -> Result<Self, OperatorError> {
        let side = channels * grid.len();
        if matrix.len() != side * side {
            return Err(OperatorError::Shape(format!(
                "dense kernel needs {}² = {} entries, got {}",
                side,
                side * side,
                matrix.len()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(OperatorError::NonFiniteParameter("dense kernel".into()));
        }
        Ok(DenseKernel {
            grid,
            channels,
            matrix,
        })
    }

    /// Samples `κ_ab(x_i, x_j)` into a dense kernel.
    pub fn from_fn(
        grid: GridSpec,
        channels: usize,
        kappa: impl Fn(usize, usize, [f64; 2], [f64; 2]) -> f64,
    ) -> Result<Self, OperatorError> {
        let n = grid.len();
        let side = channels * n;
        let mut matrix = vec![0.0; side * side];
        for a in 0..channels {
            for i in 0..n {
                let xi = grid.point(i);
                let row = (a * n + i) * side;
                for b in 0..channels {
                    for j in 0..n {
                        matrix[row + b * n + j] = kappa(a, b, xi, grid.point(j));
                    }
                }
            }
        }
        DenseKernel::new(grid, channels, matrix)
    }

    /// Dense realisation of a spectral kernel on `grid`:
    /// `κ(x) = length^{-d} Σ_k R_k e^{2πi k·x/length}` sampled at `x_i − x_j`.
    pub fn from_spectral(spectral: &SpectralKernel, grid: GridSpec) -> Result<Self, OperatorError> {
        spectral.check_grid(&grid)?;
        let c = spectral.channels;
        let n = grid.len();
        // Column j = 0 of each block is κ(x_i − x_0); the rest are shifts.
        let mut base = vec![vec![0.0; n]; c * c];
        for a in 0..c {
            for b in 0..c {
                let mut spec = vec![Complex64::new(0.0, 0.0); n];
                for (m, k) in spectral.modes().iter().enumerate() {
                    let r = spectral.multiplier(m, a, b);
                    let idx = grid.flat_index(*k);
                    if k == &[0, 0] {
                        spec[idx] = Complex64::new(r.re, 0.0);
                    } else {
                        // κ_ab real ⇒ conj partner of R_k[a,b] sits at -k.
                        spec[idx] = r;
                        spec[grid.flat_index([-k[0], -k[1]])] = r.conj();
                    }
                }
                let vals = idft_channel(&grid, &spec);
                base[a * c + b] = vals.iter().map(|v| v / grid.volume()).collect();
            }
        }
        let nn = grid.n();
        let shift = |i: usize, j: usize| -> usize {
            if grid.dim() == 1 {
                (i + n - j) % n
            } else {
                let (i0, i1, j0, j1) = (i / nn, i % nn, j / nn, j % nn);
                ((i0 + nn - j0) % nn) * nn + (i1 + nn - j1) % nn
            }
        };
        let side = c * n;
        let mut matrix = vec![0.0; side * side];
        for a in 0..c {
            for i in 0..n {
                let row = (a * n + i) * side;
                for b in 0..c {
                    let blk = &base[a * c + b];
                    for j in 0..n {
                        matrix[row + b * n + j] = blk[shift(i, j)];
                    }
                }
            }
        }
        DenseKernel::new(grid, c, matrix)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    fn check(&self, field: &Field) -> Result<(), OperatorError> {
        if field.grid() != &self.grid || field.channels() != self.channels {
            return Err(OperatorError::GridMismatch(format!(
                "dense kernel built for {:?}×{}, got {:?}×{}",
                self.grid,
                self.channels,
                field.grid(),
                field.channels()
            )));
        }
        Ok(())
    }

    fn matvec(&self, field: &Field, transpose: bool) -> Result<Field, OperatorError> {
        self.check(field)?;
        let side = self.channels * self.grid.len();
        let h = self.grid.cell_volume();
        let v = field.values();
        let mut out = vec![0.0; side];
        if transpose {
            for (r, &vr) in v.iter().enumerate() {
                if vr == 0.0 {
                    continue;
                }
                let row = &self.matrix[r * side..(r + 1) * side];
                for (o, m) in out.iter_mut().zip(row) {
                    *o += m * vr;
                }
            }
            for o in &mut out {
                *o *= h;
            }
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                let row = &self.matrix[r * side..(r + 1) * side];
                *o = h * row.iter().zip(v).map(|(m, x)| m * x).sum::<f64>();
            }
        }
        Ok(Field::from_raw(self.grid, self.channels, out))
    }

    /// Largest singular value of the quadrature-weighted matrix `h^d M`,
    /// which is the operator norm in discrete `L²`.
    pub fn op_norm(&self) -> f64 {
        let side = self.channels * self.grid.len();
        let h = self.grid.cell_volume();
        let m = DMatrix::from_row_slice(side, side, &self.matrix) * h;
        m.singular_values().max()
    }
}

impl SpectralKernel {
    pub fn new(
        dim: usize,
        k_max: usize,
        channels: usize,
        multipliers: Vec<Complex64>,
    ) -> Result<Self, OperatorError> {
        let modes = half_modes(dim, k_max).len();
        if multipliers.len() != modes * channels * channels {
            return Err(OperatorError::Shape(format!(
                "spectral kernel needs {} multipliers ({} modes × {}²), got {}",
                modes * channels * channels,
                modes,
                channels,
                multipliers.len()
            )));
        }
        if multipliers.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(OperatorError::NonFiniteParameter("spectral multipliers".into()));
        }
        Ok(SpectralKernel {
            dim,
            k_max,
            channels,
            multipliers,
        })
    }

    pub fn zeros(dim: usize, k_max: usize, channels: usize) -> Self {
        let m = half_modes(dim, k_max).len();
        SpectralKernel {
            dim,
            k_max,
            channels,
            multipliers: vec![Complex64::new(0.0, 0.0); m * channels * channels],
        }
    }

    /// Builds multipliers from `f(k, a, b)` over the stored half set of modes.
    pub fn from_fn(
        dim: usize,
        k_max: usize,
        channels: usize,
        mut f: impl FnMut([i64; 2], usize, usize) -> Complex64,
    ) -> Result<Self, OperatorError> {
        let mut mult = Vec::new();
        for k in half_modes(dim, k_max) {
            for a in 0..channels {
                for b in 0..channels {
                    mult.push(f(k, a, b));
                }
            }
        }
        SpectralKernel::new(dim, k_max, channels, mult)
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored half set of wavenumbers, in storage order.
    pub fn modes(&self) -> Vec<[i64; 2]> {
        half_modes(self.dim, self.k_max)
    }

    pub fn multipliers(&self) -> &[Complex64] {
        &self.multipliers
    }

    pub fn multiplier(&self, mode: usize, a: usize, b: usize) -> Complex64 {
        let c = self.channels;
        self.multipliers[mode * c * c + a * c + b]
    }

    pub(crate) fn check_grid(&self, grid: &GridSpec) -> Result<(), OperatorError> {
        if grid.dim() != self.dim || 2 * self.k_max >= grid.n() {
            return Err(OperatorError::GridMismatch(format!(
                "spectral kernel (dim {}, k_max {}) needs a {}-D grid with n > {}, got {:?}",
                self.dim,
                self.k_max,
                self.dim,
                2 * self.k_max,
                grid
            )));
        }
        Ok(())
    }

    /// Applies `R_k` (or `R_k^H` when `adjoint`) mode by mode.
    fn apply_modes(&self, field: &Field, adjoint: bool) -> Result<Field, OperatorError> {
        let grid = *field.grid();
        self.check_grid(&grid)?;
        if field.channels() != self.channels {
            return Err(OperatorError::GridMismatch(format!(
                "kernel has {} channels, field has {}",
                self.channels,
                field.channels()
            )));
        }
        let c = self.channels;
        let n = grid.len();
        let spec: Vec<Vec<Complex64>> = (0..c).map(|b| dft_channel(&grid, field.channel(b))).collect();
        let mut out = vec![vec![Complex64::new(0.0, 0.0); n]; c];
        for (m, k) in self.modes().iter().enumerate() {
            let idx = grid.flat_index(*k);
            let zero_mode = k == &[0, 0];
            let pidx = grid.flat_index([-k[0], -k[1]]);
            for (a, out_a) in out.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (b, spec_b) in spec.iter().enumerate() {
                    let r = if adjoint {
                        self.multiplier(m, b, a).conj()
                    } else {
                        self.multiplier(m, a, b)
                    };
                    let r = if zero_mode { Complex64::new(r.re, 0.0) } else { r };
                    acc += r * spec_b[idx];
                }
                out_a[idx] = acc;
                if !zero_mode {
                    out_a[pidx] = acc.conj();
                }
            }
        }
        let values = out.iter().flat_map(|s| idft_channel(&grid, s)).collect();
        Ok(Field::from_raw(grid, c, values))
    }

    /// `max_k ‖R_k‖₂` over the kept modes.
    pub fn op_norm(&self) -> f64 {
        let c = self.channels;
        let mut best = 0.0f64;
        for (m, k) in self.modes().iter().enumerate() {
            let zero_mode = k == &[0, 0];
            let mat = DMatrix::from_fn(c, c, |a, b| {
                let r = self.multiplier(m, a, b);
                if zero_mode {
                    Complex::new(r.re, 0.0)
                } else {
                    Complex::new(r.re, r.im)
                }
            });
            best = best.max(mat.singular_values().max());
        }
        best
    }
}

/// Half set of wavenumbers in the box `max_axis |k| ≤ k_max`: exactly one of
/// each `±k` pair, plus `k = 0`.
pub fn half_modes(dim: usize, k_max: usize) -> Vec<[i64; 2]> {
    let km = k_max as i64;
    let mut out = Vec::new();
    if dim == 1 {
        for k in 0..=km {
            out.push([k, 0]);
        }
    } else {
        for k0 in 0..=km {
            for k1 in -km..=km {
                if k0 > 0 || k1 >= 0 {
                    out.push([k0, k1]);
                }
            }
        }
    }
    out
}

impl KernelSpec {
    pub fn channels(&self) -> usize {
        match self {
            KernelSpec::Dense(d) => d.channels,
            KernelSpec::Spectral(s) => s.channels,
        }
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            KernelSpec::Dense(_) => KernelKind::Dense,
            KernelSpec::Spectral(s) => KernelKind::Spectral { k_max: s.k_max },
        }
    }

    /// Number of real parameters (complex multipliers count twice).
    pub fn param_len(&self) -> usize {
        match self {
            KernelSpec::Dense(d) => d.matrix.len(),
            KernelSpec::Spectral(s) => 2 * s.multipliers.len(),
        }
    }

    pub fn op_norm(&self) -> f64 {
        match self {
            KernelSpec::Dense(d) => d.op_norm(),
            KernelSpec::Spectral(s) => s.op_norm(),
        }
    }

    pub(crate) fn check_grid(&self, grid: &GridSpec) -> Result<(), OperatorError> {
        match self {
            KernelSpec::Dense(d) if d.grid != *grid => Err(OperatorError::GridMismatch(format!(
                "dense kernel built for {:?}, got {:?}",
                d.grid, grid
            ))),
            KernelSpec::Dense(_) => Ok(()),
            KernelSpec::Spectral(s) => s.check_grid(grid),
        }
    }

    pub(crate) fn write_params(&self, out: &mut Vec<f64>) {
        match self {
            KernelSpec::Dense(d) => out.extend_from_slice(&d.matrix),
            KernelSpec::Spectral(s) => {
                for z in &s.multipliers {
                    out.push(z.re);
                    out.push(z.im);
                }
            }
        }
    }

    pub(crate) fn read_params(&mut self, src: &[f64]) {
        match self {
            KernelSpec::Dense(d) => d.matrix.copy_from_slice(src),
            KernelSpec::Spectral(s) => {
                for (z, p) in s.multipliers.iter_mut().zip(src.chunks_exact(2)) {
                    *z = Complex64::new(p[0], p[1]);
                }
            }
        }
    }

    /// Multiplies every kernel parameter by `a`.
    pub(crate) fn scale(&mut self, a: f64) {
        match self {
            KernelSpec::Dense(d) => d.matrix.iter_mut().for_each(|v| *v *= a),
            KernelSpec::Spectral(s) => s.multipliers.iter_mut().for_each(|z| *z *= a),
        }
    }

    /// Gradient of `Σ_x ⟨g(x), 𝒦[v](x)⟩` with respect to the kernel
    /// parameters, in [`KernelSpec::write_params`] order.
    pub(crate) fn param_grad(&self, v: &Field, g: &Field) -> Vec<f64> {
        match self {
            KernelSpec::Dense(d) => {
                let side = d.channels * d.grid.len();
                let h = d.grid.cell_volume();
                let mut out = vec![0.0; side * side];
                for (r, &gr) in g.values().iter().enumerate() {
                    if gr == 0.0 {
                        continue;
                    }
                    let row = &mut out[r * side..(r + 1) * side];
                    for (o, x) in row.iter_mut().zip(v.values()) {
                        *o = h * gr * x;
                    }
                }
                out
            }
            KernelSpec::Spectral(s) => {
                let grid = *v.grid();
                let c = s.channels;
                let nf = grid.len() as f64;
                let vs: Vec<Vec<Complex64>> = (0..c).map(|b| dft_channel(&grid, v.channel(b))).collect();
                let gs: Vec<Vec<Complex64>> = (0..c).map(|a| dft_channel(&grid, g.channel(a))).collect();
                let mut out = Vec::with_capacity(2 * s.multipliers.len());
                for k in s.modes() {
                    let idx = grid.flat_index(k);
                    let zero_mode = k == [0, 0];
                    for ga in &gs {
                        for vb in &vs {
                            if zero_mode {
                                out.push(nf * (vb[idx] * ga[idx]).re);
                                out.push(0.0);
                            } else {
                                let z = vb[idx] * ga[idx].conj();
                                out.push(2.0 * nf * z.re);
                                out.push(-2.0 * nf * z.im);
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

/// Applies the kernel integral to `field`.
pub fn apply_kernel(kernel: &KernelSpec, field: &Field) -> Result<Field, OperatorError> {
    match kernel {
        KernelSpec::Dense(d) => d.matvec(field, false),
        KernelSpec::Spectral(s) => s.apply_modes(field, false),
    }
}

/// Applies the Euclidean transpose of the discrete kernel map.
pub(crate) fn apply_kernel_transpose(kernel: &KernelSpec, field: &Field) -> Result<Field, OperatorError> {
    match kernel {
        KernelSpec::Dense(d) => d.matvec(field, true),
        KernelSpec::Spectral(s) => s.apply_modes(field, true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GrfSampler};
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_spectral(dim: usize, k_max: usize, c: usize, seed: u64) -> SpectralKernel {
        let mut rng = rng_from_seed(seed);
        SpectralKernel::from_fn(dim, k_max, c, |_, _, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
        .unwrap()
    }

    #[test]
    fn half_mode_counts() {
        assert_eq!(half_modes(1, 4).len(), 5);
        // (2k+1)² box: (25 - 1)/2 + 1 = 13.
        assert_eq!(half_modes(2, 2).len(), 13);
    }

    #[test]
    fn zero_multipliers_give_zero() {
        let g = make_grid(1, 32, 1.0).unwrap();
        let u = GrfSampler::default().sample(&g, 2);
        let k = KernelSpec::Spectral(SpectralKernel::zeros(1, 8, 2));
        assert!(apply_kernel(&k, &u).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn identity_multiplier_passes_band_limited_input() {
        for dim in [1, 2] {
            let g = make_grid(dim, 32, 1.0).unwrap();
            let u = GrfSampler::new(1.0, 1.0, 4).unwrap().band_limited(6).sample(&g, 2);
            let id = SpectralKernel::from_fn(dim, 8, 2, |_, a, b| {
                Complex64::new(if a == b { 1.0 } else { 0.0 }, 0.0)
            })
            .unwrap();
            let out = apply_kernel(&KernelSpec::Spectral(id), &u).unwrap();
            assert!(out.max_abs_diff(&u).unwrap() < 1e-10);
        }
    }

    #[test]
    fn constant_dense_kernel_integrates_sine_to_zero() {
        let g = make_grid(1, 64, 1.0).unwrap();
        let u = Field::from_fn(g, 1, |_, x| (2.0 * PI * x[0]).sin());
        let k = KernelSpec::Dense(DenseKernel::from_fn(g, 1, |_, _, _, _| 1.0).unwrap());
        assert!(apply_kernel(&k, &u).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn dense_agrees_with_spectral() {
        for dim in [1, 2] {
            let n = if dim == 1 { 32 } else { 16 };
            let g = make_grid(dim, n, 1.0).unwrap();
            let s = random_spectral(dim, 5, 2, 3 + dim as u64);
            let d = DenseKernel::from_spectral(&s, g).unwrap();
            let u = GrfSampler::new(1.0, 1.0, 9).unwrap().sample(&g, 2);
            let a = apply_kernel(&KernelSpec::Spectral(s.clone()), &u).unwrap();
            let b = apply_kernel(&KernelSpec::Dense(d.clone()), &u).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-8, "dim {dim}");
            // Operator norms coincide for a translation-invariant kernel.
            assert!((s.op_norm() - d.op_norm()).abs() < 1e-8 * s.op_norm());
        }
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = make_grid(1, 16, 1.0).unwrap();
        let s = KernelSpec::Spectral(random_spectral(1, 5, 3, 1));
        let dense = KernelSpec::Dense(
            DenseKernel::from_fn(g, 3, |a, b, x, y| (a + 2 * b) as f64 * (x[0] - 0.7 * y[0]).cos())
                .unwrap(),
        );
        let u = GrfSampler::new(1.0, 1.0, 1).unwrap().sample(&g, 3);
        let v = GrfSampler::new(1.0, 1.0, 2).unwrap().sample(&g, 3);
        for k in [s, dense] {
            let ku = apply_kernel(&k, &u).unwrap();
            let ktv = apply_kernel_transpose(&k, &v).unwrap();
            let lhs: f64 = ku.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.values().iter().zip(ktv.values()).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn spectral_rejects_coarse_grid() {
        let g = make_grid(1, 16, 1.0).unwrap();
        let k = KernelSpec::Spectral(SpectralKernel::zeros(1, 8, 1));
        assert!(apply_kernel(&k, &Field::zeros(g, 1)).is_err());
    }

    #[test]
    fn linearity() {
        let g = make_grid(2, 16, 1.0).unwrap();
        let k = KernelSpec::Spectral(random_spectral(2, 3, 2, 5));
        let mut rng = rng_from_seed(0);
        for t in 0..20 {
            let (a, b): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let u = GrfSampler::new(1.0, 1.0, 2 * t).unwrap().sample(&g, 2);
            let v = GrfSampler::new(1.0, 1.0, 2 * t + 1).unwrap().sample(&g, 2);
            let lhs = apply_kernel(&k, &u.lin_comb(a, &v, b).unwrap()).unwrap();
            let rhs = apply_kernel(&k, &u)
                .unwrap()
                .lin_comb(a, &apply_kernel(&k, &v).unwrap(), b)
                .unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);
        }
    }

    #[test]
    fn kind_serde_is_strict() {
        let k: KernelKind = serde_json::from_str(r#"{"type":"spectral","k_max":3}"#).unwrap();
        assert_eq!(k, KernelKind::Spectral { k_max: 3 });
        assert_eq!(serde_json::to_string(&KernelKind::Dense).unwrap(), r#"{"type":"dense"}"#);
        assert!(serde_json::from_str::<KernelKind>(r#"{"type":"dense","k_max":3}"#).is_err());
    }

}
