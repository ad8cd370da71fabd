use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::{Field, GridSpec, Spectrum};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalised in-place transform of one channel (`n` or `n×n` values).
fn transform(grid: &GridSpec, buf: &mut [Complex64], direction: FftDirection) {
    let n = grid.n();
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft(n, direction));
    // Rows are contiguous in both layouts.
    plan.process(buf);
    if grid.dim() == 2 {
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for i1 in 0..n {
            for i0 in 0..n {
                col[i0] = buf[i0 * n + i1];
            }
            plan.process(&mut col);
            for i0 in 0..n {
                buf[i0 * n + i1] = col[i0];
            }
        }
    }
}

pub(crate) fn dft_channel(grid: &GridSpec, values: &[f64]) -> Vec<Complex64> {
    let scale = 1.0 / grid.len() as f64;
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform(grid, &mut buf, FftDirection::Forward);
    for c in &mut buf {
        *c *= scale;
    }
    buf
}

pub(crate) fn idft_complex_channel(grid: &GridSpec, coeffs: &[Complex64]) -> Vec<Complex64> {
    let mut buf = coeffs.to_vec();
    transform(grid, &mut buf, FftDirection::Inverse);
    buf
}

pub(crate) fn idft_channel(grid: &GridSpec, coeffs: &[Complex64]) -> Vec<f64> {
    idft_complex_channel(grid, coeffs)
        .into_iter()
        .map(|c| c.re)
        .collect()
}

/// Mean-normalised forward transform: `coeffs[0]` is the channel mean.
pub fn dft(field: &Field) -> Spectrum {
    let grid = *field.grid();
    let coeffs = (0..field.channels())
        .flat_map(|c| dft_channel(&grid, field.channel(c)))
        .collect();
    Spectrum::from_raw(grid, field.channels(), coeffs)
}

/// Inverse of [`dft`]; keeps the real part of the synthesis.
pub fn idft(spectrum: &Spectrum) -> Field {
    let grid = *spectrum.grid();
    let values = (0..spectrum.channels())
        .flat_map(|c| idft_channel(&grid, spectrum.channel(c)))
        .collect();
    Field::from_raw(grid, spectrum.channels(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, sample_grf, GrfSampler};
    use std::f64::consts::PI;

    /// Direct O(N²) DFT in the same convention.
    fn naive_dft(grid: &GridSpec, values: &[f64]) -> Vec<Complex64> {
        let n = grid.n();
        let total = grid.len();
        (0..total)
            .map(|kf| {
                let k = grid.wavenumber(kf);
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..total {
                    let (x0, x1) = if grid.dim() == 1 { (j, 0) } else { (j / n, j % n) };
                    let phase =
                        -2.0 * PI * (k[0] as f64 * x0 as f64 + k[1] as f64 * x1 as f64) / n as f64;
                    acc += values[j] * Complex64::from_polar(1.0, phase);
                }
                acc / total as f64
            })
            .collect()
    }

    #[test]
    fn constant_and_delta() {
        let g = make_grid(1, 8, 1.0).unwrap();
        let s = dft(&Field::constant(g, 1, 1.0));
        assert!((s.coeffs()[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-15));
        let mut v = vec![0.0; 8];
        v[0] = 1.0;
        let s = dft(&Field::new(g, 1, v).unwrap());
        assert!(s.coeffs().iter().all(|c| (c.norm() - 0.125).abs() < 1e-15));
    }

    #[test]
    fn sine_matches_analytic_and_naive() {
        let g = make_grid(1, 64, 1.0).unwrap();
        let u = Field::from_fn(g, 1, |_, x| (2.0 * PI * x[0]).sin());
        let s = dft(&u);
        let naive = naive_dft(&g, u.values());
        for j in 0..64 {
            assert!((s.coeffs()[j] - naive[j]).norm() < 1e-13);
        }
        assert!((s.at(0, [1, 0]) - Complex64::new(0.0, -0.5)).norm() < 1e-12);
        assert!((s.at(0, [-1, 0]) - Complex64::new(0.0, 0.5)).norm() < 1e-12);
        for j in 0..64 {
            let k = g.freq(j);
            if k.abs() != 1 {
                assert!(s.coeffs()[j].norm() < 1e-12);
            }
        }
    }

    #[test]
    fn two_d_matches_naive() {
        let g = make_grid(2, 8, 1.0).unwrap();
        let u = sample_grf(&GrfSampler::new(1.0, 1.0, 3).unwrap(), &g, 1);
        let s = dft(&u);
        let naive = naive_dft(&g, u.values());
        for j in 0..g.len() {
            assert!((s.coeffs()[j] - naive[j]).norm() < 1e-13);
        }
        assert!(s.conjugate_asymmetry() < 1e-12);
    }

    #[test]
    fn round_trip_all_sizes() {
        let sampler = GrfSampler::new(1.0, 1.0, 11).unwrap();
        let mut n = 8;
        while n <= 4096 {
            let g = make_grid(1, n, 1.0).unwrap();
            let u = sample_grf(&sampler, &g, 2);
            let back = idft(&dft(&u));
            assert!(u.max_abs_diff(&back).unwrap() < 1e-12, "n={n}");
            n *= 2;
        }
        let mut n = 8;
        while n <= 64 {
            let g = make_grid(2, n, 1.0).unwrap();
            let u = sample_grf(&sampler, &g, 1);
            let back = idft(&dft(&u));
            assert!(u.max_abs_diff(&back).unwrap() < 1e-12, "2d n={n}");
            n *= 2;
        }
    }
}
