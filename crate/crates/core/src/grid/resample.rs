use rustfft::num_complex::Complex64;

use super::{dft, idft, Field, GridError, Spectrum};

/// Where one per-axis frequency of the source grid lands on the target grid.
///
/// Upsampling keeps every mode and splits the source Nyquist coefficient
/// evenly between `±n/2`. Downsampling keeps `|k| < m/2`, folds `k = ±m/2`
/// onto the target Nyquist index and drops the rest. Folding exactly undoes
/// the split, so refine-then-restrict is the identity.
fn axis_targets(old_n: usize, new_n: usize, k: i64) -> [(Option<i64>, f64); 2] {
    let old_half = old_n as i64 / 2;
    let new_half = new_n as i64 / 2;
    if new_n == old_n {
        [(Some(k), 1.0), (None, 0.0)]
    } else if new_n > old_n {
        if k == -old_half {
            [(Some(-old_half), 0.5), (Some(old_half), 0.5)]
        } else {
            [(Some(k), 1.0), (None, 0.0)]
        }
    } else if k.abs() < new_half {
        [(Some(k), 1.0), (None, 0.0)]
    } else if k.abs() == new_half {
        [(Some(-new_half), 1.0), (None, 0.0)]
    } else {
        [(None, 0.0), (None, 0.0)]
    }
}

/// Spectral resampling to `new_n` points per axis.
pub fn resample(field: &Field, new_n: usize) -> Result<Field, GridError> {
    let old = *field.grid();
    let new = old.with_n(new_n)?;
    if new == old {
        return Ok(field.clone());
    }
    let spec = dft(field);
    let (on, nn) = (old.len(), new.len());
    let mut out = vec![Complex64::new(0.0, 0.0); field.channels() * nn];
    for c in 0..field.channels() {
        let src = spec.channel(c);
        let dst = &mut out[c * nn..(c + 1) * nn];
        for (j, &coef) in src.iter().enumerate().take(on) {
            if coef == Complex64::new(0.0, 0.0) {
                continue;
            }
            let k = old.wavenumber(j);
            let t0 = axis_targets(old.n(), new_n, k[0]);
            if old.dim() == 1 {
                for (kk, w) in t0 {
                    if let Some(kk) = kk {
                        dst[new.flat_index([kk, 0])] += coef * w;
                    }
                }
            } else {
                let t1 = axis_targets(old.n(), new_n, k[1]);
                for (a, wa) in t0 {
                    for (b, wb) in t1 {
                        if let (Some(a), Some(b)) = (a, b) {
                            dst[new.flat_index([a, b])] += coef * (wa * wb);
                        }
                    }
                }
            }
        }
    }
    Ok(idft(&Spectrum::from_raw(new, field.channels(), out)))
}
