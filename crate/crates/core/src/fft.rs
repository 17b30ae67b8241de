//! FFT passes along axes of row-major multi-dimensional complex arrays,
//! plus the wavenumber and difference-symbol tables used by the
//! multiplier solvers.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let (planner, cache) = &mut *cell.borrow_mut();
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// In-place FFT along `axis` of a row-major array of the given shape.
/// The inverse transform is normalized by `1/m`.
pub fn fft_axis(data: &mut [Complex64], shape: &[usize], axis: usize, inverse: bool) {
    let m = shape[axis];
    if m == 1 {
        return;
    }
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total);
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let fft = plan(m, inverse);
    let mut line = vec![Complex64::default(); m];
    for o in 0..outer {
        let block = o * m * stride;
        for s in 0..stride {
            for i in 0..m {
                line[i] = data[block + i * stride + s];
            }
            fft.process(&mut line);
            let norm = if inverse { 1.0 / m as f64 } else { 1.0 };
            for i in 0..m {
                data[block + i * stride + s] = line[i] * norm;
            }
        }
    }
}

/// Angular wavenumber of mode `j` on a periodic axis of length `len` with
/// `m` points: `2 pi freq / len` with the usual symmetric frequency layout.
pub fn wavenumber(j: usize, m: usize, len: f64) -> f64 {
    let freq = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
    2.0 * std::f64::consts::PI * freq / len
}

/// Differentiation scheme backing a multiplier solver: exact spectral
/// symbols, or the symbols of second-order centered differences (so that an
/// FFT solve inverts the difference operator exactly on a periodic grid).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffScheme {
    Spectral,
    Centered2,
}

impl DiffScheme {
    /// Symbol of the first derivative at wavenumber `k` (mesh `h`).
    pub fn d1_symbol(&self, k: f64, h: f64) -> Complex64 {
        match self {
            DiffScheme::Spectral => Complex64::new(0.0, k),
            DiffScheme::Centered2 => Complex64::new(0.0, (k * h).sin() / h),
        }
    }

    /// Symbol of minus the second derivative (`|xi|^2` contribution) at
    /// wavenumber `k`.
    pub fn xi_sq(&self, k: f64, h: f64) -> f64 {
        match self {
            DiffScheme::Spectral => k * k,
            DiffScheme::Centered2 => {
                let s = (0.5 * k * h).sin();
                4.0 * s * s / (h * h)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_2d() {
        let shape = [4usize, 6usize];
        let mut data: Vec<Complex64> = (0..24)
            .map(|i| Complex64::new(i as f64, (i * i % 7) as f64))
            .collect();
        let orig = data.clone();
        fft_axis(&mut data, &shape, 0, false);
        fft_axis(&mut data, &shape, 1, false);
        fft_axis(&mut data, &shape, 1, true);
        fft_axis(&mut data, &shape, 0, true);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn single_mode_transform() {
        let m = 8;
        let len = 2.0 * std::f64::consts::PI;
        let mut data: Vec<Complex64> = (0..m)
            .map(|i| (Complex64::i() * (3.0 * i as f64 * len / m as f64)).exp())
            .collect();
        fft_axis(&mut data, &[m], 0, false);
        for (j, v) in data.iter().enumerate() {
            let expect = if j == 3 { m as f64 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn centered2_symbol_matches_stencil() {
        let m = 16;
        let len = 3.0;
        let h = len / m as f64;
        // apply the 3-point stencil to a single mode and compare with the symbol
        let k = wavenumber(5, m, len);
        let u: Vec<Complex64> = (0..m)
            .map(|i| (Complex64::i() * (k * i as f64 * h)).exp())
            .collect();
        let lap: Vec<Complex64> = (0..m)
            .map(|i| {
                let up = u[(i + 1) % m];
                let um = u[(i + m - 1) % m];
                (up - 2.0 * u[i] + um) / (h * h)
            })
            .collect();
        let sym = -DiffScheme::Centered2.xi_sq(k, h);
        for (i, l) in lap.iter().enumerate() {
            assert!((l - sym * u[i]).norm() < 1e-10);
        }
    }
}
