//! Seeded random data: unit-norm grid fields (white and smooth), random SPD
//! matrices. All randomness in the crate flows through `ChaCha8Rng` seeds so
//! runs are reproducible.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::fft::fft_axis;
use crate::grid::{Geometry, GridField};
use crate::norms::{norm, DiscreteNorms, NormKind};

pub use rand::SeedableRng;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn standard_complex(rng: &mut impl Rng) -> Complex64 {
    // Box-Muller pair
    let u1: f64 = rng.gen::<f64>().max(1e-16);
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    Complex64::new(r * (2.0 * std::f64::consts::PI * u2).cos(), r * (2.0 * std::f64::consts::PI * u2).sin())
}

/// White-noise complex field, normalized to unit Lq norm.
pub fn random_field(geom: &Geometry, n: usize, rng: &mut impl Rng, norms: &DiscreteNorms) -> GridField {
    let mut f = GridField::zeros(geom.clone(), n);
    for v in &mut f.data {
        *v = standard_complex(rng);
    }
    let s = norm(&f, NormKind::Lq, norms);
    f.scale(Complex64::new(1.0 / s, 0.0));
    f
}

/// Smooth random field: low-pass filtered white noise (Gaussian spectral
/// taper on periodic axes, smooth random polynomial-free profile on bounded
/// axes built from a few low modes), normalized to unit Lq norm. Used when a
/// comparison against a continuum-accurate oracle is intended.
pub fn random_smooth_field(
    geom: &Geometry,
    n: usize,
    rng: &mut impl Rng,
    norms: &DiscreteNorms,
    cutoff_frac: f64,
) -> GridField {
    let axes = geom.axes();
    let shape = geom.shape();
    let mut f = GridField::zeros(geom.clone(), n);
    for c in 0..n {
        let mut comp: Vec<Complex64> = (0..geom.npoints()).map(|_| standard_complex(rng)).collect();
        for (a, ax) in axes.iter().enumerate() {
            if ax.periodic {
                fft_axis(&mut comp, &shape, a, false);
                let stride: usize = shape[a + 1..].iter().product();
                let outer: usize = shape[..a].iter().product();
                let kc = (cutoff_frac * (ax.m as f64) / 2.0).max(1.0);
                for o in 0..outer {
                    for j in 0..ax.m {
                        let freq = if j <= ax.m / 2 { j as f64 } else { j as f64 - ax.m as f64 };
                        let damp = (-0.5 * (freq / kc).powi(2) * 4.0).exp();
                        for s in 0..stride {
                            comp[(o * ax.m + j) * stride + s] *= damp;
                        }
                    }
                }
                fft_axis(&mut comp, &shape, a, true);
            } else {
                // convolve lines repeatedly with a short kernel to smooth
                let m = ax.m;
                let stride: usize = shape[a + 1..].iter().product();
                let outer: usize = shape[..a].iter().product();
                let passes = ((1.0 / cutoff_frac).round() as usize * m / 16).max(2);
                for _ in 0..passes {
                    for o in 0..outer {
                        for s in 0..stride {
                            let mut prev = comp[(o * m) * stride + s];
                            for i in 0..m {
                                let cur = comp[(o * m + i) * stride + s];
                                let next = if i + 1 < m {
                                    comp[(o * m + i + 1) * stride + s]
                                } else {
                                    cur
                                };
                                comp[(o * m + i) * stride + s] = 0.25 * prev + 0.5 * cur + 0.25 * next;
                                prev = cur;
                            }
                        }
                    }
                }
            }
        }
        let npts = geom.npoints();
        f.data[c * npts..(c + 1) * npts].copy_from_slice(&comp);
    }
    let s = norm(&f, NormKind::Lq, norms);
    f.scale(Complex64::new(1.0 / s, 0.0));
    f
}

/// Random symmetric positive definite matrix with eigenvalues in
/// `[ev_min, ev_max]`.
pub fn random_spd(n: usize, ev_min: f64, ev_max: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    // random orthogonal Q from QR of a Gaussian matrix
    let g = DMatrix::from_fn(n, n, |_, _| standard_complex(rng).re);
    let qr = g.qr();
    let q = qr.q();
    let evs: Vec<f64> = (0..n).map(|_| rng.gen_range(ev_min..=ev_max)).collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(evs));
    let a = &q * d * q.transpose();
    0.5 * (&a + a.transpose())
}

/// Random unit complex vector.
pub fn random_unit_vector(n: usize, rng: &mut impl Rng) -> nalgebra::DVector<Complex64> {
    let mut v = nalgebra::DVector::from_fn(n, |_, _| standard_complex(rng));
    let s = v.norm();
    v /= Complex64::new(s, 0.0);
    v
}
