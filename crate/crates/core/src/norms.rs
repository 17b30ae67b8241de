//! Discrete Lq / H1q / H2q norms and the grid differentiation passes they
//! are built from: spectral derivatives on periodic axes, second-order
//! centered differences (one-sided at the ends) on bounded axes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fft::{fft_axis, wavenumber, DiffScheme};
use crate::grid::{Geometry, GridField};

/// Norm exponents: `q` spatial, `p` temporal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteNorms {
    pub q: f64,
    pub p: f64,
}

impl Default for DiscreteNorms {
    fn default() -> Self {
        Self { q: 2.0, p: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Lq,
    H1q,
    H2q,
}

/// Differentiate one scalar component array along `axis`.
fn diff_component(
    data: &mut Vec<Complex64>,
    geom: &Geometry,
    axis: usize,
    order: usize,
    scheme: DiffScheme,
) {
    let axes = geom.axes();
    let shape = geom.shape();
    let ax = axes[axis];
    let h = ax.h();
    if ax.periodic {
        fft_axis(data, &shape, axis, false);
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        for o in 0..outer {
            for j in 0..ax.m {
                let k = wavenumber(j, ax.m, ax.len);
                let sym = match order {
                    1 => scheme.d1_symbol(k, h),
                    2 => Complex64::new(-scheme.xi_sq(k, h), 0.0),
                    _ => unreachable!("only first and second derivatives are used"),
                };
                for s in 0..stride {
                    data[(o * ax.m + j) * stride + s] *= sym;
                }
            }
        }
        fft_axis(data, &shape, axis, true);
    } else {
        let m = ax.m;
        let stride: usize = shape[axis + 1..].iter().product();
        let outer: usize = shape[..axis].iter().product();
        let mut line = vec![Complex64::default(); m];
        let mut out = vec![Complex64::default(); m];
        for o in 0..outer {
            for s in 0..stride {
                for i in 0..m {
                    line[i] = data[(o * m + i) * stride + s];
                }
                match order {
                    1 => {
                        out[0] = (-3.0 * line[0] + 4.0 * line[1] - line[2]) / (2.0 * h);
                        for i in 1..m - 1 {
                            out[i] = (line[i + 1] - line[i - 1]) / (2.0 * h);
                        }
                        out[m - 1] =
                            (3.0 * line[m - 1] - 4.0 * line[m - 2] + line[m - 3]) / (2.0 * h);
                    }
                    2 => {
                        out[0] = (2.0 * line[0] - 5.0 * line[1] + 4.0 * line[2] - line[3])
                            / (h * h);
                        for i in 1..m - 1 {
                            out[i] = (line[i + 1] - 2.0 * line[i] + line[i - 1]) / (h * h);
                        }
                        out[m - 1] = (2.0 * line[m - 1] - 5.0 * line[m - 2] + 4.0 * line[m - 3]
                            - line[m - 4])
                            / (h * h);
                    }
                    _ => unreachable!(),
                }
                for i in 0..m {
                    data[(o * m + i) * stride + s] = out[i];
                }
            }
        }
    }
}

/// Derivative of a field along a grid axis (all components).
pub fn derivative(f: &GridField, axis: usize, order: usize, scheme: DiffScheme) -> GridField {
    let mut out = f.clone();
    let npts = f.npoints();
    for c in 0..f.n {
        let mut comp: Vec<Complex64> = f.component(c).to_vec();
        diff_component(&mut comp, &f.geom, axis, order, scheme);
        out.data[c * npts..(c + 1) * npts].copy_from_slice(&comp);
    }
    out
}

/// Multiply a field pointwise by `1/r^pow` on the disk (radial metric factor).
fn div_radius(f: &mut GridField, pow: i32) {
    let axes = f.geom.axes();
    let shape = f.geom.shape();
    let npts = f.npoints();
    for c in 0..f.n {
        for p in 0..npts {
            let i_r = p / shape[1];
            let r = axes[0].coord(i_r);
            f.data[c * npts + p] *= r.powi(-pow);
        }
    }
}

/// First-derivative fields entering the H1 seminorm, in an orthonormal frame.
pub fn gradient_frame(f: &GridField, scheme: DiffScheme) -> Vec<GridField> {
    match &f.geom {
        Geometry::Disk { .. } => {
            let d_r = derivative(f, 0, 1, scheme);
            let mut d_t = derivative(f, 1, 1, scheme);
            div_radius(&mut d_t, 1);
            vec![d_r, d_t]
        }
        _ => (0..f.geom.axes().len())
            .map(|a| derivative(f, a, 1, scheme))
            .collect(),
    }
}

/// Second-derivative fields entering the H2 seminorm (multi-index
/// convention: each mixed pair appears once). On the disk these are the
/// orthonormal-frame Hessian components.
pub fn hessian_frame(f: &GridField, scheme: DiffScheme) -> Vec<GridField> {
    match &f.geom {
        Geometry::Disk { .. } => {
            let h_rr = derivative(f, 0, 2, scheme);
            // H_rt = (1/r) u_rt - (1/r^2) u_t
            let mut u_rt = derivative(&derivative(f, 0, 1, scheme), 1, 1, scheme);
            div_radius(&mut u_rt, 1);
            let mut u_t = derivative(f, 1, 1, scheme);
            div_radius(&mut u_t, 2);
            let h_rt = u_rt.sub(&u_t);
            // H_tt = (1/r^2) u_tt + (1/r) u_r
            let mut u_tt = derivative(f, 1, 2, scheme);
            div_radius(&mut u_tt, 2);
            let mut u_r = derivative(f, 0, 1, scheme);
            div_radius(&mut u_r, 1);
            let h_tt = u_tt.add(&u_r);
            vec![h_rr, h_rt, h_tt]
        }
        _ => {
            let naxes = f.geom.axes().len();
            let mut out = Vec::new();
            for a in 0..naxes {
                for b in a..naxes {
                    if a == b {
                        out.push(derivative(f, a, 2, scheme));
                    } else {
                        out.push(derivative(&derivative(f, a, 1, scheme), b, 1, scheme));
                    }
                }
            }
            out
        }
    }
}

/// Lq norm of a single field by grid quadrature.
fn lq_single(f: &GridField, q: f64) -> f64 {
    let npts = f.npoints();
    let mut acc = 0.0;
    for p in 0..npts {
        let w = f.geom.weight(&f.geom.multi(p));
        let mut mag2 = 0.0;
        for c in 0..f.n {
            mag2 += f.data[c * npts + p].norm_sqr();
        }
        acc += w * mag2.powf(0.5 * q);
    }
    acc
}

/// Discrete Lq / H1q / H2q norm of a field. Periodic axes are
/// differentiated spectrally; bounded axes always use the FD stencils.
pub fn norm(f: &GridField, kind: NormKind, norms: &DiscreteNorms) -> f64 {
    let q = norms.q;
    let scheme = DiffScheme::Spectral;
    let mut acc = lq_single(f, q);
    if matches!(kind, NormKind::H1q | NormKind::H2q) {
        for d in gradient_frame(f, scheme) {
            acc += lq_single(&d, q);
        }
    }
    if matches!(kind, NormKind::H2q) {
        for d in hessian_frame(f, scheme) {
            acc += lq_single(&d, q);
        }
    }
    acc.powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisSpec;
    use rand::{Rng, SeedableRng};

    fn box_2pi(m: usize) -> Geometry {
        Geometry::periodic_box(&[2.0 * std::f64::consts::PI], &[m])
    }

    #[test]
    fn constant_field_lq() {
        // |c| |Omega|^{1/q} for a constant field
        let g = box_2pi(64);
        let f = GridField::from_fn(g, 1, |_, _| Complex64::new(1.0, 0.0));
        let n2 = norm(&f, NormKind::Lq, &DiscreteNorms::default());
        assert!((n2 - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
        let n3 = norm(&f, NormKind::Lq, &DiscreteNorms { q: 3.0, p: 2.0 });
        assert!((n3 - (2.0 * std::f64::consts::PI).powf(1.0 / 3.0)).abs() < 1e-10);
    }

    #[test]
    fn sine_l2_is_sqrt_pi() {
        let g = box_2pi(64);
        let f = GridField::from_fn(g, 1, |_, x| Complex64::new(x[0].sin(), 0.0));
        let n = norm(&f, NormKind::Lq, &DiscreteNorms::default());
        assert!((n - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn random_field_matches_direct_summation() {
        let g = Geometry::periodic_box(&[1.0, 2.0], &[6, 5]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let f = GridField::from_fn(g.clone(), 2, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let q = 2.5;
        // independent direct summation oracle
        let npts = g.npoints();
        let w = g.measure() / npts as f64;
        let mut acc = 0.0;
        for p in 0..npts {
            let mag2 = f.at(0, p).norm_sqr() + f.at(1, p).norm_sqr();
            acc += w * mag2.powf(0.5 * q);
        }
        let oracle = acc.powf(1.0 / q);
        let got = norm(&f, NormKind::Lq, &DiscreteNorms { q, p: 2.0 });
        assert!((got - oracle).abs() < 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn norm_monotonicity_on_random_fields() {
        let g = Geometry::periodic_box(&[3.0], &[32]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let nn = DiscreteNorms::default();
        for _ in 0..100 {
            let f = GridField::from_fn(g.clone(), 1, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let l = norm(&f, NormKind::Lq, &nn);
            let h1 = norm(&f, NormKind::H1q, &nn);
            let h2 = norm(&f, NormKind::H2q, &nn);
            assert!(h2 >= h1 && h1 >= l);
        }
    }

    #[test]
    fn spectral_derivative_exact_on_modes() {
        let g = box_2pi(32);
        let f = GridField::from_fn(g, 1, |_, x| Complex64::new((3.0 * x[0]).cos(), 0.0));
        let d = derivative(&f, 0, 1, DiffScheme::Spectral);
        for p in 0..d.npoints() {
            let x = d.geom.coords(&d.geom.multi(p))[0];
            assert!((d.at(0, p) - Complex64::new(-3.0 * (3.0 * x).sin(), 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn bounded_axis_derivative_second_order() {
        // error of the centered/one-sided stencils on exp(x) is O(h^2)
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&m| {
                let g = Geometry::Interval { axis: AxisSpec::cell_centered(0.0, 1.0, m) };
                let f = GridField::from_fn(g, 1, |_, x| Complex64::new(x[0].exp(), 0.0));
                let d = derivative(&f, 0, 1, DiffScheme::Centered2);
                (0..d.npoints())
                    .map(|p| {
                        let x = d.geom.coords(&d.geom.multi(p))[0];
                        (d.at(0, p) - Complex64::new(x.exp(), 0.0)).norm()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < errs[0] / 3.0);
    }

    #[test]
    fn disk_gradient_of_radial_quadratic() {
        // u = r^2 -> grad = (2r, 0); H_tt = (1/r) u_r = 2, H_rr = 2
        let g = Geometry::Disk { radius: 1.0, m_r: 48, m_theta: 16 };
        let f = GridField::from_fn(g, 1, |_, x| Complex64::new(x[0] * x[0], 0.0));
        let grad = gradient_frame(&f, DiffScheme::Spectral);
        for p in 0..f.npoints() {
            let r = f.geom.coords(&f.geom.multi(p))[0];
            assert!((grad[0].at(0, p) - Complex64::new(2.0 * r, 0.0)).norm() < 1e-8);
            assert!(grad[1].at(0, p).norm() < 1e-10);
        }
        let hess = hessian_frame(&f, DiffScheme::Spectral);
        for p in 0..f.npoints() {
            assert!((hess[0].at(0, p) - Complex64::new(2.0, 0.0)).norm() < 1e-7);
            assert!(hess[1].at(0, p).norm() < 1e-7);
            assert!((hess[2].at(0, p) - Complex64::new(2.0, 0.0)).norm() < 1e-7);
        }
    }
}
