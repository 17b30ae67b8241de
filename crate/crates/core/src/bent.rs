//! Bent-half-space solver: the resolvent problem on a chart-mapped half
//! space, pulled back to the flat grid and solved by a fixed point around
//! the flat solver `T3(lambda)`.
//!
//! The transformed system on the flat grid reads
//! `lambda R u - B [Delta u + D2 : grad^2 u + D1 . grad u] - (grad_y B) . grad_y u = f`
//! with the boundary operator
//! `-(B)(1 + dt)[(1 + E_N) d_N u + E_t d_t u] = g` at the face,
//! where the metric fields come from the chart Jacobian. Normal derivatives
//! are centered stencils closed by a flux ghost at the boundary face and an
//! even ghost at the far face, matching the flat solver's representation
//! exactly, so the fixed point telescopes to a solution of this discrete
//! system.

use num_complex::Complex64;

use crate::coeff::CoefficientPair;
use crate::error::{Result, SolveError};
use crate::fft::DiffScheme;
use crate::grid::{Geometry, GridField};
use crate::halfspace::{boundary_geometry, solve_t3_raw, HalfSpaceProblem, HsSchemes, PairField};
use crate::linalg::RMat;
use crate::norms::{norm, DiscreteNorms, NormKind};
use crate::wholespace::{neumann_series, scaled_norms, ResolventSolution, SeriesDiagnostics};

/// Chart data sampled over a half-space grid: the bijection, its constant
/// orthogonal part, the inverse-Jacobian perturbation and the derived
/// metric fields.
pub struct BentChart {
    pub grid: Geometry,
    /// Orthogonal part of `grad Phi`.
    pub a_matrix: RMat,
    /// Mapped physical coordinates of the grid points.
    pub phi: Vec<[f64; 2]>,
    /// Forward-Jacobian perturbation `grad Phi - A` per grid point.
    pub bcal_field: Vec<RMat>,
    /// Inverse-Jacobian perturbation `b(x) = (grad Phi)^{-1} - A^{-1}`.
    pub b_inv_pert: Vec<RMat>,
    /// Second-order metric coefficients `D2[l][k]` of `d_l d_k`.
    pub d2: [[Vec<f64>; 2]; 2],
    /// First-order metric coefficients `D1[k]` of `d_k`.
    pub d1: [Vec<f64>; 2],
    /// Boundary normalizer `d(x')` at face points.
    pub d_field: Vec<f64>,
    /// `1/d - 1` at face points.
    pub dtilde_field: Vec<f64>,
    /// Boundary first-order coefficients: `E[k](x')` of `d_k u` inside the
    /// transformed conormal derivative.
    pub e_field: [Vec<f64>; 2],
    /// Measured sup norms of the perturbations.
    pub m1_forward: f64,
    pub m1_inverse: f64,
    pub min_det_jac: f64,
    /// Largest `|J J^{-1} - I|` over the samples.
    pub jac_roundtrip: f64,
}

impl BentChart {
    /// Sample a chart from closures for the map, its Jacobian, and the
    /// Jacobian's coordinate derivatives.
    pub fn from_fns(
        grid: Geometry,
        a_matrix: RMat,
        map: &dyn Fn(&[f64]) -> [f64; 2],
        jac: &dyn Fn(&[f64]) -> RMat,
        jac_grad: &dyn Fn(&[f64]) -> [RMat; 2],
    ) -> Result<Self> {
        let npts = grid.npoints();
        let a_inv = a_matrix.transpose(); // orthogonal
        let mut phi = Vec::with_capacity(npts);
        let mut bcal_field = Vec::with_capacity(npts);
        let mut b_inv_pert = Vec::with_capacity(npts);
        let mut d2: [[Vec<f64>; 2]; 2] = Default::default();
        let mut d1: [Vec<f64>; 2] = Default::default();
        let mut m1_forward: f64 = 0.0;
        let mut m1_inverse: f64 = 0.0;
        let mut min_det = f64::INFINITY;
        let mut roundtrip: f64 = 0.0;
        let mut eval_at = |x: &[f64],
                           d2: &mut [[Vec<f64>; 2]; 2],
                           d1opt: Option<&mut [Vec<f64>; 2]>|
         -> Result<(RMat, RMat, [f64; 2])> {
            let j = jac(x);
            let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
            min_det = min_det.min(det.abs());
            if det.abs() < 1e-3 {
                return Err(SolveError::ChartDegenerate(det.abs()));
            }
            let jinv = j.clone().try_inverse().expect("nonsingular Jacobian");
            roundtrip = roundtrip.max((&j * &jinv - RMat::identity(2, 2)).abs().max());
            let b = &jinv - &a_inv;
            let c = jinv.clone(); // c_{kj} = a_{kj} + b_{kj}
            // D2[l][k] = sum_j a_kj b_lj + b_kj (a_lj + b_lj)
            for l in 0..2 {
                for k in 0..2 {
                    let mut acc = 0.0;
                    for jx in 0..2 {
                        acc += a_inv[(k, jx)] * b[(l, jx)] + b[(k, jx)] * c[(l, jx)];
                    }
                    d2[l][k].push(acc);
                }
            }
            if let Some(d1v) = d1opt {
                let dj = jac_grad(x);
                // d_l b_kj = entries of -J^{-1} (d_l J) J^{-1}
                let db0 = -&jinv * &dj[0] * &jinv;
                let db1 = -&jinv * &dj[1] * &jinv;
                for k in 0..2 {
                    let mut acc = 0.0;
                    for jx in 0..2 {
                        acc += c[(0, jx)] * db0[(k, jx)] + c[(1, jx)] * db1[(k, jx)];
                    }
                    d1v[k].push(acc);
                }
            }
            Ok((j, b, map(x)))
        };
        for p in 0..npts {
            let x = grid.coords(&grid.multi(p));
            let (j, b, y) = eval_at(&x, &mut d2, Some(&mut d1))?;
            let bf = &j - &a_matrix;
            m1_forward = m1_forward.max(bf.abs().max());
            m1_inverse = m1_inverse.max(b.abs().max());
            phi.push(y);
            bcal_field.push(bf);
            b_inv_pert.push(b);
        }
        // boundary fields at the face points (x', 0)
        let bgeom = boundary_geometry(&grid);
        let bpts = bgeom.npoints();
        let mut d_field = Vec::with_capacity(bpts);
        let mut dtilde_field = Vec::with_capacity(bpts);
        let mut e_field: [Vec<f64>; 2] = Default::default();
        let mut scratch: [[Vec<f64>; 2]; 2] = Default::default();
        for t in 0..bpts {
            let mut x = bgeom.coords(&bgeom.multi(t));
            x.push(0.0);
            let (j, b, _) = eval_at(&x, &mut scratch, None)?;
            let jinv = j.try_inverse().unwrap();
            // d = |last row of the inverse Jacobian|
            let d = (jinv[(1, 0)].powi(2) + jinv[(1, 1)].powi(2)).sqrt();
            d_field.push(d);
            dtilde_field.push(1.0 / d - 1.0);
            for k in 0..2 {
                let mut acc = 0.0;
                for jx in 0..2 {
                    acc += (a_inv[(k, jx)] + b[(k, jx)]) * b[(1, jx)]
                        + a_inv[(1, jx)] * b[(k, jx)];
                }
                e_field[k].push(acc);
            }
        }
        Ok(Self {
            grid,
            a_matrix,
            phi,
            bcal_field,
            b_inv_pert,
            d2,
            d1,
            d_field,
            dtilde_field,
            e_field,
            m1_forward,
            m1_inverse,
            min_det_jac: min_det,
            jac_roundtrip: roundtrip,
        })
    }

    /// Graph chart over a periodic boundary profile `y_2 = h(y_1)`:
    /// `Phi(x_1, x_2) = (x_1, h(x_1) + x_2)`.
    pub fn graph(
        grid: Geometry,
        profile: &dyn Fn(f64) -> f64,
        profile_d1: &dyn Fn(f64) -> f64,
        profile_d2: &dyn Fn(f64) -> f64,
    ) -> Result<Self> {
        let map = |x: &[f64]| [x[0], profile(x[0]) + x[1]];
        let jac = |x: &[f64]| {
            RMat::from_row_slice(2, 2, &[1.0, 0.0, profile_d1(x[0]), 1.0])
        };
        let jac_grad = |x: &[f64]| {
            [
                RMat::from_row_slice(2, 2, &[0.0, 0.0, profile_d2(x[0]), 0.0]),
                RMat::zeros(2, 2),
            ]
        };
        Self::from_fns(grid, RMat::identity(2, 2), &map, &jac, &jac_grad)
    }

    /// Identity chart (flat boundary).
    pub fn flat(grid: Geometry) -> Result<Self> {
        Self::graph(grid, &|_| 0.0, &|_| 0.0, &|_| 0.0)
    }
}

/// Centered normal first derivative with a flux ghost `u_{-1} = u_0 + h hb`
/// at the boundary face and an even ghost at the far face.
fn normal_d1_ghost(u: &GridField, hb: &GridField) -> GridField {
    let shape = u.geom.shape();
    let axes = u.geom.axes();
    let m = *shape.last().unwrap();
    let h = axes.last().unwrap().h();
    let npts = u.npoints();
    let bpts = hb.npoints();
    let mut out = GridField::zeros(u.geom.clone(), u.n);
    for c in 0..u.n {
        for p in 0..npts {
            let t = p / m;
            let i = p % m;
            let up = if i + 1 < m { u.data[c * npts + t * m + i + 1] } else { u.data[c * npts + p] };
            let um = if i > 0 {
                u.data[c * npts + t * m + i - 1]
            } else {
                u.data[c * npts + p] + hb.data[c * bpts + t] * h
            };
            out.data[c * npts + p] = (up - um) / (2.0 * h);
        }
    }
    out
}

/// Centered normal second derivative with the same ghost closures.
fn normal_d2_ghost(u: &GridField, hb: &GridField) -> GridField {
    let shape = u.geom.shape();
    let axes = u.geom.axes();
    let m = *shape.last().unwrap();
    let h = axes.last().unwrap().h();
    let npts = u.npoints();
    let bpts = hb.npoints();
    let mut out = GridField::zeros(u.geom.clone(), u.n);
    for c in 0..u.n {
        for p in 0..npts {
            let t = p / m;
            let i = p % m;
            let uc = u.data[c * npts + p];
            let up = if i + 1 < m { u.data[c * npts + t * m + i + 1] } else { uc };
            let um = if i > 0 {
                u.data[c * npts + t * m + i - 1]
            } else {
                uc + hb.data[c * bpts + t] * h
            };
            out.data[c * npts + p] = (up - 2.0 * uc + um) / (h * h);
        }
    }
    out
}

/// Spectral tangential derivative on a half-space field.
fn tangential_d1(u: &GridField) -> GridField {
    crate::norms::derivative(u, 0, 1, DiffScheme::Spectral)
}

/// Face values `(u_0 + u_{-1})/2` on the boundary grid.
fn face_value(u: &GridField, hb: &GridField) -> GridField {
    let shape = u.geom.shape();
    let axes = u.geom.axes();
    let m = *shape.last().unwrap();
    let h = axes.last().unwrap().h();
    let bgeom = boundary_geometry(&u.geom);
    let npts = u.npoints();
    let bpts = bgeom.npoints();
    let mut out = GridField::zeros(bgeom, u.n);
    for c in 0..u.n {
        for t in 0..bpts {
            let u0 = u.data[c * npts + t * m];
            let ghost = u0 + hb.data[c * bpts + t] * h;
            out.data[c * bpts + t] = 0.5 * (u0 + ghost);
        }
    }
    out
}

fn mat_apply(m: &RMat, f: &GridField) -> GridField {
    crate::coeff::apply_mat_field(&crate::coeff::MatField::Constant(m.clone()), f)
}

fn scalar_field_mul(w: &[f64], f: &GridField) -> GridField {
    let mut out = f.clone();
    out.mul_scalar_field(w);
    out
}

/// The bent iterate: the accumulated field plus the flat-flux data that
/// built its ghost layer.
#[derive(Debug, Clone)]
pub struct BentIterate {
    pub u: GridField,
    pub flux: GridField,
}

/// The discrete transformed operator applied to an iterate: returns the
/// interior rows and the boundary operator values.
pub fn apply_bent_system(
    chart: &BentChart,
    pair: &CoefficientPair,
    frozen: (&RMat, &RMat),
    lambda: Complex64,
    it: &BentIterate,
) -> PairField {
    let (_, b0) = frozen;
    let n = pair.n;
    let u = &it.u;
    let npts = u.npoints();
    // ghost data hb = B0^{-1} flux
    let b0_inv = b0.clone().try_inverse().unwrap();
    let hb = mat_apply(&b0_inv, &it.flux);
    let d_t = tangential_d1(u);
    let d_n = normal_d1_ghost(u, &hb);
    let d_tt = crate::norms::derivative(u, 0, 2, DiffScheme::Spectral);
    let d_nn = normal_d2_ghost(u, &hb);
    let d_tn = tangential_d1(&d_n);
    // interior: lambda R u - B [lap + D2 : grad2 + D1 . grad] - (grad_y B) . grad_y u
    let mut interior = pair.apply_r(u);
    interior.scale(lambda);
    let mut second = d_tt.add(&d_nn);
    second.axpy(
        Complex64::new(1.0, 0.0),
        &scalar_field_mul(&chart.d2[0][0], &d_tt),
    );
    let mixed = chart.d2[0][1]
        .iter()
        .zip(&chart.d2[1][0])
        .map(|(a, b)| a + b)
        .collect::<Vec<f64>>();
    second.axpy(Complex64::new(1.0, 0.0), &scalar_field_mul(&mixed, &d_tn));
    second.axpy(
        Complex64::new(1.0, 0.0),
        &scalar_field_mul(&chart.d2[1][1], &d_nn),
    );
    second.axpy(Complex64::new(1.0, 0.0), &scalar_field_mul(&chart.d1[0], &d_t));
    second.axpy(Complex64::new(1.0, 0.0), &scalar_field_mul(&chart.d1[1], &d_n));
    interior.axpy(Complex64::new(-1.0, 0.0), &pair.apply_b(&second));
    // variable-coefficient transport term (grad_y B) . grad_y u, built from
    // numerically differentiated coefficient samples when B varies
    if !pair.b_field.is_constant() {
        let db = coefficient_gradients(pair, &u.geom);
        // (grad_y v)_j = sum_l c_lj d_l u; grad_y B entries likewise
        for jx in 0..2 {
            let mut grad_j = GridField::zeros(u.geom.clone(), n);
            for (l, dl) in [&d_t, &d_n].iter().enumerate() {
                let mut term = (*dl).clone();
                let c_lj: Vec<f64> = (0..npts)
                    .map(|p| chart.a_matrix.transpose()[(l, jx)] + chart.b_inv_pert[p][(l, jx)])
                    .collect();
                term.mul_scalar_field(&c_lj);
                grad_j.axpy(Complex64::new(1.0, 0.0), &term);
            }
            // dB/dy_j = sum_k c_kj d_k B
            let mut db_j: Vec<RMat> = vec![RMat::zeros(n, n); npts];
            for p in 0..npts {
                for k in 0..2 {
                    let c_kj = chart.a_matrix.transpose()[(k, jx)] + chart.b_inv_pert[p][(k, jx)];
                    db_j[p] += &db[k][p] * c_kj;
                }
            }
            for p in 0..npts {
                for i in 0..n {
                    let mut acc = Complex64::default();
                    for l in 0..n {
                        acc += db_j[p][(i, l)] * grad_j.data[l * npts + p];
                    }
                    interior.data[i * npts + p] -= acc;
                }
            }
        }
    }
    // boundary: -(B at face)(1 + dt)[(1 + E_N) d_N u + E_t d_t u] at the face
    let bgeom = boundary_geometry(&u.geom);
    let bpts = bgeom.npoints();
    let dn_face = {
        // flux ghost gives the face-centered derivative exactly: -hb
        hb.scaled(Complex64::new(-1.0, 0.0))
    };
    let u_face = face_value(u, &hb);
    let dt_face = if bpts > 1 {
        crate::norms::derivative(&u_face, 0, 1, DiffScheme::Spectral)
    } else {
        GridField::zeros(bgeom.clone(), n)
    };
    let mut boundary = GridField::zeros(bgeom, n);
    for t in 0..bpts {
        let dfac = 1.0 + chart.dtilde_field[t];
        let b_face = face_coefficient(pair, &u.geom, t);
        for i in 0..n {
            let mut acc = Complex64::default();
            for l in 0..n {
                let inner = (1.0 + chart.e_field[1][t]) * dn_face.data[l * bpts + t]
                    + chart.e_field[0][t] * dt_face.data[l * bpts + t];
                acc += b_face[(i, l)] * inner;
            }
            boundary.data[i * bpts + t] = -dfac * acc;
        }
    }
    PairField { f: interior, g: boundary }
}

/// Coefficient value at a boundary face point (nearest-cell sample).
fn face_coefficient(pair: &CoefficientPair, hs: &Geometry, t: usize) -> RMat {
    let m = *hs.shape().last().unwrap();
    pair.b_at(t * m).clone()
}

/// Tangential/normal gradients of the sampled coefficient matrix `B(x)`
/// (spectral tangentially, one-sided second-order at the normal ends).
fn coefficient_gradients(pair: &CoefficientPair, hs: &Geometry) -> [Vec<RMat>; 2] {
    let n = pair.n;
    let npts = hs.npoints();
    let mut out: [Vec<RMat>; 2] = [
        vec![RMat::zeros(n, n); npts],
        vec![RMat::zeros(n, n); npts],
    ];
    for i in 0..n {
        for j in 0..n {
            let entry = GridField::from_fn(hs.clone(), 1, |_, _| Complex64::default());
            let mut entry = entry;
            for p in 0..npts {
                entry.data[p] = Complex64::new(pair.b_at(p)[(i, j)], 0.0);
            }
            for axis in 0..2 {
                let d = crate::norms::derivative(&entry, axis, 1, DiffScheme::Spectral);
                for p in 0..npts {
                    out[axis][p][(i, j)] = d.data[p].re;
                }
            }
        }
    }
    out
}

/// Options for the bent fixed point.
#[derive(Debug, Clone)]
pub struct BentOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Chart perturbation bound checked before solving.
    pub m1_chart_bound: f64,
}

impl Default for BentOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, m1_chart_bound: 0.5 }
    }
}

/// Result of a bent-half-space solve.
pub struct BentSolution {
    pub solution: ResolventSolution,
    pub diagnostics: SeriesDiagnostics,
    /// Residual of the transformed system `(interior, boundary)` relative
    /// to the data norm.
    pub boundary_residual_rel: f64,
    pub interior_residual_rel: f64,
}

/// Solve the bent-half-space resolvent problem: data `(f, g)` are given
/// already pulled back to the flat grid. The fixed point iterates
/// `u <- T3(lambda)[(f, g) - (F(u), G(u))]` with the metric and
/// coefficient-deviation corrections evaluated through the exact discrete
/// transformed operator minus the flat one.
pub fn solve_bent(
    chart: &BentChart,
    pair: &CoefficientPair,
    frozen: (&RMat, &RMat),
    lambda: Complex64,
    f: &GridField,
    g: &GridField,
    nn: &DiscreteNorms,
    opts: &BentOptions,
) -> Result<BentSolution> {
    if chart.min_det_jac < 1e-3 {
        return Err(SolveError::ChartDegenerate(chart.min_det_jac));
    }
    if chart.jac_roundtrip > 1e-8 {
        return Err(SolveError::GeometryMismatch(format!(
            "chart Jacobian roundtrip {:.3e} exceeds 1e-8",
            chart.jac_roundtrip
        )));
    }
    if chart.m1_inverse > opts.m1_chart_bound {
        return Err(SolveError::CoverTooCoarse(format!(
            "chart perturbation {:.3} exceeds the bound {:.3}",
            chart.m1_inverse, opts.m1_chart_bound
        )));
    }
    let (r0, b0) = frozen;
    let frozen_pair = CoefficientPair::constant(r0.clone(), b0.clone(), 2)
        .map_err(SolveError::Coeff)?;
    let pair_norm = |s: &PairField| crate::halfspace::xq_norm(&s.f, &s.g, nn);
    let t3_apply = |s: &PairField| -> Result<BentIterate> {
        let prob = HalfSpaceProblem {
            pair: frozen_pair.clone(),
            lambda,
            f: s.f.clone(),
            g: s.g.clone(),
        };
        let u = solve_t3_raw(&prob, HsSchemes::fd())?;
        Ok(BentIterate { u, flux: s.g.clone() })
    };
    // K(s) = full(T3 s) - flat(T3 s) = full(T3 s) - s
    let apply_k = |s: &PairField| -> Result<PairField> {
        let it = t3_apply(s)?;
        let mut full = apply_bent_system(chart, pair, frozen, lambda, &it);
        full.axpy_vec(Complex64::new(-1.0, 0.0), s);
        Ok(full)
    };
    use crate::wholespace::SeriesVec;
    let data = PairField { f: f.clone(), g: g.clone() };
    let (acc, diagnostics) = neumann_series(apply_k, &data, opts.tol, opts.max_iter, pair_norm)?;
    let it = t3_apply(&acc)?;
    // residual of the discrete transformed system
    let applied = apply_bent_system(chart, pair, frozen, lambda, &it);
    let data_norm = pair_norm(&data).max(1e-300);
    let int_res = norm(&applied.f.sub(f), NormKind::Lq, nn) / data_norm;
    let bdy_res = norm(&applied.g.sub(g), NormKind::Lq, nn) / data_norm;
    Ok(BentSolution {
        solution: ResolventSolution {
            norms_report: scaled_norms(&it.u, lambda, nn),
            residual_rel: int_res,
            v: it.u,
            lambda,
        },
        diagnostics,
        boundary_residual_rel: bdy_res,
        interior_residual_rel: int_res,
    })
}

/// Assemble the dense matrix of the discrete transformed system over the
/// unknown grid values, with the ghost layer eliminated through the flux
/// variable: columns are obtained by probing `apply_bent_system` with unit
/// iterates. Used as the direct-solve oracle in tests.
pub fn dense_bent_matrix(
    chart: &BentChart,
    pair: &CoefficientPair,
    frozen: (&RMat, &RMat),
    lambda: Complex64,
) -> (crate::linalg::CMat, usize, usize) {
    let hs = &chart.grid;
    let n = pair.n;
    let npts = hs.npoints();
    let bgeom = boundary_geometry(hs);
    let bpts = bgeom.npoints();
    let n_int = npts * n;
    let n_bdy = bpts * n;
    let total = n_int + n_bdy;
    let mut a = crate::linalg::CMat::zeros(total, total);
    for col in 0..total {
        let mut u = GridField::zeros(hs.clone(), n);
        let mut flux = GridField::zeros(bgeom.clone(), n);
        if col < n_int {
            u.data[col] = Complex64::new(1.0, 0.0);
        } else {
            flux.data[col - n_int] = Complex64::new(1.0, 0.0);
        }
        let it = BentIterate { u, flux };
        let out = apply_bent_system(chart, pair, frozen, lambda, &it);
        for row in 0..n_int {
            a[(row, col)] = out.f.data[row];
        }
        for row in 0..n_bdy {
            a[(n_int + row, col)] = out.g.data[row];
        }
    }
    (a, n_int, n_bdy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisSpec;
    use crate::rng::{random_spd, rng_from_seed};
    use std::f64::consts::PI;

    fn hs_grid(m_t: usize, m_n: usize) -> Geometry {
        Geometry::HalfSpace {
            tangential: vec![AxisSpec::periodic(2.0 * PI, m_t)],
            depth: 4.0,
            m_normal: m_n,
        }
    }

    #[test]
    fn flat_chart_reduces_to_t3() {
        let hs = hs_grid(8, 16);
        let chart = BentChart::flat(hs.clone()).unwrap();
        assert!(chart.m1_inverse < 1e-14);
        assert!(chart.dtilde_field.iter().all(|v| v.abs() < 1e-14));
        let mut rng = rng_from_seed(4);
        let nn = DiscreteNorms::default();
        let r = random_spd(2, 0.5, 2.0, &mut rng);
        let b = random_spd(2, 0.5, 2.0, &mut rng);
        let pair = CoefficientPair::constant(r.clone(), b.clone(), 2).unwrap();
        let f = crate::rng::random_field(&hs, 2, &mut rng, &nn);
        let g = crate::rng::random_field(&boundary_geometry(&hs), 2, &mut rng, &nn);
        let lambda = Complex64::new(5.0, 3.0);
        let bent = solve_bent(
            &chart,
            &pair,
            (&r, &b),
            lambda,
            &f,
            &g,
            &nn,
            &BentOptions::default(),
        )
        .unwrap();
        let t3 = solve_t3(
            &HalfSpaceProblem { pair: pair.clone(), lambda, f: f.clone(), g: g.clone() },
            &nn,
            HsSchemes::fd(),
        )
        .unwrap();
        let diff = bent.solution.v.sub(&t3.solution.v).linf();
        // a flat chart leaves only roundoff-size corrections
        assert!(diff < 1e-10 * t3.solution.v.linf().max(1.0), "diff {diff}");
        assert!(bent.diagnostics.rho_hat < 1e-8);
    }

    #[test]
    fn sine_profile_matches_dense_oracle() {
        // amplitude 0.05 sine boundary, constant coefficients
        let m_t = 8;
        let m_n = 12;
        let hs = hs_grid(m_t, m_n);
        let amp = 0.05;
        let chart = BentChart::graph(
            hs.clone(),
            &|s| amp * s.sin(),
            &|s| amp * s.cos(),
            &|s| -amp * s.sin(),
        )
        .unwrap();
        assert!(chart.m1_inverse <= amp + 1e-12);
        let mut rng = rng_from_seed(8);
        let nn = DiscreteNorms::default();
        let r = random_spd(2, 0.8, 1.5, &mut rng);
        let b = random_spd(2, 0.8, 1.5, &mut rng);
        let pair = CoefficientPair::constant(r.clone(), b.clone(), 2).unwrap();
        let f = crate::rng::random_field(&hs, 2, &mut rng, &nn);
        let g = crate::rng::random_field(&boundary_geometry(&hs), 2, &mut rng, &nn);
        let lambda = Complex64::from_polar(20.0, PI / 3.0);
        let bent = solve_bent(
            &chart,
            &pair,
            (&r, &b),
            lambda,
            &f,
            &g,
            &nn,
            &BentOptions::default(),
        )
        .unwrap();
        assert!(bent.diagnostics.rho_hat < 0.5, "rho {}", bent.diagnostics.rho_hat);
        assert!(bent.interior_residual_rel < 1e-8);
        assert!(bent.boundary_residual_rel < 1e-8);
        // dense curvilinear oracle: direct solve of the same discrete system
        let (a, n_int, _) = dense_bent_matrix(&chart, &pair, (&r, &b), lambda);
        let mut rhs = nalgebra::DVector::from_element(a.nrows(), Complex64::default());
        for i in 0..n_int {
            rhs[i] = f.data[i];
        }
        for i in n_int..a.nrows() {
            rhs[i] = g.data[i - n_int];
        }
        let x = a.lu().solve(&rhs).unwrap();
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n_int {
            err = err.max((x[i] - bent.solution.v.data[i]).norm());
            scale = scale.max(x[i].norm());
        }
        assert!(err <= 1e-6 * scale.max(1.0), "err {err} scale {scale}");
    }

    #[test]
    fn steep_profile_rejected_or_diverges() {
        let hs = hs_grid(8, 12);
        let amp = 1.0;
        let chart = BentChart::graph(
            hs.clone(),
            &|s| amp * s.sin(),
            &|s| amp * s.cos(),
            &|s| -amp * s.sin(),
        )
        .unwrap();
        let nn = DiscreteNorms::default();
        let pair = CoefficientPair::constant(RMat::identity(2, 2), RMat::identity(2, 2), 2).unwrap();
        let mut rng = rng_from_seed(10);
        let f = crate::rng::random_field(&hs, 2, &mut rng, &nn);
        let g = GridField::zeros(boundary_geometry(&hs), 2);
        let r = solve_bent(
            &chart,
            &pair,
            (
                &RMat::identity(2, 2),
                &RMat::identity(2, 2),
            ),
            Complex64::new(20.0, 0.0),
            &f,
            &g,
            &nn,
            &BentOptions::default(),
        );
        assert!(
            matches!(
                r,
                Err(SolveError::SeriesDiverging { .. })
                    | Err(SolveError::MaxIterExceeded(_))
                    | Err(SolveError::ChartDegenerate(_))
                    | Err(SolveError::CoverTooCoarse(_))
            ),
            "expected failure"
        );
    }

    #[test]
    fn chart_roundtrip_identity() {
        // pull-back by evaluation followed by push-forward is the identity
        let hs = hs_grid(16, 8);
        let chart = BentChart::graph(hs.clone(), &|s| 0.1 * s.sin(), &|s| 0.1 * s.cos(), &|s| {
            -0.1 * s.sin()
        })
        .unwrap();
        let func = |y: &[f64; 2]| Complex64::new(y[0].cos() + y[1], y[1] * y[0].sin());
        // pull back: sample the physical function at mapped points
        let pulled = GridField::from_fn(hs.clone(), 1, |_, x| {
            let p = chart.grid.linear(
                &chart
                    .grid
                    .axes()
                    .iter()
                    .zip(x)
                    .map(|(ax, &xi)| {
                        if ax.periodic {
                            ((xi / ax.h()).round() as usize) % ax.m
                        } else {
                            ((xi / ax.h() - 0.5).round() as usize).min(ax.m - 1)
                        }
                    })
                    .collect::<Vec<_>>(),
            );
            func(&chart.phi[p])
        });
        // push forward: read off the values at the mapped points
        for p in 0..pulled.npoints() {
            let y = chart.phi[p];
            assert!((pulled.at(0, p) - func(&y)).norm() < 1e-10);
        }
    }
}
