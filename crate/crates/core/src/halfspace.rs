//! Half-space solvers: the even-reflection solver `T2(lambda)` for
//! homogeneous flux data, the exponential boundary corrector, the composed
//! inhomogeneous solver `T3(lambda)`, and the bent-half-space solver
//! `T+(lambda)` for chart-mapped boundaries.
//!
//! The normal axis is cell-centered with the physical boundary at depth 0,
//! so even reflection about the boundary face is a pure index mirror. Two
//! normal representations are supported: exact spectral symbols on the
//! reflected box with the continuous exponential corrector kernel, and
//! second-order centered-difference symbols with the matching discrete
//! (recurrence-root) kernel. In either representation the solver inverts
//! its own discrete system to machine precision; residuals are measured in
//! that representation.

use num_complex::Complex64;
use crate::coeff::CoefficientPair;
use crate::error::{Result, SolveError};
use crate::fft::{fft_axis, wavenumber, DiffScheme};
use crate::grid::{AxisSpec, Geometry, GridField};
use crate::norms::{norm, DiscreteNorms, NormKind};
use crate::wholespace::{
    apply_constant_op, multiplier_solve, scaled_norms, ResolventSolution, SeriesVec,
};

/// Differentiation schemes of a half-space solve: tangential axes and the
/// normal axis may use different representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HsSchemes {
    pub tang: DiffScheme,
    pub normal: DiffScheme,
}

impl HsSchemes {
    pub fn spectral() -> Self {
        Self { tang: DiffScheme::Spectral, normal: DiffScheme::Spectral }
    }
    pub fn fd() -> Self {
        Self { tang: DiffScheme::Spectral, normal: DiffScheme::Centered2 }
    }
}

/// The half-space resolvent problem with flux boundary data.
#[derive(Debug, Clone)]
pub struct HalfSpaceProblem {
    /// Constant coefficients (values frozen at a boundary point).
    pub pair: CoefficientPair,
    pub lambda: Complex64,
    /// Right-hand side on the half-space grid.
    pub f: GridField,
    /// Boundary data on the tangential grid (no normal extent).
    pub g: GridField,
}

/// Tangential (boundary) geometry of a half-space grid.
pub fn boundary_geometry(hs: &Geometry) -> Geometry {
    match hs {
        Geometry::HalfSpace { tangential, .. } => {
            Geometry::PeriodicBox { axes: tangential.clone() }
        }
        _ => panic!("boundary_geometry requires a half-space grid"),
    }
}

fn normal_axis(hs: &Geometry) -> AxisSpec {
    let axes = hs.axes();
    *axes.last().unwrap()
}

/// Even extension across the boundary face: the doubled periodic box with
/// mirror values `f_ext[2m-1-i] = f[i]` (even about both faces).
pub fn even_extend(f: &GridField) -> GridField {
    let (tangential, depth, m_normal) = match &f.geom {
        Geometry::HalfSpace { tangential, depth, m_normal } => {
            (tangential.clone(), *depth, *m_normal)
        }
        _ => panic!("even_extend requires a half-space field"),
    };
    let mut axes = tangential;
    axes.push(AxisSpec::periodic(2.0 * depth, 2 * m_normal));
    let ext_geom = Geometry::PeriodicBox { axes };
    let mut out = GridField::zeros(ext_geom, f.n);
    let npts_in = f.npoints();
    let npts_out = out.npoints();
    let m = m_normal;
    for c in 0..f.n {
        for p in 0..npts_in {
            let t = p / m; // tangential block
            let i = p % m;
            let v = f.data[c * npts_in + p];
            out.data[c * npts_out + t * (2 * m) + i] = v;
            out.data[c * npts_out + t * (2 * m) + (2 * m - 1 - i)] = v;
        }
    }
    out
}

/// Restriction of a doubled-box field to the physical half grid.
pub fn restrict(ext: &GridField, hs: &Geometry) -> GridField {
    let m = normal_axis(hs).m;
    let mut out = GridField::zeros(hs.clone(), ext.n);
    let npts_in = ext.npoints();
    let npts_out = out.npoints();
    for c in 0..ext.n {
        for p in 0..npts_out {
            let t = p / m;
            let i = p % m;
            out.data[c * npts_out + p] = ext.data[c * npts_in + t * (2 * m) + i];
        }
    }
    out
}

/// Norm of the odd part of a doubled-box field (exactly zero for fields
/// produced by the reflection solver).
pub fn odd_part_linf(ext: &GridField) -> f64 {
    let shape = ext.geom.shape();
    let m2 = *shape.last().unwrap();
    let npts = ext.npoints();
    let mut worst: f64 = 0.0;
    for c in 0..ext.n {
        for p in 0..npts {
            let t = p / m2;
            let i = p % m2;
            let q = t * m2 + (m2 - 1 - i);
            worst = worst.max((ext.data[c * npts + p] - ext.data[c * npts + q]).norm() * 0.5);
        }
    }
    worst
}

/// Evaluate a trace of the normal-spectral interpolant of a doubled-box
/// field at the physical boundary `x_N = 0`: derivative of given order,
/// accounting for the half-cell sample offset.
pub fn spectral_boundary_trace(ext: &GridField, order: usize) -> GridField {
    let axes = ext.geom.axes();
    let shape = ext.geom.shape();
    let nt = axes.len() - 1;
    let m2 = shape[nt];
    let ax = axes[nt];
    let h = ax.h();
    let bgeom = Geometry::PeriodicBox { axes: axes[..nt].to_vec() };
    let mut out = GridField::zeros(bgeom, ext.n);
    let bpts = out.npoints();
    for c in 0..ext.n {
        let mut hat: Vec<Complex64> = ext.component(c).to_vec();
        fft_axis(&mut hat, &shape, nt, false);
        for t in 0..bpts {
            let mut acc = Complex64::default();
            for j in 0..m2 {
                let k = wavenumber(j, m2, ax.len);
                // physical x = 0 sits half a cell before sample index 0
                let phase = (-Complex64::i() * k * (0.5 * h)).exp();
                let dsym = (Complex64::i() * k).powu(order as u32);
                acc += hat[t * m2 + j] * dsym * phase / (m2 as f64);
            }
            out.data[c * bpts + t] = acc;
        }
    }
    out
}

/// Discrete boundary flux derivative `(v_0 - v_ghost)/h` of a doubled-box
/// field, with the ghost taken from the mirror cell.
pub fn fd_boundary_trace_d1(ext: &GridField) -> GridField {
    let axes = ext.geom.axes();
    let shape = ext.geom.shape();
    let nt = axes.len() - 1;
    let m2 = shape[nt];
    let h = axes[nt].h();
    let bgeom = Geometry::PeriodicBox { axes: axes[..nt].to_vec() };
    let mut out = GridField::zeros(bgeom, ext.n);
    let npts = ext.npoints();
    let bpts = out.npoints();
    for c in 0..ext.n {
        for t in 0..bpts {
            let v0 = ext.data[c * npts + t * m2];
            let ghost = ext.data[c * npts + t * m2 + (m2 - 1)];
            out.data[c * bpts + t] = (v0 - ghost) / h;
        }
    }
    out
}

/// Mass fraction of a half-space field in the deepest two cells (far-field
/// contamination of the artificial closure).
pub fn far_field_mass(v: &GridField) -> f64 {
    let m = normal_axis(&v.geom).m;
    let npts = v.npoints();
    let mut far = 0.0;
    let mut total = 0.0;
    for c in 0..v.n {
        for p in 0..npts {
            let i = p % m;
            let mag = v.data[c * npts + p].norm_sqr();
            total += mag;
            if i + 2 >= m {
                far += mag;
            }
        }
    }
    (far / total.max(1e-300)).sqrt()
}

/// Result of an even-reflection solve.
#[derive(Debug, Clone)]
pub struct T2Solution {
    pub solution: ResolventSolution,
    /// Relative norm of the discrete normal derivative at the boundary.
    pub neumann_trace_rel: f64,
    pub far_field_mass: f64,
    /// Largest deviation of the reflected solution from even symmetry.
    pub odd_part: f64,
}

fn check_lambda(lambda: Complex64) -> Result<()> {
    if lambda.norm() == 0.0 || (lambda.im == 0.0 && lambda.re < 0.0) {
        return Err(SolveError::SectorViolation(lambda));
    }
    Ok(())
}

/// Homogeneous-flux half-space solve by even reflection: extend the data
/// evenly, solve on the doubled periodic box, restrict. The reflected
/// solution is even, so its normal derivative vanishes at the boundary.
pub fn solve_t2(
    prob: &HalfSpaceProblem,
    nn: &DiscreteNorms,
    schemes: HsSchemes,
) -> Result<T2Solution> {
    check_lambda(prob.lambda)?;
    let g_norm = prob.g.linf();
    let f_scale = prob.f.linf().max(1e-300);
    if g_norm > 1e-13 * f_scale.max(1.0) {
        return Err(SolveError::NonzeroBoundaryData);
    }
    let r_mat = prob.pair.r_at(0).clone();
    let b_mat = prob.pair.b_at(0).clone();
    let ext = even_extend(&prob.f);
    let n_ax = ext.geom.axes().len();
    let mut ax_schemes = vec![schemes.tang; n_ax];
    ax_schemes[n_ax - 1] = schemes.normal;
    let vext = multiplier_solve(&r_mat, &b_mat, prob.lambda, &ext, &ax_schemes)?;
    let v = restrict(&vext, &prob.f.geom);
    // residual in the solver's representation
    let resid_ext = apply_constant_op(&r_mat, &b_mat, prob.lambda, &vext, &ax_schemes).sub(&ext);
    let resid = restrict(&resid_ext, &prob.f.geom);
    let fnorm = norm(&prob.f, NormKind::Lq, nn).max(1e-300);
    // boundary trace of the normal derivative
    let trace = match schemes.normal {
        DiffScheme::Spectral => spectral_boundary_trace(&vext, 1),
        DiffScheme::Centered2 => fd_boundary_trace_d1(&vext),
    };
    let h2 = norm(&v, NormKind::H2q, nn).max(1e-300);
    Ok(T2Solution {
        neumann_trace_rel: norm(&trace, NormKind::Lq, nn) / h2,
        far_field_mass: far_field_mass(&v),
        odd_part: odd_part_linf(&vext),
        solution: ResolventSolution {
            norms_report: scaled_norms(&v, prob.lambda, nn),
            residual_rel: norm(&resid, NormKind::Lq, nn) / fnorm,
            v,
            lambda: prob.lambda,
        },
    })
}

/// The boundary corrector field with its per-mode kernel data.
#[derive(Debug, Clone)]
pub struct CorrectorField {
    pub w: GridField,
    /// Normal derivative at the boundary (equals `-h` by construction).
    pub dn_trace: GridField,
    /// Largest kernel magnitude at the far face, relative.
    pub far_decay: f64,
    pub min_re_omega: f64,
}

/// Solve `lambda w - Delta w = 0`, `d_N w = -h` on the boundary, by the
/// per-tangential-mode kernel: continuous `e^{-omega x_N}/omega` in the
/// spectral representation, the `|r| < 1` recurrence root in the
/// finite-difference representation.
pub fn solve_corrector(
    lambda: Complex64,
    h_trace: &GridField,
    hs: &Geometry,
    schemes: HsSchemes,
) -> Result<CorrectorField> {
    check_lambda(lambda)?;
    let ax_n = normal_axis(hs);
    let (m, h, _depth) = (ax_n.m, ax_n.h(), ax_n.len);
    let bgeom = boundary_geometry(hs);
    let bshape = bgeom.shape();
    let baxes = bgeom.axes();
    let bpts = bgeom.npoints();
    let n = h_trace.n;
    assert_eq!(h_trace.geom, bgeom, "corrector data must live on the boundary grid");
    // tangential transform of the boundary data
    let mut hat: Vec<Vec<Complex64>> = (0..n).map(|c| h_trace.component(c).to_vec()).collect();
    for comp in &mut hat {
        for a in 0..baxes.len() {
            fft_axis(comp, &bshape, a, false);
        }
    }
    let mut w = GridField::zeros(hs.clone(), n);
    let wpts = w.npoints();
    let mut far_decay: f64 = 0.0;
    let mut min_re_omega = f64::INFINITY;
    // per tangential mode: kernel values at cell centers
    let mut kernel = vec![Complex64::default(); m];
    for t in 0..bpts {
        let idx = bgeom.multi(t);
        let mut xi_sq = 0.0;
        for (a, ax) in baxes.iter().enumerate() {
            let k = wavenumber(idx[a], ax.m, ax.len);
            xi_sq += schemes.tang.xi_sq(k, ax.h());
        }
        let mu = lambda + Complex64::new(xi_sq, 0.0);
        match schemes.normal {
            DiffScheme::Spectral => {
                let omega = mu.sqrt();
                let omega = if omega.re < 0.0 { -omega } else { omega };
                if omega.re <= 0.0 {
                    return Err(SolveError::BranchCutHit);
                }
                min_re_omega = min_re_omega.min(omega.re);
                for i in 0..m {
                    let x = (i as f64 + 0.5) * h;
                    kernel[i] = (-omega * x).exp() / omega;
                }
                far_decay = far_decay.max((-omega.re * (m as f64) * h).exp());
            }
            DiffScheme::Centered2 => {
                // r^2 - (2 + h^2 mu) r + 1 = 0, |r| < 1 branch
                let bq = Complex64::new(2.0, 0.0) + mu * h * h;
                let disc = (bq * bq - Complex64::new(4.0, 0.0)).sqrt();
                let r1 = (bq + disc) / 2.0;
                let r2 = (bq - disc) / 2.0;
                let r = if r1.norm() < r2.norm() { r1 } else { r2 };
                if (r.norm() - 1.0).abs() < 1e-13 {
                    return Err(SolveError::BranchCutHit);
                }
                min_re_omega = min_re_omega.min(-r.norm().ln() / h);
                // kernel = c1 r^i + c2 r^{m-1-i}: the decaying root plus its
                // mirror image, closing the far face with the even ghost so
                // the kernel solves the truncated slab system exactly.
                // Unit flux at the boundary face, zero flux at the far face:
                let one = Complex64::new(1.0, 0.0);
                let h2 = Complex64::new(h * h, 0.0);
                let rm1 = r.powu(m as u32 - 1);
                let a11 = mu - (r - one) / h2;
                let a12 = mu * rm1 - (rm1 / r - rm1) / h2;
                let a21 = mu * rm1 + (rm1 - rm1 / r) / h2;
                let a22 = mu + (one - r) / h2;
                let det = a11 * a22 - a12 * a21;
                let rhs0 = one / h;
                let c1 = a22 * rhs0 / det;
                let c2 = -a21 * rhs0 / det;
                for i in 0..m {
                    kernel[i] = c1 * r.powu(i as u32) + c2 * r.powu((m - 1 - i) as u32);
                }
                far_decay = far_decay.max(r.norm().powi(m as i32));
            }
        }
        for c in 0..n {
            let amp = hat[c][t];
            for i in 0..m {
                w.data[c * wpts + t * m + i] = amp * kernel[i];
            }
        }
    }
    // inverse tangential transform on every depth layer
    let wshape = w.geom.shape();
    for c in 0..n {
        let mut comp: Vec<Complex64> = w.component(c).to_vec();
        for a in 0..baxes.len() {
            fft_axis(&mut comp, &wshape, a, true);
        }
        w.data[c * wpts..(c + 1) * wpts].copy_from_slice(&comp);
    }
    let dn_trace = h_trace.scaled(Complex64::new(-1.0, 0.0));
    Ok(CorrectorField { w, dn_trace, far_decay, min_re_omega })
}

/// Even-reflection solve without diagnostics: extend, invert, restrict.
pub fn solve_t2_raw(
    pair: &CoefficientPair,
    lambda: Complex64,
    f: &GridField,
    schemes: HsSchemes,
) -> Result<GridField> {
    check_lambda(lambda)?;
    let r_mat = pair.r_at(0);
    let b_mat = pair.b_at(0);
    let ext = even_extend(f);
    let n_ax = ext.geom.axes().len();
    let mut ax_schemes = vec![schemes.tang; n_ax];
    ax_schemes[n_ax - 1] = schemes.normal;
    let vext = multiplier_solve(r_mat, b_mat, lambda, &ext, &ax_schemes)?;
    Ok(restrict(&vext, &f.geom))
}

/// Composed inhomogeneous solve without diagnostics.
pub fn solve_t3_raw(
    prob: &HalfSpaceProblem,
    schemes: HsSchemes,
) -> Result<GridField> {
    check_lambda(prob.lambda)?;
    let r_mat = prob.pair.r_at(0).clone();
    let b_mat = prob.pair.b_at(0).clone();
    let n = prob.pair.n;
    let b_inv = b_mat.clone().try_inverse().expect("B is SPD, hence invertible");
    let bpts = prob.g.npoints();
    let mut h_trace = GridField::zeros(prob.g.geom.clone(), n);
    for p in 0..bpts {
        for i in 0..n {
            let mut acc = Complex64::default();
            for j in 0..n {
                acc += b_inv[(i, j)] * prob.g.data[j * bpts + p];
            }
            h_trace.data[i * bpts + p] = acc;
        }
    }
    let corr = solve_corrector(prob.lambda, &h_trace, &prob.f.geom, schemes)?;
    let wpts = corr.w.npoints();
    let rb = &r_mat - &b_mat;
    let mut f_corr = prob.f.clone();
    for p in 0..wpts {
        for i in 0..n {
            let mut acc = Complex64::default();
            for j in 0..n {
                acc += rb[(i, j)] * corr.w.data[j * wpts + p];
            }
            f_corr.data[i * wpts + p] -= prob.lambda * acc;
        }
    }
    let v2 = solve_t2_raw(&prob.pair, prob.lambda, &f_corr, schemes)?;
    Ok(v2.add(&corr.w))
}

/// Result of the composed inhomogeneous solve.
#[derive(Debug, Clone)]
pub struct T3Solution {
    pub solution: ResolventSolution,
    /// `||B (grad v . n0) - g|| / ||(f, g)||` on the boundary grid.
    pub boundary_residual_rel: f64,
    pub far_field_mass: f64,
    pub corrector_min_re_omega: f64,
}

/// Combined data norm `||f||_Lq + ||g||_H1q`.
pub fn xq_norm(f: &GridField, g: &GridField, nn: &DiscreteNorms) -> f64 {
    norm(f, NormKind::Lq, nn) + norm(g, NormKind::H1q, nn)
}

/// Full inhomogeneous half-space solve: corrector absorbs the boundary
/// data (`h = (B^1)^{-1} g`), the even-reflection solver handles the
/// corrected interior load `f - (lambda R^1 w - div(B^1 grad w))`, which by
/// the corrector equation reduces to `f - lambda (R^1 - B^1) w`.
pub fn solve_t3(
    prob: &HalfSpaceProblem,
    nn: &DiscreteNorms,
    schemes: HsSchemes,
) -> Result<T3Solution> {
    check_lambda(prob.lambda)?;
    let r_mat = prob.pair.r_at(0).clone();
    let b_mat = prob.pair.b_at(0).clone();
    let n = prob.pair.n;
    // h = (B^1)^{-1} g componentwise per boundary point
    let b_inv = b_mat
        .clone()
        .try_inverse()
        .expect("B is SPD, hence invertible");
    let bpts = prob.g.npoints();
    let mut h_trace = GridField::zeros(prob.g.geom.clone(), n);
    for p in 0..bpts {
        for i in 0..n {
            let mut acc = Complex64::default();
            for j in 0..n {
                acc += b_inv[(i, j)] * prob.g.data[j * bpts + p];
            }
            h_trace.data[i * bpts + p] = acc;
        }
    }
    let corr = solve_corrector(prob.lambda, &h_trace, &prob.f.geom, schemes)?;
    // F = lambda (R - B) w, exact in the kernel representation
    let mut load = GridField::zeros(prob.f.geom.clone(), n);
    let wpts = corr.w.npoints();
    let rb = &r_mat - &b_mat;
    for p in 0..wpts {
        for i in 0..n {
            let mut acc = Complex64::default();
            for j in 0..n {
                acc += rb[(i, j)] * corr.w.data[j * wpts + p];
            }
            load.data[i * wpts + p] = prob.lambda * acc;
        }
    }
    let f_corr = prob.f.sub(&load);
    let hom = HalfSpaceProblem {
        pair: prob.pair.clone(),
        lambda: prob.lambda,
        f: f_corr,
        g: GridField::zeros(prob.g.geom.clone(), n),
    };
    let t2 = solve_t2(&hom, nn, schemes)?;
    let v = t2.solution.v.add(&corr.w);
    // interior residual: T2 part exact in its representation, corrector
    // part exact in the kernel representation; combine the leftovers
    let data_norm = xq_norm(&prob.f, &prob.g, nn).max(1e-300);
    let interior_residual = t2.solution.residual_rel
        * norm(&hom.f, NormKind::Lq, nn)
        / data_norm;
    // boundary residual: B (grad v . n0) - g = -B dn(v) - g
    let dn_t2 = match schemes.normal {
        DiffScheme::Spectral => spectral_boundary_trace(&even_extend(&t2.solution.v), 1),
        DiffScheme::Centered2 => fd_boundary_trace_d1(&even_extend(&t2.solution.v)),
    };
    let dn_total = dn_t2.add(&corr.dn_trace);
    let mut bres = GridField::zeros(prob.g.geom.clone(), n);
    for p in 0..bpts {
        for i in 0..n {
            let mut acc = Complex64::default();
            for j in 0..n {
                acc += b_mat[(i, j)] * dn_total.data[j * bpts + p];
            }
            bres.data[i * bpts + p] = -acc - prob.g.data[i * bpts + p];
        }
    }
    Ok(T3Solution {
        boundary_residual_rel: norm(&bres, NormKind::Lq, nn) / data_norm,
        far_field_mass: far_field_mass(&v),
        corrector_min_re_omega: corr.min_re_omega,
        solution: ResolventSolution {
            norms_report: scaled_norms(&v, prob.lambda, nn),
            residual_rel: interior_residual,
            v,
            lambda: prob.lambda,
        },
    })
}

/// An `(interior, boundary)` data pair, the vector space the bent-solver
/// fixed point runs in.
#[derive(Debug, Clone)]
pub struct PairField {
    pub f: GridField,
    pub g: GridField,
}

impl SeriesVec for PairField {
    fn axpy_vec(&mut self, a: Complex64, x: &Self) {
        self.f.axpy(a, &x.f);
        self.g.axpy(a, &x.g);
    }
    fn scaled_vec(&self, a: Complex64) -> Self {
        PairField { f: self.f.scaled(a), g: self.g.scaled(a) }
    }
}
