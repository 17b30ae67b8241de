//! Coefficient fields: the symmetric matrix pair `R(x)`, `B(x)` with their
//! boundedness constant `M0` and ellipticity constant `m1`, sampled on a
//! grid or constant in space. Matrix entries may be given as expression
//! strings in the spatial variables.

use num_complex::Complex64;

use crate::error::CoeffError;
use crate::grid::Geometry;
use crate::linalg::{symmetric_eigenvalues, RMat};

/// One matrix-valued coefficient field on a grid.
#[derive(Debug, Clone)]
pub enum MatField {
    Constant(RMat),
    /// One n-by-n matrix per grid point, row-major point order.
    Sampled { geom: Geometry, mats: Vec<RMat> },
}

impl MatField {
    pub fn at(&self, lin: usize) -> &RMat {
        match self {
            MatField::Constant(m) => m,
            MatField::Sampled { mats, .. } => &mats[lin],
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, MatField::Constant(_))
    }

    pub fn size(&self) -> usize {
        match self {
            MatField::Constant(m) => m.nrows(),
            MatField::Sampled { mats, .. } => mats[0].nrows(),
        }
    }
}

/// The coefficient pair of a symmetric parabolic system.
#[derive(Debug, Clone)]
pub struct CoefficientPair {
    /// System size (number of equations).
    pub n: usize,
    /// Spatial dimension (1 or 2).
    pub dim: usize,
    pub r_field: MatField,
    pub b_field: MatField,
    /// Uniform bound on the operator norms of `R`, `B`.
    pub m0: f64,
    /// Ellipticity constant.
    pub m1: f64,
    /// Optional Hoelder exponent metadata; validated only by sampling.
    pub sigma: Option<f64>,
    /// Optional gradient-integrability exponent metadata.
    pub r_exp: Option<f64>,
}

const SYM_TOL: f64 = 1e-10;

fn check_symmetric(m: &RMat) -> Result<(), CoeffError> {
    let asym = (m - m.transpose()).abs().max();
    if asym > SYM_TOL {
        return Err(CoeffError::NotSymmetric(asym));
    }
    Ok(())
}

fn min_eig(m: &RMat) -> f64 {
    symmetric_eigenvalues(m)[0]
}

fn op_norm(m: &RMat) -> f64 {
    symmetric_eigenvalues(m)
        .iter()
        .map(|e| e.abs())
        .fold(0.0, f64::max)
}

impl CoefficientPair {
    /// Constant-in-space coefficient pair. `m1` is the smaller of the two
    /// smallest eigenvalues, `M0` the larger of the two operator norms.
    pub fn constant(r_mat: RMat, b_mat: RMat, dim: usize) -> Result<Self, CoeffError> {
        if r_mat.nrows() != b_mat.nrows() {
            return Err(CoeffError::DimensionMismatch(r_mat.nrows(), b_mat.nrows()));
        }
        check_symmetric(&r_mat)?;
        check_symmetric(&b_mat)?;
        let m1 = min_eig(&r_mat).min(min_eig(&b_mat));
        if m1 <= 0.0 {
            return Err(CoeffError::NotElliptic(m1));
        }
        let m0 = op_norm(&r_mat).max(op_norm(&b_mat));
        Ok(Self {
            n: r_mat.nrows(),
            dim,
            r_field: MatField::Constant(r_mat),
            b_field: MatField::Constant(b_mat),
            m0,
            m1,
            sigma: None,
            r_exp: None,
        })
    }

    /// Variable coefficients sampled at every grid point.
    pub fn sampled(
        geom: Geometry,
        r_mats: Vec<RMat>,
        b_mats: Vec<RMat>,
    ) -> Result<Self, CoeffError> {
        assert_eq!(r_mats.len(), geom.npoints());
        assert_eq!(b_mats.len(), geom.npoints());
        let n = r_mats[0].nrows();
        let mut m1 = f64::INFINITY;
        let mut m0: f64 = 0.0;
        for m in r_mats.iter().chain(b_mats.iter()) {
            if m.nrows() != n {
                return Err(CoeffError::DimensionMismatch(n, m.nrows()));
            }
            check_symmetric(m)?;
            m1 = m1.min(min_eig(m));
            m0 = m0.max(op_norm(m));
        }
        if m1 <= 0.0 {
            return Err(CoeffError::NotElliptic(m1));
        }
        let dim = geom.dim();
        Ok(Self {
            n,
            dim,
            r_field: MatField::Sampled { geom: geom.clone(), mats: r_mats },
            b_field: MatField::Sampled { geom, mats: b_mats },
            m0,
            m1,
            sigma: None,
            r_exp: None,
        })
    }

    /// Build variable coefficients from expression strings in the spatial
    /// variables (`x` on 1-D and Cartesian grids; `r`, `t` additionally bind
    /// polar coordinates on the disk; `y` the second Cartesian coordinate).
    pub fn from_exprs(
        geom: Geometry,
        r_exprs: &[Vec<String>],
        b_exprs: &[Vec<String>],
    ) -> Result<Self, CoeffError> {
        let n = r_exprs.len();
        let parse = |rows: &[Vec<String>]| -> Result<Vec<Vec<meval::Expr>>, CoeffError> {
            rows.iter()
                .map(|row| {
                    row.iter()
                        .map(|s| s.parse::<meval::Expr>().map_err(|e| CoeffError::Expr(e.to_string())))
                        .collect()
                })
                .collect()
        };
        let re = parse(r_exprs)?;
        let be = parse(b_exprs)?;
        let npts = geom.npoints();
        let eval_mat = |exprs: &[Vec<meval::Expr>], lin: usize| -> Result<RMat, CoeffError> {
            let idx = geom.multi(lin);
            let coords = geom.coords(&idx);
            let mut ctx = meval::Context::new();
            match &geom {
                Geometry::Disk { .. } => {
                    let (r, th) = (coords[0], coords[1]);
                    ctx.var("r", r).var("t", th);
                    ctx.var("x", r * th.cos()).var("y", r * th.sin());
                }
                _ => {
                    ctx.var("x", coords[0]);
                    if coords.len() > 1 {
                        ctx.var("y", coords[1]);
                    }
                }
            }
            let mut m = RMat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = exprs[i][j]
                        .eval_with_context(&ctx)
                        .map_err(|e| CoeffError::Expr(e.to_string()))?;
                }
            }
            Ok(m)
        };
        let mut r_mats = Vec::with_capacity(npts);
        let mut b_mats = Vec::with_capacity(npts);
        for lin in 0..npts {
            r_mats.push(eval_mat(&re, lin)?);
            b_mats.push(eval_mat(&be, lin)?);
        }
        Self::sampled(geom, r_mats, b_mats)
    }

    pub fn r_at(&self, lin: usize) -> &RMat {
        self.r_field.at(lin)
    }

    pub fn b_at(&self, lin: usize) -> &RMat {
        self.b_field.at(lin)
    }

    pub fn is_constant(&self) -> bool {
        self.r_field.is_constant() && self.b_field.is_constant()
    }

    /// Freeze the coefficients at one grid point, keeping metadata.
    pub fn frozen_at(&self, lin: usize) -> CoefficientPair {
        CoefficientPair {
            n: self.n,
            dim: self.dim,
            r_field: MatField::Constant(self.r_at(lin).clone()),
            b_field: MatField::Constant(self.b_at(lin).clone()),
            m0: self.m0,
            m1: self.m1,
            sigma: self.sigma,
            r_exp: self.r_exp,
        }
    }

    /// Apply the matrix field `R(x)` pointwise to a grid field.
    pub fn apply_r(&self, f: &crate::grid::GridField) -> crate::grid::GridField {
        apply_mat_field(&self.r_field, f)
    }

    /// Apply the matrix field `B(x)` pointwise to a grid field.
    pub fn apply_b(&self, f: &crate::grid::GridField) -> crate::grid::GridField {
        apply_mat_field(&self.b_field, f)
    }
}

/// Pointwise matrix-field action on a vector field.
pub fn apply_mat_field(mf: &MatField, f: &crate::grid::GridField) -> crate::grid::GridField {
    let npts = f.npoints();
    let n = f.n;
    assert_eq!(mf.size(), n);
    let mut out = crate::grid::GridField::zeros(f.geom.clone(), n);
    for p in 0..npts {
        let m = mf.at(p);
        for i in 0..n {
            let mut acc = Complex64::default();
            for j in 0..n {
                acc += m[(i, j)] * f.data[j * npts + p];
            }
            out.data[i * npts + p] = acc;
        }
    }
    out
}

/// Empirical regularity report for a sampled coefficient pair: the largest
/// finite-difference Hoelder quotient `|A(x)-A(y)|/|x-y|^sigma` over nearest
/// neighbours, and the Lr norm of the gradient (both matrices together).
/// These hypotheses constrain admissible inputs, not the algorithms, so the
/// validator only reports the constants.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RegularityReport {
    pub sigma: f64,
    pub r_exp: f64,
    pub hoelder_constant: f64,
    pub grad_lr_norm: f64,
    pub m0: f64,
    pub m1: f64,
}

pub fn validate_regularity(pair: &CoefficientPair, sigma: f64, r_exp: f64) -> RegularityReport {
    let (geom, quotient, grad) = match (&pair.r_field, &pair.b_field) {
        (MatField::Sampled { geom, mats: rm }, MatField::Sampled { mats: bm, .. }) => {
            let axes = geom.axes();
            let shape = geom.shape();
            let mut quot: f64 = 0.0;
            let mut grad_acc = 0.0;
            for lin in 0..geom.npoints() {
                let idx = geom.multi(lin);
                let w = geom.weight(&idx);
                let mut gsq = 0.0;
                for (a, ax) in axes.iter().enumerate() {
                    let mut nb = idx.clone();
                    if idx[a] + 1 < shape[a] {
                        nb[a] = idx[a] + 1;
                    } else if ax.periodic {
                        nb[a] = 0;
                    } else {
                        continue;
                    }
                    let lin2 = geom.linear(&nb);
                    let dx = ax.h();
                    for (m1s, m2s) in [(&rm[lin], &rm[lin2]), (&bm[lin], &bm[lin2])] {
                        let d = (m1s - m2s).abs().max();
                        quot = quot.max(d / dx.powf(sigma));
                        gsq += (d / dx).powi(2);
                    }
                }
                grad_acc += w * gsq.powf(0.5 * r_exp);
            }
            (geom.clone(), quot, grad_acc.powf(1.0 / r_exp))
        }
        _ => (Geometry::interval(0.0, 1.0, 1), 0.0, 0.0),
    };
    let _ = geom;
    RegularityReport {
        sigma,
        r_exp,
        hoelder_constant: quotient,
        grad_lr_norm: grad,
        m0: pair.m0,
        m1: pair.m1,
    }
}

/// Verify the pointwise ellipticity inequality on random complex unit
/// vectors at every stored grid point; returns the worst ratio
/// `Re<A a, conj a> / m1`.
pub fn ellipticity_sample(pair: &CoefficientPair, n_vectors: usize, rng: &mut impl rand::Rng) -> f64 {
    let npts = match &pair.r_field {
        MatField::Constant(_) => 1,
        MatField::Sampled { geom, .. } => geom.npoints(),
    };
    let mut worst = f64::INFINITY;
    for _ in 0..n_vectors {
        let a = crate::rng::random_unit_vector(pair.n, rng);
        for p in 0..npts {
            for m in [pair.r_at(p), pair.b_at(p)] {
                let mut quad = Complex64::default();
                for i in 0..pair.n {
                    for j in 0..pair.n {
                        quad += m[(i, j)] * a[j] * a[i].conj();
                    }
                }
                worst = worst.min(quad.re / pair.m1);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn dmat(d: &[f64]) -> RMat {
        RMat::from_diagonal(&nalgebra::DVector::from_vec(d.to_vec()))
    }

    #[test]
    fn identity_pair() {
        let p = CoefficientPair::constant(RMat::identity(2, 2), RMat::identity(2, 2), 1).unwrap();
        assert!((p.m1 - 1.0).abs() < 1e-14);
        assert!((p.m0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_pair_eigenvalues_read_off() {
        let p = CoefficientPair::constant(dmat(&[2.0, 3.0]), dmat(&[1.0, 5.0]), 1).unwrap();
        assert!((p.m1 - 1.0).abs() < 1e-14);
        assert!((p.m0 - 5.0).abs() < 1e-14);
    }

    #[test]
    fn random_spd_matches_eigensolver_oracle() {
        let mut rng = rng_from_seed(5);
        let r = crate::rng::random_spd(3, 0.5, 4.0, &mut rng);
        let b = crate::rng::random_spd(3, 0.5, 4.0, &mut rng);
        let p = CoefficientPair::constant(r.clone(), b.clone(), 2).unwrap();
        // dense eigensolver oracle
        let want = symmetric_eigenvalues(&r)[0].min(symmetric_eigenvalues(&b)[0]);
        assert!((p.m1 - want).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_rejected() {
        let mut m = RMat::identity(2, 2);
        m[(0, 1)] = 1e-3;
        assert!(matches!(
            CoefficientPair::constant(m, RMat::identity(2, 2), 1),
            Err(CoeffError::NotSymmetric(_))
        ));
    }

    #[test]
    fn indefinite_rejected() {
        let m = dmat(&[1.0, -0.5]);
        assert!(matches!(
            CoefficientPair::constant(m, RMat::identity(2, 2), 1),
            Err(CoeffError::NotElliptic(_))
        ));
    }

    #[test]
    fn expr_fields_evaluate() {
        let geom = Geometry::interval(0.0, 1.0, 8);
        let p = CoefficientPair::from_exprs(
            geom.clone(),
            &[vec!["1".into()]],
            &[vec!["1 + 0.1*sin(x)".into()]],
        )
        .unwrap();
        let lin = 3;
        let x = geom.coords(&geom.multi(lin))[0];
        assert!((p.b_at(lin)[(0, 0)] - (1.0 + 0.1 * x.sin())).abs() < 1e-14);
        assert!(p.m1 > 0.8);
    }

    #[test]
    fn ellipticity_sampling_bound() {
        let mut rng = rng_from_seed(9);
        let r = crate::rng::random_spd(3, 1.0, 2.0, &mut rng);
        let b = crate::rng::random_spd(3, 1.0, 2.0, &mut rng);
        let p = CoefficientPair::constant(r, b, 2).unwrap();
        let worst = ellipticity_sample(&p, 1000, &mut rng);
        assert!(worst >= 1.0 - 1e-10);
    }
}
