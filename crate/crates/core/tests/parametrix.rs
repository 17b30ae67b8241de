//! Parametrix assembly against direct discrete solves on bounded domains.

use num_complex::Complex64;
use std::f64::consts::PI;

use maxreg_core::coeff::CoefficientPair;
use maxreg_core::error::SolveError;
use maxreg_core::grid::GridField;
use maxreg_core::linalg::RMat;
use maxreg_core::localization::{
    assemble_and_solve, build_cover, AssembleOptions, CoverOptions, Domain, GlobalOp, PatchKind,
};
use maxreg_core::norms::{norm, DiscreteNorms, NormKind};
use maxreg_core::rng::{random_field, random_smooth_field, random_spd, rng_from_seed};

fn ident_pair_on(domain: &Domain, n: usize) -> CoefficientPair {
    let geom = domain.geometry();
    let mats = vec![RMat::identity(n, n); geom.npoints()];
    CoefficientPair::sampled(geom, mats.clone(), mats).unwrap()
}

#[test]
fn interval_cover_matches_expected_patch_counts() {
    let domain = Domain::Interval { a: 0.0, b: 1.0, m: 200 };
    let cover = build_cover(&domain, 0.3, &CoverOptions::default()).unwrap();
    let n_boundary = cover.patches.iter().filter(|p| p.kind == PatchKind::Boundary).count();
    let n_interior = cover.patches.iter().filter(|p| p.kind == PatchKind::Interior).count();
    assert_eq!(n_boundary, 2);
    assert_eq!(n_interior, 1);
    // partition of unity at all 200 grid points (checked in build, re-check)
    let npts = domain.geometry().npoints();
    for p in 0..npts {
        let s: f64 = cover.patches.iter().map(|pa| pa.zeta[p]).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }
}

#[test]
fn gradient_identity_of_partition() {
    // sum zeta = 1 implies sum of derivative samples vanishes
    let domain = Domain::Interval { a: 0.0, b: 2.0, m: 128 };
    let cover = build_cover(&domain, 0.3, &CoverOptions::default()).unwrap();
    let geom = domain.geometry();
    let mut total = GridField::zeros(geom.clone(), 1);
    for patch in &cover.patches {
        let mut z = GridField::zeros(geom.clone(), 1);
        for p in 0..geom.npoints() {
            z.data[p] = Complex64::new(patch.zeta[p], 0.0);
        }
        let dz = maxreg_core::norms::derivative(&z, 0, 1, maxreg_core::fft::DiffScheme::Centered2);
        total.axpy(Complex64::new(1.0, 0.0), &dz);
    }
    assert!(total.linf() < 1e-9, "{}", total.linf());
}

#[test]
fn disk_cover_valid_and_bounded_overlap() {
    let domain = Domain::Disk { radius: 1.0, m_r: 32, m_theta: 32 };
    let cover = build_cover(&domain, 0.45, &CoverOptions::default()).unwrap();
    assert!(cover.patches.iter().any(|p| p.kind == PatchKind::Core));
    assert!(cover.patches.iter().any(|p| p.kind == PatchKind::Boundary));
    assert!(cover.overlap_bound <= 8, "overlap {}", cover.overlap_bound);
}

#[test]
fn periodic_single_patch_reduces_to_direct() {
    let domain = Domain::Periodic { lens: vec![2.0 * PI], ms: vec![64] };
    let pair = ident_pair_on(&domain, 1);
    let cover = build_cover(&domain, 0.3, &CoverOptions::default()).unwrap();
    assert_eq!(cover.patches.len(), 1);
    let nn = DiscreteNorms::default();
    let mut rng = rng_from_seed(2);
    let f = random_field(&domain.geometry(), 1, &mut rng, &nn);
    let lambda = Complex64::new(4.0, 1.0);
    let sol = assemble_and_solve(&cover, &pair, lambda, &f, None, &nn, &AssembleOptions::default())
        .unwrap();
    assert_eq!(sol.diagnostics.outer.iterations, 1);
    let direct = GlobalOp::new(&domain, &pair, lambda).direct_solve(&f, None);
    assert!(sol.solution.v.sub(&direct).linf() < 1e-10);
}

#[test]
fn interval_constant_coefficients_matches_direct() {
    // n=1, R=B=1, f=1, g=0, lambda=10
    let domain = Domain::Interval { a: 0.0, b: 1.0, m: 64 };
    let pair = ident_pair_on(&domain, 1);
    let cover = build_cover(&domain, 0.22, &CoverOptions::default()).unwrap();
    let nn = DiscreteNorms::default();
    let geom = domain.geometry();
    let f = GridField::from_fn(geom.clone(), 1, |_, _| Complex64::new(1.0, 0.0));
    let g = GridField::zeros(domain.boundary_geometry().unwrap(), 1);
    let lambda = Complex64::new(10.0, 0.0);
    let sol = assemble_and_solve(
        &cover,
        &pair,
        lambda,
        &f,
        Some(&g),
        &nn,
        &AssembleOptions::default(),
    )
    .unwrap();
    let direct = GlobalOp::new(&domain, &pair, lambda).direct_solve(&f, Some(&g));
    let err = sol.solution.v.sub(&direct).linf();
    assert!(err < 1e-8, "err {err}");
    assert!(sol.solution.residual_rel < 1e-7);
}

#[test]
fn interval_with_boundary_data_and_variable_coefficients() {
    let domain = Domain::Interval { a: 0.0, b: 1.0, m: 96 };
    let geom = domain.geometry();
    let pair = CoefficientPair::from_exprs(
        geom.clone(),
        &[vec!["1 + 0.03*cos(2*pi*x)".to_string()]],
        &[vec!["1 + 0.05*sin(2*pi*x)".to_string()]],
    )
    .unwrap();
    let cover = build_cover(&domain, 0.3, &CoverOptions::default()).unwrap();
    let nn = DiscreteNorms::default();
    let mut rng = rng_from_seed(7);
    let f = random_field(&geom, 1, &mut rng, &nn);
    let mut g = GridField::zeros(domain.boundary_geometry().unwrap(), 1);
    g.data[0] = Complex64::new(0.4, -0.3);
    g.data[1] = Complex64::new(-0.2, 0.6);
    let lambda = Complex64::from_polar(100.0, 2.0 * PI / 3.0);
    let sol = assemble_and_solve(
        &cover,
        &pair,
        lambda,
        &f,
        Some(&g),
        &nn,
        &AssembleOptions::default(),
    )
    .unwrap();
    assert!(sol.diagnostics.outer.rho_hat < 0.5, "rho {}", sol.diagnostics.outer.rho_hat);
    let direct = GlobalOp::new(&domain, &pair, lambda).direct_solve(&f, Some(&g));
    let scale = direct.linf().max(1e-12);
    let err = sol.solution.v.sub(&direct).linf() / scale;
    assert!(err < 1e-6, "relative err {err}");
}

#[test]
fn interval_systems_with_spd_coefficients() {
    let domain = Domain::Interval { a: 0.0, b: 1.0, m: 64 };
    let geom = domain.geometry();
    let mut rng = rng_from_seed(11);
    let r0 = random_spd(2, 0.8, 1.6, &mut rng);
    let b0 = random_spd(2, 0.8, 1.6, &mut rng);
    // mild smooth variation on top of constant SPD matrices
    let npts = geom.npoints();
    let mut r_mats = Vec::with_capacity(npts);
    let mut b_mats = Vec::with_capacity(npts);
    for p in 0..npts {
        let x = geom.coords(&geom.multi(p))[0];
        let bump = 0.04 * (2.0 * PI * x).sin();
        r_mats.push(&r0 * (1.0 + 0.5 * bump));
        b_mats.push(&b0 * (1.0 + bump));
    }
    let pair = CoefficientPair::sampled(geom.clone(), r_mats, b_mats).unwrap();
    let cover = build_cover(&domain, 0.3, &CoverOptions::default()).unwrap();
    let nn = DiscreteNorms::default();
    let f = random_field(&geom, 2, &mut rng, &nn);
    let g = random_smooth_field(&domain.boundary_geometry().unwrap(), 2, &mut rng, &nn, 0.5);
    let lambda = Complex64::from_polar(60.0, PI / 3.0);
    let sol = assemble_and_solve(
        &cover,
        &pair,
        lambda,
        &f,
        Some(&g),
        &nn,
        &AssembleOptions::default(),
    )
    .unwrap();
    let direct = GlobalOp::new(&domain, &pair, lambda).direct_solve(&f, Some(&g));
    let num = norm(&sol.solution.v.sub(&direct), NormKind::Lq, &nn);
    let den = norm(&direct, NormKind::Lq, &nn).max(1e-12);
    assert!(num / den < 1e-6, "rel {}", num / den);
    assert!(sol.diagnostics.outer.rho_hat < 0.5);
}

#[test]
fn disk_constant_coefficients_matches_direct() {
    let domain = Domain::Disk { radius: 1.0, m_r: 32, m_theta: 32 };
    let pair = ident_pair_on(&domain, 1);
    let cover = build_cover(&domain, 0.4, &CoverOptions::default()).unwrap();
    let nn = DiscreteNorms::default();
    let geom = domain.geometry();
    let mut rng = rng_from_seed(3);
    let f = random_field(&geom, 1, &mut rng, &nn);
    let g = random_smooth_field(&domain.boundary_geometry().unwrap(), 1, &mut rng, &nn, 0.4);
    let lambda = Complex64::from_polar(150.0, PI / 3.0);
    let sol = assemble_and_solve(
        &cover,
        &pair,
        lambda,
        &f,
        Some(&g),
        &nn,
        &AssembleOptions::default(),
    )
    .unwrap();
    let direct = GlobalOp::new(&domain, &pair, lambda).direct_solve(&f, Some(&g));
    let num = norm(&sol.solution.v.sub(&direct), NormKind::Lq, &nn);
    let den = norm(&direct, NormKind::Lq, &nn).max(1e-12);
    assert!(num / den < 1e-6, "rel {}", num / den);
    assert!(sol.diagnostics.outer.rho_hat < 0.5, "rho {}", sol.diagnostics.outer.rho_hat);
}

#[test]
fn correction_norm_decays_along_a_ray() {
    // the first correction shrinks as |lambda| grows along a sector ray
    let domain = Domain::Interval { a: 0.0, b: 1.0, m: 64 };
    let geom = domain.geometry();
    let pair = CoefficientPair::from_exprs(
        geom.clone(),
        &[vec!["1".to_string()]],
        &[vec!["1 + 0.05*sin(2*pi*x)".to_string()]],
    )
    .unwrap();
    let cover = build_cover(&domain, 0.2, &CoverOptions::default()).unwrap();
    let nn = DiscreteNorms::default();
    let mut rng = rng_from_seed(5);
    let f = random_field(&geom, 1, &mut rng, &nn);
    let mut prev = f64::INFINITY;
    for i in 0..5 {
        let lam = 20.0 * 3f64.powi(i);
        let sol = assemble_and_solve(
            &cover,
            &pair,
            Complex64::from_polar(lam, PI / 4.0),
            &f,
            None,
            &nn,
            &AssembleOptions::default(),
        )
        .unwrap();
        // first-step correction norm relative to the data
        let first = sol.diagnostics.outer.step_norms[1] / sol.diagnostics.outer.step_norms[0];
        assert!(first <= prev * 1.1, "correction grew: {first} after {prev}");
        prev = prev.min(first);
    }
}

#[test]
fn divergence_flagged_for_tiny_lambda0() {
    // far below the contraction threshold the series must flag divergence
    let domain = Domain::Interval { a: 0.0, b: 1.0, m: 48 };
    let geom = domain.geometry();
    let pair = CoefficientPair::from_exprs(
        geom.clone(),
        &[vec!["1".to_string()]],
        &[vec!["1 + 0.4*sin(6*x)".to_string()]],
    )
    .unwrap();
    let cover = build_cover(&domain, 0.2, &CoverOptions::default()).unwrap();
    let nn = DiscreteNorms::default();
    let mut rng = rng_from_seed(9);
    let f = random_field(&geom, 1, &mut rng, &nn);
    let r = assemble_and_solve(
        &cover,
        &pair,
        Complex64::new(0.01, 0.0),
        &f,
        None,
        &nn,
        &AssembleOptions { max_iter: 25, ..AssembleOptions::default() },
    );
    assert!(
        matches!(
            r,
            Err(SolveError::SeriesDiverging { .. }) | Err(SolveError::MaxIterExceeded(_))
        ),
        "expected divergence"
    );
}
