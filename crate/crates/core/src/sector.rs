//! The resolvent parameter sector and sampling strategies over it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SectorError;

/// The sector of resolvent parameters: all complex `lambda` with
/// `|arg lambda| <= pi - epsilon` and `|lambda| >= lambda0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub epsilon: f64,
    pub lambda0: f64,
}

impl Sector {
    pub fn new(epsilon: f64, lambda0: f64) -> Result<Self, SectorError> {
        if !(epsilon > 0.0 && epsilon < std::f64::consts::FRAC_PI_2) {
            return Err(SectorError::InvalidParameter(format!(
                "epsilon must lie in (0, pi/2), got {epsilon}"
            )));
        }
        if !(lambda0 > 0.0) {
            return Err(SectorError::InvalidParameter(format!(
                "lambda0 must be positive, got {lambda0}"
            )));
        }
        Ok(Self { epsilon, lambda0 })
    }

    /// Membership test for the truncated sector.
    pub fn contains(&self, lambda: Complex64) -> bool {
        let r = lambda.norm();
        r >= self.lambda0 && lambda.arg().abs() <= std::f64::consts::PI - self.epsilon + 1e-14
    }

    /// Membership in the untruncated sector (no modulus floor, excludes 0).
    pub fn contains_untruncated(&self, lambda: Complex64) -> bool {
        lambda != Complex64::new(0.0, 0.0)
            && lambda.arg().abs() <= std::f64::consts::PI - self.epsilon + 1e-14
    }
}

/// Sampling grid over the sector: `n_rays` angles equi-spaced in
/// `[-(pi - eps), pi - eps]` crossed with `n_radii` log-spaced moduli in
/// `[lambda0, r_max]`. Every returned point is a sector member.
pub fn sample_sector(
    sector: &Sector,
    n_rays: usize,
    n_radii: usize,
    r_max: f64,
) -> Result<Vec<Complex64>, SectorError> {
    if r_max < sector.lambda0 {
        return Err(SectorError::EmptySector {
            r_max,
            lambda0: sector.lambda0,
        });
    }
    if n_rays < 1 || n_radii < 1 {
        return Err(SectorError::InvalidParameter(
            "n_rays and n_radii must be >= 1".into(),
        ));
    }
    let theta_max = std::f64::consts::PI - sector.epsilon;
    let mut out = Vec::with_capacity(n_rays * n_radii);
    for i in 0..n_rays {
        let theta = if n_rays == 1 {
            0.0
        } else {
            -theta_max + 2.0 * theta_max * (i as f64) / ((n_rays - 1) as f64)
        };
        for j in 0..n_radii {
            let t = if n_radii == 1 {
                0.0
            } else {
                (j as f64) / ((n_radii - 1) as f64)
            };
            let rho = sector.lambda0 * (r_max / sector.lambda0).powf(t);
            out.push(Complex64::from_polar(rho, theta));
        }
    }
    debug_assert!(out.iter().all(|l| sector.contains(*l)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_point_sector() {
        let s = Sector::new(PI / 2.0 - 1e-9, 1.0).unwrap();
        let pts = sample_sector(&s, 1, 1, 1.0).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn three_rays_forced_angles() {
        let s = Sector::new(PI / 4.0, 1.0).unwrap();
        let pts = sample_sector(&s, 3, 1, 1.0).unwrap();
        let expected = [-3.0 * PI / 4.0, 0.0, 3.0 * PI / 4.0];
        for (p, th) in pts.iter().zip(expected) {
            assert!((p.norm() - 1.0).abs() < 1e-12);
            assert!((p.arg() - th).abs() < 1e-12);
        }
    }

    #[test]
    fn all_members_under_membership_predicate() {
        let s = Sector::new(PI / 4.0, 2.0).unwrap();
        let pts = sample_sector(&s, 5, 4, 100.0).unwrap();
        assert_eq!(pts.len(), 20);
        assert!(pts.iter().all(|l| s.contains(*l)));
    }

    #[test]
    fn empty_sector_rejected() {
        let s = Sector::new(PI / 4.0, 2.0).unwrap();
        assert!(matches!(
            sample_sector(&s, 2, 2, 1.0),
            Err(SectorError::EmptySector { .. })
        ));
    }

    #[test]
    fn membership_closed_under_conjugation() {
        let s = Sector::new(PI / 6.0, 0.5).unwrap();
        for &l in &[
            Complex64::new(1.0, 2.0),
            Complex64::new(-3.0, 0.5),
            Complex64::new(0.1, -0.2),
            Complex64::from_polar(7.0, 2.8),
        ] {
            assert_eq!(s.contains(l), s.contains(l.conj()));
        }
    }
}
