//! Small dense and block-structured linear algebra helpers: complex
//! block-tridiagonal elimination (the direct solver behind the bounded-domain
//! oracles and the implicit time stepper), spectral norms, and symmetric /
//! generalized eigenvalue utilities.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

/// Solve a square complex system by LU with partial pivoting.
pub fn solve_dense(a: &CMat, b: &CVec) -> Option<CVec> {
    a.clone().lu().solve(b)
}

/// Inverse of a small complex matrix.
pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

/// Spectral (operator 2-) norm of a complex matrix via SVD.
pub fn spectral_norm(a: &CMat) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// Largest/smallest eigenvalue of a real symmetric matrix.
pub fn symmetric_eigenvalues(a: &RMat) -> Vec<f64> {
    let mut ev: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Eigenvalues of the symmetric generalized pencil (A, M) with M SPD:
/// returns the eigenvalues of M^{-1/2} A M^{-1/2}, sorted ascending.
pub fn generalized_symmetric_eigenvalues(a: &RMat, m: &RMat) -> Vec<f64> {
    let chol = m.clone().cholesky().expect("mass matrix must be SPD");
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .expect("Cholesky factor is invertible");
    let reduced = &linv * a * linv.transpose();
    // symmetrize against roundoff
    let sym = 0.5 * (&reduced + reduced.transpose());
    symmetric_eigenvalues(&sym)
}

/// Eigenvalues of `B^{-1} R` for SPD `B`, `R` (all real and positive),
/// computed from the symmetrized form `B^{-1/2} R B^{-1/2}`.
pub fn spd_pencil_eigenvalues(r: &RMat, b: &RMat) -> Vec<f64> {
    generalized_symmetric_eigenvalues(r, b)
}

/// A block-tridiagonal complex system with dense blocks of uniform size.
/// Row `i` reads: `lower[i-1] x_{i-1} + diag[i] x_i + upper[i] x_{i+1} = b_i`.
pub struct BlockTridiag {
    pub diag: Vec<CMat>,
    pub lower: Vec<CMat>,
    pub upper: Vec<CMat>,
    pub bs: usize,
}

impl BlockTridiag {
    pub fn new(diag: Vec<CMat>, lower: Vec<CMat>, upper: Vec<CMat>) -> Self {
        let bs = diag[0].nrows();
        assert_eq!(lower.len() + 1, diag.len());
        assert_eq!(upper.len() + 1, diag.len());
        Self { diag, lower, upper, bs }
    }

    pub fn nblocks(&self) -> usize {
        self.diag.len()
    }

    /// Apply the operator to a flat vector of length `nblocks * bs`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let nb = self.nblocks();
        let bs = self.bs;
        let mut out = vec![Complex64::default(); nb * bs];
        let xv = |i: usize| CVec::from_column_slice(&x[i * bs..(i + 1) * bs]);
        for i in 0..nb {
            let mut y = &self.diag[i] * xv(i);
            if i > 0 {
                y += &self.lower[i - 1] * xv(i - 1);
            }
            if i + 1 < nb {
                y += &self.upper[i] * xv(i + 1);
            }
            out[i * bs..(i + 1) * bs].copy_from_slice(y.as_slice());
        }
        out
    }

    /// Factor once for repeated solves.
    pub fn factorize(&self) -> BlockTridiagFactors {
        let nb = self.nblocks();
        let mut factors: Vec<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>> =
            Vec::with_capacity(nb);
        factors.push(self.diag[0].clone().lu());
        for i in 1..nb {
            let dinv_u = factors[i - 1]
                .solve(&self.upper[i - 1])
                .expect("singular pivot block in block-tridiagonal solve");
            let d = &self.diag[i] - &self.lower[i - 1] * &dinv_u;
            factors.push(d.lu());
        }
        BlockTridiagFactors {
            factors,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            bs: self.bs,
        }
    }

    /// Direct solve by block (Thomas) elimination.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        self.factorize().solve(b)
    }
}

/// Reusable factorization of a block-tridiagonal system.
pub struct BlockTridiagFactors {
    factors: Vec<nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>>,
    lower: Vec<CMat>,
    upper: Vec<CMat>,
    bs: usize,
}

impl BlockTridiagFactors {
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let nb = self.factors.len();
        let bs = self.bs;
        assert_eq!(b.len(), nb * bs);
        let mut rhs: Vec<CVec> = (0..nb)
            .map(|i| CVec::from_column_slice(&b[i * bs..(i + 1) * bs]))
            .collect();
        for i in 1..nb {
            let r = self.factors[i - 1].solve(&rhs[i - 1]).unwrap();
            let rnew = &rhs[i] - &self.lower[i - 1] * r;
            rhs[i] = rnew;
        }
        let mut x = vec![CVec::zeros(bs); nb];
        x[nb - 1] = self.factors[nb - 1].solve(&rhs[nb - 1]).unwrap();
        for i in (0..nb - 1).rev() {
            let r = &rhs[i] - &self.upper[i] * &x[i + 1];
            x[i] = self.factors[i].solve(&r).unwrap();
        }
        let mut flat = vec![Complex64::default(); nb * bs];
        for i in 0..nb {
            flat[i * bs..(i + 1) * bs].copy_from_slice(x[i].as_slice());
        }
        flat
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn rand_mat(rng: &mut impl Rng, n: usize) -> CMat {
        CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn block_tridiag_solve_matches_apply() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let nb = 7;
        let bs = 3;
        let diag: Vec<CMat> = (0..nb)
            .map(|_| rand_mat(&mut rng, bs) + CMat::identity(bs, bs) * Complex64::new(4.0, 1.0))
            .collect();
        let lower: Vec<CMat> = (0..nb - 1).map(|_| rand_mat(&mut rng, bs)).collect();
        let upper: Vec<CMat> = (0..nb - 1).map(|_| rand_mat(&mut rng, bs)).collect();
        let sys = BlockTridiag::new(diag, lower, upper);
        let x0: Vec<Complex64> = (0..nb * bs)
            .map(|_| Complex64::new(rng.gen::<f64>(), rng.gen::<f64>()))
            .collect();
        let b = sys.apply(&x0);
        let x = sys.solve(&b);
        for (a, e) in x.iter().zip(&x0) {
            assert!((a - e).norm() < 1e-10);
        }
    }

    #[test]
    fn generalized_eigen_diagonal_case() {
        // A = diag(2, 8), M = diag(1, 4) -> eigenvalues {2, 2}
        let a = RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 8.0]));
        let m = RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 4.0]));
        let ev = generalized_symmetric_eigenvalues(&a, &m);
        assert!((ev[0] - 2.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![
            Complex64::new(0.0, 3.0),
            Complex64::new(1.0, 0.0),
        ]));
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-12);
    }
}
