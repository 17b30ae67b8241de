//! Adaptive Gauss-Kronrod quadrature for complex-valued integrands on real
//! intervals, with the 15-point Kronrod / 7-point Gauss pair.

use num_complex::Complex64;

use crate::error::QuadError;

// Nodes and weights of the (G7, K15) pair on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One Kronrod panel: returns (K15 value, |K15 - G7| error estimate).
fn kronrod_panel(f: &mut impl FnMut(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(c);
    let mut result_g = WG[3] * fc;
    let mut result_k = WGK[7] * fc;
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        result_k += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            result_g += WG[j / 2] * (f1 + f2);
        }
    }
    result_k *= half;
    result_g *= half;
    ((result_k), (result_k - result_g).norm())
}

/// Adaptively integrate `f` over `[a, b]` to absolute tolerance `tol`.
/// Returns the value and the final error estimate.
pub fn integrate(
    mut f: impl FnMut(f64) -> Complex64,
    a: f64,
    b: f64,
    tol: f64,
    max_panels: usize,
) -> Result<(Complex64, f64), QuadError> {
    #[derive(Debug)]
    struct Panel {
        a: f64,
        b: f64,
        val: Complex64,
        err: f64,
    }
    let (val, err) = kronrod_panel(&mut f, a, b);
    let mut panels = vec![Panel { a, b, val, err }];
    loop {
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        if total_err <= tol {
            let total: Complex64 = panels.iter().map(|p| p.val).sum();
            return Ok((total, total_err));
        }
        if panels.len() >= max_panels {
            return Err(QuadError::QuadratureStall {
                err: total_err,
                panels: panels.len(),
            });
        }
        // split the worst panel
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.partial_cmp(&y.1.err).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let Panel { a, b, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (a + b);
        let (v1, e1) = kronrod_panel(&mut f, a, mid);
        let (v2, e2) = kronrod_panel(&mut f, mid, b);
        panels.push(Panel { a, b: mid, val: v1, err: e1 });
        panels.push(Panel { a: mid, b, val: v2, err: e2 });
    }
}

/// Derivative of order `k` of a holomorphic function at `z0`, via the Cauchy
/// integral formula evaluated by the trapezoid rule on a circle of radius
/// `rho` (spectrally accurate for analytic integrands).
pub fn cauchy_derivative(
    mut f: impl FnMut(Complex64) -> Complex64,
    z0: Complex64,
    k: usize,
    rho: f64,
    m: usize,
) -> Complex64 {
    let mut acc = Complex64::default();
    for j in 0..m {
        let th = 2.0 * std::f64::consts::PI * (j as f64) / (m as f64);
        let w = Complex64::from_polar(1.0, th);
        let z = z0 + rho * w;
        // f(z) / (z - z0)^{k+1} * dz, dz = i rho w dtheta
        acc += f(z) / (rho * w).powu(k as u32 + 1) * Complex64::i() * rho * w;
    }
    acc *= 2.0 * std::f64::consts::PI / (m as f64) / (2.0 * std::f64::consts::PI * Complex64::i());
    // multiply by k!
    let mut fact = 1.0;
    for i in 2..=k {
        fact *= i as f64;
    }
    acc * fact
}
