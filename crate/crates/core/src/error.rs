//! Error types shared across the solver modules.

use thiserror::Error;

/// Errors raised while constructing or validating coefficient data.
#[derive(Debug, Error)]
pub enum CoeffError {
    #[error("matrix is not symmetric: asymmetry {0:.3e} exceeds 1e-10")]
    NotSymmetric(f64),
    #[error("matrix is not elliptic: smallest eigenvalue {0:.3e} <= 0")]
    NotElliptic(f64),
    #[error("matrix dimensions disagree: {0}x{0} vs {1}x{1}")]
    DimensionMismatch(usize, usize),
    #[error("coefficient expression error: {0}")]
    Expr(String),
}

/// Errors raised by sector sampling.
#[derive(Debug, Error)]
pub enum SectorError {
    #[error("empty sector: r_max {r_max} < lambda0 {lambda0}")]
    EmptySector { r_max: f64, lambda0: f64 },
    #[error("invalid sector parameter: {0}")]
    InvalidParameter(String),
}

/// Errors raised by the matrix-symbol calculus.
#[derive(Debug, Error)]
pub enum SymbolError {
    #[error("singular symbol: lambda outside the sector with xi = 0 (|det| = {0:.3e})")]
    SingularSymbol(f64),
    #[error("finite-difference step underflow: |xi| = {0:.3e} < 1e-8")]
    StepUnderflow(f64),
    #[error("determinant root {0} lies on the negative real axis; input violates ellipticity")]
    RootOnNegativeAxis(num_complex::Complex64),
    #[error("Vandermonde system ill conditioned: residual {0:.3e} > 1e-6")]
    IllConditioned(f64),
    #[error("square-root branch tie: Re omega = 0 for root {0}")]
    BranchTie(num_complex::Complex64),
}

/// Errors raised by quadrature routines.
#[derive(Debug, Error)]
pub enum QuadError {
    #[error("integrand decays too slowly: 2l+1 = {0} >= 2n = {1}, not absolutely convergent")]
    SlowDecay(usize, usize),
    #[error("adaptive quadrature stalled: error estimate {err:.3e} after {panels} panels")]
    QuadratureStall { err: f64, panels: usize },
}

/// Errors raised by the resolvent solvers.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("lambda = {0} violates the sector condition (on the closed negative real axis)")]
    SectorViolation(num_complex::Complex64),
    #[error("lambda = 0 with nonzero-mean right-hand side: zero mode not invertible")]
    ZeroLambdaZeroMode,
    #[error("Neumann series diverging: contraction ratio {rho:.3} >= 1 for 3 consecutive iterations")]
    SeriesDiverging { rho: f64 },
    #[error("Neumann series did not reach tolerance within {0} iterations")]
    MaxIterExceeded(usize),
    #[error("nonzero boundary data passed to a homogeneous-boundary solver")]
    NonzeroBoundaryData,
    #[error("branch cut hit: Re sqrt(lambda + |xi'|^2) <= 0 for a sampled mode")]
    BranchCutHit,
    #[error("chart degenerate: |det grad Phi| = {0:.3e} below 1e-3")]
    ChartDegenerate(f64),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("cover too coarse: {0}")]
    CoverTooCoarse(String),
    #[error("gamma too small: per-frequency solve diverged at tau = {0:.3e}")]
    GammaTooSmall(f64),
    #[error("temporal window too short: wrap-around mass {0:.3e} > 1e-6")]
    WindowTooShort(f64),
    #[error("compatibility violated: |B (grad u0 . n)| = {0:.3e} > 1e-8 on the boundary")]
    CompatibilityViolated(f64),
    #[error("moment not zero: |int R w dx| = {0:.3e} exceeds 1e-8 * scale")]
    MomentNotZero(f64),
    #[error("operator family is empty")]
    FamilyEmpty,
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

pub type Result<T, E = SolveError> = std::result::Result<T, E>;
