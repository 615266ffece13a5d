use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precision matrix is not symmetric: max asymmetry {max_asymmetry:e} exceeds tolerance {tolerance:e}")]
    NonSymmetricOmega { max_asymmetry: f64, tolerance: f64 },

    #[error(
        "loading support {q} falls in the middle regime: neither q <= {sparse_cap} (sparse) nor q > {dense_floor} (dense)"
    )]
    MiddleRegimeLoading {
        q: usize,
        sparse_cap: f64,
        dense_floor: f64,
    },

    #[error("loading vector is identically zero")]
    ZeroLoading,

    #[error("covariance matrix is not symmetric positive definite")]
    NotSpd,

    #[error("gram matrix is not positive semidefinite")]
    NotPsd,

    #[error("response vector has zero norm; scaled Lasso noise scale degenerates")]
    DegenerateResponse,

    #[error("solver did not converge within {0} iterations")]
    MaxIterations(usize),

    #[error("design matrix has an all-zero column (index {0})")]
    ZeroColumn(usize),

    #[error("score QP infeasible at lambda_n = {lambda_n} after {escalations} escalations")]
    InfeasibleScoreQp { lambda_n: f64, escalations: usize },

    #[error("sample too small to split: n = {0} < 4")]
    DegenerateSplit(usize),

    #[error("brute-force restricted-eigenvalue oracle only runs for p <= {max_p} and k <= {max_k} (got p = {p}, k = {k})")]
    OracleTooLarge {
        p: usize,
        k: usize,
        max_p: usize,
        max_k: usize,
    },

    #[error("eigenvalue bounds out of order: lambda_min = {lambda_min} must satisfy 0 < lambda_min <= lambda_max = {lambda_max}")]
    BadEigenOrder { lambda_min: f64, lambda_max: f64 },

    #[error("restricted-eigenvalue surrogate is zero; the curvature-based radius branch is unavailable")]
    ZeroKappa,

    #[error("chi-square series diverges: c * m * rho^2 = {0} >= 1")]
    DivergentChiSq(f64),

    #[error("separation gap diverges: m * rho^2 = {0} >= 1")]
    GapDiverges(f64),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
