//! Shared domain types: datasets, model parameters, loading vectors,
//! interval results, and the reference minimax-rate expressions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Relative symmetry tolerance for precision matrices.
pub const OMEGA_SYMMETRY_TOL: f64 = 1e-10;

/// An observed regression instance: design matrix `x` (n rows of covariate
/// vectors) and response `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    /// Validates dimensions, finiteness, and absence of all-zero columns
    /// (column norms enter penalty denominators).
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n < 2 {
            return Err(Error::InvalidData(format!("need n >= 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidData("need p >= 1 covariates".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has length {} but x has {} rows",
                y.len(),
                n
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite entry in dataset".into()));
        }
        for j in 0..p {
            if x.column(j).iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroColumn(j));
            }
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Euclidean norms of the design columns.
    pub fn column_norms(&self) -> DVector<f64> {
        DVector::from_fn(self.p(), |j, _| self.x.column(j).norm())
    }

    /// Gram matrix X^T X / n.
    pub fn gram(&self) -> DMatrix<f64> {
        self.x.tr_mul(&self.x) / self.n() as f64
    }
}

/// Ground-truth model triple (beta, Omega, sigma) with the regularity
/// constants used by the parameter-space membership check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: DVector<f64>,
    /// Precision matrix of the covariate rows.
    pub omega: DMatrix<f64>,
    pub sigma: f64,
    /// Eigenvalue band constant: membership requires eig(omega) within [1/m1, m1].
    pub m1: f64,
    /// Noise cap: membership requires 0 < sigma <= m2.
    pub m2: f64,
}

impl ModelParams {
    pub fn sparsity(&self) -> usize {
        self.beta.iter().filter(|&&b| b != 0.0).count()
    }
}

/// A clause of the parameter-space definition that failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// ||beta||_0 exceeds k.
    Sparsity,
    /// Some eigenvalue of omega lies outside [1/m1, m1].
    EigenvalueBand,
    /// sigma is not in (0, m2].
    NoiseLevel,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Violation::Sparsity => "sparsity",
            Violation::EigenvalueBand => "eigenvalue band",
            Violation::NoiseLevel => "noise level",
        };
        f.write_str(s)
    }
}

/// Outcome of [`check_theta_membership`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MembershipReport {
    pub is_member: bool,
    pub violations: Vec<Violation>,
}

/// Checks whether `params` lies in the k-sparse parameter space:
/// ||beta||_0 <= k, eig(omega) within [1/m1, m1], 0 < sigma <= m2.
///
/// Fails with `NonSymmetricOmega` if the precision matrix is asymmetric
/// beyond the relative tolerance; eigenvalues are computed with a dense
/// symmetric solver.
pub fn check_theta_membership(params: &ModelParams, k: usize) -> Result<MembershipReport> {
    let omega = &params.omega;
    if omega.nrows() != omega.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "omega is {}x{}, expected square",
            omega.nrows(),
            omega.ncols()
        )));
    }
    if omega.nrows() != params.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "omega is {}x{} but beta has length {}",
            omega.nrows(),
            omega.ncols(),
            params.beta.len()
        )));
    }
    let scale = omega.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut max_asym = 0.0_f64;
    for i in 0..omega.nrows() {
        for j in (i + 1)..omega.ncols() {
            max_asym = max_asym.max((omega[(i, j)] - omega[(j, i)]).abs());
        }
    }
    let tol = OMEGA_SYMMETRY_TOL * scale;
    if max_asym > tol {
        return Err(Error::NonSymmetricOmega {
            max_asymmetry: max_asym,
            tolerance: tol,
        });
    }

    let mut violations = Vec::new();
    if params.sparsity() > k {
        violations.push(Violation::Sparsity);
    }
    let sym = (omega + omega.transpose()) * 0.5;
    let eigs = sym.symmetric_eigenvalues();
    let lo = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo < 1.0 / params.m1 || hi > params.m1 {
        violations.push(Violation::EigenvalueBand);
    }
    if !(params.sigma > 0.0 && params.sigma <= params.m2) {
        violations.push(Violation::NoiseLevel);
    }
    Ok(MembershipReport {
        is_member: violations.is_empty(),
        violations,
    })
}

/// Loading regime per support size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingRegime {
    Sparse,
    Dense,
}

/// A loading vector with its regime classification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Loading {
    pub xi: DVector<f64>,
    pub regime: LoadingRegime,
    /// Support size ||xi||_0.
    pub q: usize,
    /// Max/min nonzero magnitude ratio over the support (>= 1).
    pub cbar: f64,
}

/// Classifies a loading vector as sparse (q <= capital_c * k) or dense
/// (q strictly above c_dense * p^{2*gamma} while exceeding the sparse cap).
///
/// A support size between the two thresholds is reported as
/// `MiddleRegimeLoading`: no interval construction exists there.
pub fn classify_loading(
    xi: &DVector<f64>,
    p: usize,
    k: usize,
    gamma: f64,
    capital_c: f64,
    c_dense: f64,
) -> Result<Loading> {
    if xi.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "loading has length {}, expected p = {p}",
            xi.len()
        )));
    }
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::OutOfRange(format!(
            "gamma must lie in [0, 1/2), got {gamma}"
        )));
    }
    let q = xi.iter().filter(|&&v| v != 0.0).count();
    if q == 0 {
        return Err(Error::ZeroLoading);
    }
    let mut max_abs = 0.0_f64;
    let mut min_abs = f64::INFINITY;
    for &v in xi.iter().filter(|&&v| v != 0.0) {
        max_abs = max_abs.max(v.abs());
        min_abs = min_abs.min(v.abs());
    }
    let cbar = max_abs / min_abs;

    let sparse_cap = capital_c * k as f64;
    let dense_floor = c_dense * (p as f64).powf(2.0 * gamma);
    let regime = if q as f64 <= sparse_cap {
        LoadingRegime::Sparse
    } else if q as f64 > dense_floor {
        LoadingRegime::Dense
    } else {
        return Err(Error::MiddleRegimeLoading {
            q,
            sparse_cap,
            dense_floor,
        });
    };
    Ok(Loading {
        xi: xi.clone(),
        regime,
        q,
        cbar,
    })
}

/// Which interval construction produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalRegime {
    SparseLoading,
    DenseLoading,
    KnownDesign,
}

/// A closed confidence interval with its center, radius, and diagnostics.
///
/// `center` and `radius` are the primary fields; `lower`/`upper` are derived
/// at construction. A degenerate result is the singleton {0} returned when
/// the noise-scale event fails.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalResult {
    pub lower: f64,
    pub upper: f64,
    pub center: f64,
    pub radius: f64,
    pub regime: IntervalRegime,
    pub sigma_hat: f64,
    pub event_a: bool,
    pub degenerate: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

impl IntervalResult {
    pub fn new(
        center: f64,
        radius: f64,
        regime: IntervalRegime,
        sigma_hat: f64,
        diagnostics: BTreeMap<String, f64>,
    ) -> Self {
        debug_assert!(radius >= 0.0);
        Self {
            lower: center - radius,
            upper: center + radius,
            center,
            radius,
            regime,
            sigma_hat,
            event_a: true,
            degenerate: false,
            diagnostics,
        }
    }

    /// The singleton {0} interval returned on the complement of the event
    /// sigma_hat <= log p.
    pub fn degenerate(
        regime: IntervalRegime,
        sigma_hat: f64,
        diagnostics: BTreeMap<String, f64>,
    ) -> Self {
        Self {
            lower: 0.0,
            upper: 0.0,
            center: 0.0,
            radius: 0.0,
            regime,
            sigma_hat,
            event_a: false,
            degenerate: true,
            diagnostics,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn length(&self) -> f64 {
        2.0 * self.radius
    }
}

/// Which minimax-rate expression to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRegime {
    /// Sparse loading, unknown design/noise: ||xi||_2 (1/sqrt(n) + k log p / n).
    SparseUnknown,
    /// Dense loading, unknown design/noise: ||xi||_inf k sqrt(log p / n).
    DenseUnknown,
    /// Sparse loading with known identity design: ||xi||_2 / sqrt(n).
    SparseKnownIdentity,
    /// Dense loading with known design: the adaptivity lower-bound rate.
    DenseKnownAdaptivity,
}

/// Inputs to [`reference_rate`]. Logarithms are natural throughout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateQuery {
    pub regime: RateRegime,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub k1: usize,
    pub xi_l2: f64,
    pub xi_linf: f64,
    pub sigma0: f64,
}

/// Evaluates the reference minimax-rate expression with constant 1.
///
/// These are served as reference curves only; all downstream comparisons are
/// up to constants (slope and ratio checks), never absolute.
pub fn reference_rate(q: &RateQuery) -> Result<f64> {
    if q.n == 0 || q.p == 0 {
        return Err(Error::OutOfRange("n and p must be positive".into()));
    }
    if q.k > q.p {
        return Err(Error::OutOfRange(format!("k = {} exceeds p = {}", q.k, q.p)));
    }
    if q.k1 > q.k {
        return Err(Error::OutOfRange(format!(
            "k1 = {} exceeds k = {}",
            q.k1, q.k
        )));
    }
    if q.sigma0 <= 0.0 {
        return Err(Error::OutOfRange("sigma0 must be positive".into()));
    }
    let n = q.n as f64;
    let k = q.k as f64;
    let log_p = (q.p as f64).ln();
    let value = match q.regime {
        RateRegime::SparseUnknown => q.xi_l2 * (1.0 / n.sqrt() + k * log_p / n),
        RateRegime::DenseUnknown => q.xi_linf * k * (log_p / n).sqrt(),
        RateRegime::SparseKnownIdentity => q.xi_l2 / n.sqrt(),
        RateRegime::DenseKnownAdaptivity => {
            let k1 = q.k1 as f64;
            let a = (k * k1).sqrt() * (log_p / n).sqrt();
            let b = (k * (log_p / n).sqrt()).min(k.sqrt() / n.powf(0.25));
            q.xi_linf * q.sigma0 * a.max(b)
        }
    };
    Ok(value)
}
