//! Confidence intervals for linear functionals xi^T beta in high-dimensional
//! Gaussian-design linear regression.
//!
//! The crate provides the estimation pipeline (scaled Lasso, score-vector QP,
//! de-biased and split-sample functional estimators), the three interval
//! families (sparse loading, dense loading, known design), restricted-
//! eigenvalue certificates and their feasible surrogates, exact calculators
//! for the information-theoretic lower bounds, and a deterministic Monte
//! Carlo harness that measures coverage and length at desk scale.

pub mod certificates;
pub mod ci;
pub mod error;
pub mod lasso;
pub mod lower_bound;
pub mod model;
pub mod normal;
pub mod sampler;
pub mod score;
pub mod sim;

pub use error::{Error, Result};

pub use model::{
    check_theta_membership, classify_loading, reference_rate, Dataset, IntervalRegime,
    IntervalResult, Loading, LoadingRegime, MembershipReport, ModelParams, RateQuery, RateRegime,
    Violation,
};

pub use normal::{gaussian_quantile, normal_cdf, normal_pdf, normal_sf};

pub use sampler::{sample_instance, BetaSpec, CovarianceKind, SamplerConfig};

pub use lasso::{
    default_lambda0, lasso, normalize, scaled_lasso, LassoFit, LassoOptions, NormalizedModel,
    ScaledLassoFit, ScaledLassoOptions,
};

pub use score::{
    debiased_estimate, default_lambda_n, solve_score, split_estimate, DebiasedEstimate,
    ScoreOptions, ScoreSolution, SplitEstimate,
};

pub use certificates::{
    c1_constant, c2_constant, cone_alpha0, omega_surrogate, restricted_eigenvalue, Constants,
    OmegaSurrogate, ReEstimate, ReMode,
};

pub use ci::{ci_dense, ci_known_design, ci_sparse, CiConfig, CiMode};

pub use lower_bound::{
    adaptivity_lower_curve, chisq_mixture, hypergeom_mgf_bound_check, separation_gap,
    two_point_length_bound, tv_upper_from_chisq, LowerBoundPoint, MixtureSpec, TwoPointProblem,
};

pub use sim::{
    derive_seed, nonadaptivity_demo, rate_sweep_report, run_experiment, splitmix64,
    wilson_interval, CellReport, CiFamily, CoverageReport, ExperimentConfig, NonadaptivityReport,
    RateSweepReport, Sweep, SweepParam, XiSpec,
};
