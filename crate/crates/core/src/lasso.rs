//! Scaled Lasso and plain Lasso with column-normalized penalties.
//!
//! Both solve penalized least squares with per-column weights
//! w_j = ||X_.j||_2 / sqrt(n), which makes the procedures invariant to
//! column rescaling. The inner solver is cyclic coordinate descent with an
//! active-set strategy; every returned fit carries a verified KKT residual.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;

/// Penalty level lambda_0 = sqrt(2.05 log p / n) used by the scaled Lasso.
pub fn default_lambda0(n: usize, p: usize) -> f64 {
    (2.05 * (p as f64).ln() / n as f64).sqrt()
}

/// Diagonal rescaling W = X D with d_j = sqrt(n) / ||X_.j||_2, so every
/// column of W has norm exactly sqrt(n).
#[derive(Debug, Clone)]
pub struct NormalizedModel {
    pub d: DVector<f64>,
    pub w: DMatrix<f64>,
}

pub fn normalize(data: &Dataset) -> Result<NormalizedModel> {
    let sqrt_n = (data.n() as f64).sqrt();
    let norms = data.column_norms();
    for (j, &c) in norms.iter().enumerate() {
        if c == 0.0 {
            return Err(Error::ZeroColumn(j));
        }
    }
    let d = DVector::from_fn(data.p(), |j, _| sqrt_n / norms[j]);
    let mut w = data.x().clone();
    for j in 0..data.p() {
        let mut col = w.column_mut(j);
        col *= d[j];
    }
    Ok(NormalizedModel { d, w })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Cap on full coordinate-descent sweeps.
    pub max_sweeps: usize,
    /// Stop when no coordinate moves more than this in one sweep.
    pub coord_tol: f64,
    /// KKT residual must come in under kkt_rel_tol * penalty level.
    pub kkt_rel_tol: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            max_sweeps: 100_000,
            coord_tol: 1e-10,
            kkt_rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LassoFit {
    pub beta_hat: DVector<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledLassoFit {
    pub beta_hat: DVector<f64>,
    pub sigma_hat: f64,
    pub lambda0: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaledLassoOptions {
    pub inner: LassoOptions,
    /// Cap on beta/sigma alternation rounds.
    pub max_outer: usize,
    /// Stop when |sigma_{t+1} - sigma_t| <= sigma_rel_tol * max(1, sigma_t).
    pub sigma_rel_tol: f64,
}

impl Default for ScaledLassoOptions {
    fn default() -> Self {
        Self {
            inner: LassoOptions::default(),
            max_outer: 500,
            sigma_rel_tol: 1e-8,
        }
    }
}

#[inline]
fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Coordinate-descent core for
///   min_beta ||y - X beta||^2 / (2n) + lambda * sum_j w_j |beta_j|
/// with w_j = ||X_.j||_2 / sqrt(n). `beta` is the warm start and is updated
/// in place; `residual` must equal y - X beta on entry. Returns sweeps used.
struct CdWorkspace<'a> {
    x: &'a DMatrix<f64>,
    n: f64,
    /// w_j^2 = ||X_.j||^2 / n, the curvature of coordinate j.
    w_sq: Vec<f64>,
    /// Penalty weights w_j.
    w: Vec<f64>,
}

impl<'a> CdWorkspace<'a> {
    fn new(data: &'a Dataset) -> Self {
        let n = data.n() as f64;
        let norms = data.column_norms();
        let w: Vec<f64> = norms.iter().map(|&c| c / n.sqrt()).collect();
        let w_sq: Vec<f64> = norms.iter().map(|&c| c * c / n).collect();
        Self {
            x: data.x(),
            n,
            w_sq,
            w,
        }
    }

    /// One pass over the given coordinates; returns the largest |update|.
    fn sweep(
        &self,
        coords: impl Iterator<Item = usize>,
        lambda: f64,
        beta: &mut DVector<f64>,
        residual: &mut DVector<f64>,
    ) -> f64 {
        let mut max_delta = 0.0_f64;
        for j in coords {
            let xj = self.x.column(j);
            let grad = xj.dot(residual) / self.n;
            let z = grad + self.w_sq[j] * beta[j];
            let new = soft_threshold(z, lambda * self.w[j]) / self.w_sq[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                residual.axpy(-delta, &xj, 1.0);
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        max_delta
    }

    /// KKT residual at the current point: for active coordinates the distance
    /// of the gradient from lambda * w_j * sign(beta_j), for inactive ones the
    /// excess of |gradient| over lambda * w_j.
    fn kkt_residual(&self, lambda: f64, beta: &DVector<f64>, residual: &DVector<f64>) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..beta.len() {
            let g = self.x.column(j).dot(residual) / self.n;
            let v = if beta[j] == 0.0 {
                (g.abs() - lambda * self.w[j]).max(0.0)
            } else {
                (g - lambda * self.w[j] * beta[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Certification tolerance: relative to the penalty level, floored at the
    /// float noise of the gradient evaluations (which caps what any KKT check
    /// can resolve when lambda is tiny).
    fn kkt_tolerance(&self, lambda: f64, opts: &LassoOptions, residual: &DVector<f64>) -> f64 {
        let grad_scale = self
            .w_sq
            .iter()
            .cloned()
            .fold(0.0_f64, f64::max)
            .max(residual.amax());
        opts.kkt_rel_tol * lambda + 64.0 * f64::EPSILON * grad_scale
    }

    /// Runs CD to convergence at a fixed penalty. Alternates passes over the
    /// active set with full passes that can activate new coordinates.
    fn solve(
        &self,
        lambda: f64,
        beta: &mut DVector<f64>,
        residual: &mut DVector<f64>,
        opts: &LassoOptions,
    ) -> Result<(usize, f64)> {
        let p = beta.len();
        let mut sweeps = 0usize;
        loop {
            // Full pass.
            let delta = self.sweep(0..p, lambda, beta, residual);
            sweeps += 1;
            if sweeps > opts.max_sweeps {
                return Err(Error::MaxIterations(opts.max_sweeps));
            }
            // Inner passes restricted to the active set.
            let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            let mut inner_delta = delta;
            while inner_delta > opts.coord_tol && !active.is_empty() {
                inner_delta = self.sweep(active.iter().copied(), lambda, beta, residual);
                sweeps += 1;
                if sweeps > opts.max_sweeps {
                    return Err(Error::MaxIterations(opts.max_sweeps));
                }
            }
            if delta <= opts.coord_tol {
                let kkt = self.kkt_residual(lambda, beta, residual);
                if kkt <= self.kkt_tolerance(lambda, opts, residual) {
                    return Ok((sweeps, kkt));
                }
                // Not yet certified; keep sweeping.
            }
        }
    }
}

/// Lasso with column-normalized penalty at a fixed level:
///   min ||y - X beta||^2 / (2n) + lambda * sum_j (||X_.j||/sqrt(n)) |beta_j|.
pub fn lasso(data: &Dataset, lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
    if !(lambda > 0.0) {
        return Err(Error::OutOfRange(format!("lambda must be > 0, got {lambda}")));
    }
    let ws = CdWorkspace::new(data);
    let mut beta = DVector::zeros(data.p());
    let mut residual = data.y().clone();
    let (iterations, kkt_residual) = ws.solve(lambda, &mut beta, &mut residual, opts)?;
    Ok(LassoFit {
        beta_hat: beta,
        lambda,
        iterations,
        kkt_residual,
    })
}

/// Scaled Lasso: the joint minimizer over (beta, sigma) of
///   ||y - X beta||^2 / (2 n sigma) + sigma / 2
///   + lambda0 * sum_j (||X_.j||/sqrt(n)) |beta_j|.
///
/// Solved by alternating a Lasso step at penalty lambda0 * sigma with the
/// stationary noise update sigma = ||y - X beta|| / sqrt(n); the objective is
/// jointly convex, so the alternation converges monotonically.
pub fn scaled_lasso(
    data: &Dataset,
    lambda0: f64,
    opts: &ScaledLassoOptions,
) -> Result<ScaledLassoFit> {
    if !(lambda0 > 0.0) {
        return Err(Error::OutOfRange(format!(
            "lambda0 must be > 0, got {lambda0}"
        )));
    }
    let n = data.n() as f64;
    let y_norm = data.y().norm();
    if y_norm == 0.0 {
        return Err(Error::DegenerateResponse);
    }

    let ws = CdWorkspace::new(data);
    let mut beta = DVector::zeros(data.p());
    let mut residual = data.y().clone();
    let mut sigma = y_norm / n.sqrt();
    let sigma_floor = 1e-12 * sigma;
    let mut outer = 0usize;

    loop {
        outer += 1;
        if outer > opts.max_outer {
            return Err(Error::MaxIterations(opts.max_outer));
        }
        let lambda = lambda0 * sigma;
        ws.solve(lambda, &mut beta, &mut residual, &opts.inner)?;
        let sigma_new = (residual.norm() / n.sqrt()).max(sigma_floor);
        let done = (sigma_new - sigma).abs() <= opts.sigma_rel_tol * sigma.max(1.0);
        sigma = sigma_new;
        if done {
            break;
        }
    }
    // Certify at the returned noise scale; sigma moved by at most the
    // relative tolerance since the last solve, far inside the KKT margin.
    let kkt = ws.kkt_residual(lambda0 * sigma, &beta, &residual);

    Ok(ScaledLassoFit {
        beta_hat: beta,
        sigma_hat: sigma,
        lambda0,
        iterations: outer,
        kkt_residual: kkt,
    })
}

/// Scaled-Lasso objective, exposed for oracle comparisons.
pub fn scaled_lasso_objective(data: &Dataset, beta: &DVector<f64>, sigma: f64, lambda0: f64) -> f64 {
    let n = data.n() as f64;
    let r = data.y() - data.x() * beta;
    let mut pen = 0.0;
    let norms = data.column_norms();
    for j in 0..data.p() {
        pen += norms[j] / n.sqrt() * beta[j].abs();
    }
    r.norm_squared() / (2.0 * n * sigma) + sigma / 2.0 + lambda0 * pen
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(seed: u64, n: usize, p: usize, beta: &[f64], sigma: f64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DVector::from_row_slice(beta);
        let eps = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        let y = &x * &b + eps;
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn default_lambda0_value() {
        // sqrt(2.05 * ln 500 / 100) = 0.35693...
        let l = default_lambda0(100, 500);
        assert!((l - 0.3569306).abs() < 1e-6, "lambda0 = {l}");
    }

    #[test]
    fn normalize_identity_when_columns_already_sqrt_n() {
        let n = 4usize;
        // Columns scaled to have norm exactly 2 = sqrt(4).
        let x = DMatrix::from_row_slice(4, 2, &[2.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        // Avoid the all-zero-row corner: dataset with nonzero y.
        let y = DVector::from_row_slice(&[1.0, 1.0, 1.0, 1.0]);
        let data = Dataset::new(x, y).unwrap();
        let nm = normalize(&data).unwrap();
        for j in 0..2 {
            assert_relative_eq!(nm.d[j], 1.0, max_relative = 1e-12);
            assert_relative_eq!(nm.w.column(j).norm(), (n as f64).sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn normalize_scale_equivariance() {
        let data = random_dataset(5, 10, 4, &[0.0; 4], 1.0);
        let nm = normalize(&data).unwrap();
        let mut x2 = data.x().clone();
        {
            let mut c = x2.column_mut(1);
            c *= 10.0;
        }
        let data2 = Dataset::new(x2, data.y().clone()).unwrap();
        let nm2 = normalize(&data2).unwrap();
        assert_relative_eq!(nm2.d[1], nm.d[1] / 10.0, max_relative = 1e-12);
        assert_relative_eq!((nm2.w.clone() - nm.w.clone()).norm(), 0.0, epsilon = 1e-10);
        for j in 0..4 {
            assert_relative_eq!(nm2.w.column(j).norm(), (10.0_f64).sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn lasso_null_threshold_gives_zero() {
        let data = random_dataset(2, 12, 5, &[0.4, 0.0, 0.0, 0.0, 0.0], 0.5);
        let n = data.n() as f64;
        let norms = data.column_norms();
        // Smallest lambda for which 0 satisfies the KKT conditions.
        let lambda_max = (0..data.p())
            .map(|j| (data.x().column(j).dot(data.y()) / n).abs() / (norms[j] / n.sqrt()))
            .fold(0.0_f64, f64::max);
        let fit = lasso(&data, lambda_max * 1.000001, &LassoOptions::default()).unwrap();
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn lasso_orthonormal_design_soft_thresholds() {
        // W^T W / n = I: the solution is coordinatewise soft-thresholding of
        // W_.j^T y / n. Built from a scaled identity block so the Gram matrix
        // is exactly the identity.
        let n = 5usize;
        let mut x = DMatrix::zeros(n, n);
        for j in 0..n {
            x[(j, j)] = (n as f64).sqrt();
        }
        let y = DVector::from_row_slice(&[3.0, -1.0, 0.2, 0.0, 5.0]);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let lambda = 0.7;
        let fit = lasso(&data, lambda, &LassoOptions::default()).unwrap();
        for j in 0..n {
            let z = x.column(j).dot(&y) / n as f64;
            let want = soft_threshold(z, lambda);
            assert_relative_eq!(fit.beta_hat[j], want, epsilon = 1e-10);
        }
    }

    #[test]
    fn lasso_small_lambda_approaches_least_squares() {
        let x = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, 0.2, 0.1, 0.2, 1.0]);
        let y = DVector::from_row_slice(&[1.0, -0.5, 0.25]);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let ls = x.lu().solve(&y).unwrap();
        let fit = lasso(&data, 1e-8, &LassoOptions::default()).unwrap();
        assert!((fit.beta_hat - ls).amax() < 1e-4);
    }

    #[test]
    fn lasso_objective_nonincreasing_over_sweeps() {
        let data = random_dataset(9, 20, 10, &[1.0, -1.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0], 0.3);
        let ws = CdWorkspace::new(&data);
        let lambda = 0.2;
        let mut beta = DVector::zeros(10);
        let mut residual = data.y().clone();
        let objective = |beta: &DVector<f64>, residual: &DVector<f64>| {
            let n = data.n() as f64;
            let pen: f64 = (0..10).map(|j| ws.w[j] * beta[j].abs()).sum();
            residual.norm_squared() / (2.0 * n) + lambda * pen
        };
        let mut prev = objective(&beta, &residual);
        for _ in 0..25 {
            ws.sweep(0..10, lambda, &mut beta, &mut residual);
            let cur = objective(&beta, &residual);
            assert!(cur <= prev + 1e-12, "objective increased: {prev} -> {cur}");
            prev = cur;
        }
    }

    #[test]
    fn scaled_lasso_zero_solution_kkt() {
        // If every column correlation is below the penalty at sigma = ||y||/sqrt(n),
        // beta = 0 and sigma = ||y||/sqrt(n) is the joint minimizer.
        let data = random_dataset(3, 40, 6, &[0.0; 6], 1.0);
        let n = data.n() as f64;
        let norms = data.column_norms();
        let sigma0 = data.y().norm() / n.sqrt();
        let needed = (0..6)
            .map(|j| (data.x().column(j).dot(data.y()) / n).abs() / (norms[j] / n.sqrt() * sigma0))
            .fold(0.0_f64, f64::max);
        let lambda0 = needed * 1.01;
        let fit = scaled_lasso(&data, lambda0, &ScaledLassoOptions::default()).unwrap();
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
        assert_relative_eq!(fit.sigma_hat, sigma0, max_relative = 1e-10);
    }

    #[test]
    fn scaled_lasso_sigma_stationarity_and_kkt() {
        let data = random_dataset(17, 60, 20, &{
            let mut b = [0.0; 20];
            b[2] = 1.0;
            b[7] = -0.8;
            b
        }, 0.5);
        let lambda0 = default_lambda0(60, 20);
        let fit = scaled_lasso(&data, lambda0, &ScaledLassoOptions::default()).unwrap();
        let resid = data.y() - data.x() * &fit.beta_hat;
        assert_relative_eq!(
            fit.sigma_hat,
            resid.norm() / (data.n() as f64).sqrt(),
            max_relative = 1e-8
        );
        assert!(fit.kkt_residual <= 1e-6 * lambda0 * fit.sigma_hat);
    }

    #[test]
    fn scaled_lasso_scale_equivariance_in_y() {
        let data = random_dataset(23, 50, 15, &{
            let mut b = [0.0; 15];
            b[0] = 1.2;
            b[4] = -0.6;
            b
        }, 0.7);
        let lambda0 = default_lambda0(50, 15);
        let fit1 = scaled_lasso(&data, lambda0, &ScaledLassoOptions::default()).unwrap();
        let c = 3.5;
        let data2 = Dataset::new(data.x().clone(), data.y() * c).unwrap();
        let fit2 = scaled_lasso(&data2, lambda0, &ScaledLassoOptions::default()).unwrap();
        assert_relative_eq!(fit2.sigma_hat, c * fit1.sigma_hat, max_relative = 1e-8);
        for j in 0..15 {
            assert!(
                (fit2.beta_hat[j] - c * fit1.beta_hat[j]).abs() <= 1e-8 * (1.0 + c * fit1.beta_hat[j].abs()),
                "coordinate {j}"
            );
        }
    }

    #[test]
    fn scaled_lasso_column_rescaling_invariance() {
        let data = random_dataset(31, 50, 10, &{
            let mut b = [0.0; 10];
            b[1] = 1.0;
            b[6] = 0.9;
            b
        }, 0.4);
        let lambda0 = default_lambda0(50, 10);
        let fit1 = scaled_lasso(&data, lambda0, &ScaledLassoOptions::default()).unwrap();

        let c = 7.0;
        let mut x2 = data.x().clone();
        {
            let mut col = x2.column_mut(1);
            col *= c;
        }
        let data2 = Dataset::new(x2, data.y().clone()).unwrap();
        let fit2 = scaled_lasso(&data2, lambda0, &ScaledLassoOptions::default()).unwrap();

        assert_relative_eq!(fit2.sigma_hat, fit1.sigma_hat, max_relative = 1e-7);
        assert_relative_eq!(fit2.beta_hat[1], fit1.beta_hat[1] / c, max_relative = 1e-6);
        let xb1 = data.x() * &fit1.beta_hat;
        let xb2 = data2.x() * &fit2.beta_hat;
        assert!((xb1 - xb2).amax() < 1e-7);
    }

    #[test]
    fn scaled_lasso_rejects_zero_response() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 1.0, 0.3, 0.7]);
        let y = DVector::zeros(3);
        let data = Dataset::new(x, y).unwrap();
        assert!(matches!(
            scaled_lasso(&data, 0.5, &ScaledLassoOptions::default()),
            Err(Error::DegenerateResponse)
        ));
    }

    #[test]
    fn scaled_lasso_kkt_monotone_over_alternation() {
        // Replicate the alternation by hand and track the KKT residual of each
        // beta step at its own penalty; it must not increase on this fixture.
        let data = random_dataset(41, 40, 8, &{
            let mut b = [0.0; 8];
            b[0] = 1.0;
            b[3] = -1.0;
            b
        }, 0.6);
        let lambda0 = default_lambda0(40, 8);
        let ws = CdWorkspace::new(&data);
        let n = data.n() as f64;
        let mut beta = DVector::zeros(8);
        let mut residual = data.y().clone();
        let mut sigma = data.y().norm() / n.sqrt();
        let loose = LassoOptions {
            max_sweeps: 4,
            coord_tol: 0.0,
            kkt_rel_tol: f64::INFINITY,
        };
        let mut history = Vec::new();
        for _ in 0..12 {
            let lambda = lambda0 * sigma;
            for _ in 0..loose.max_sweeps {
                ws.sweep(0..8, lambda, &mut beta, &mut residual);
            }
            history.push(ws.kkt_residual(lambda, &beta, &residual));
            sigma = residual.norm() / n.sqrt();
        }
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "kkt residuals {history:?}");
        }
    }
}
